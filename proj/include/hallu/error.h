#ifndef HALLU_ERROR_H_
#define HALLU_ERROR_H_

#include <stdexcept>
#include <string>

namespace hallu {

// Argument validation uses std::invalid_argument. Everything else the library
// raises derives from Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OutOfBoundsError : public Error {
 public:
  using Error::Error;
};

class NoCandidatesError : public Error {
 public:
  using Error::Error;
};

class InputTooSmallError : public Error {
 public:
  using Error::Error;
};

class NoSamplesError : public Error {
 public:
  using Error::Error;
};

class ImageIoError : public Error {
 public:
  using Error::Error;
};

class EstimationError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual, int iterations)
      : Error(what), residual_(residual), iterations_(iterations) {}
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

}  // namespace hallu

#endif  // HALLU_ERROR_H_
