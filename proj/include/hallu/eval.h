#ifndef HALLU_EVAL_H_
#define HALLU_EVAL_H_

#include <cstdint>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "hallu/image.h"
#include "hallu/pipeline.h"

namespace hallu {

// Value returned by psnr() for identical images.
inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

// 10 log10(255^2 / MSE) over all channels. Throws std::invalid_argument on a
// dims mismatch.
double psnr(const ImageBuf& img, const ImageBuf& ref);

// RMS of area(output -> dims(input)) - input. `output` must have dims
// round(a * dims(input)).
double reconstruction_error(const ImageBuf& output, const ImageBuf& input, double a);

struct GaussianNoise {
  double sigma = 1.0;
};

struct MotionBlur {
  int length = 1;
  // Direction of motion in radians, 0 = horizontal.
  double angle = 0.0;
};

using Degradation = std::variant<GaussianNoise, MotionBlur>;

// Additive Gaussian noise (clamped to [0,255]) or a normalized line kernel of
// `length` taps along `angle` with replicate borders. Deterministic per seed.
ImageBuf degrade(const ImageBuf& img, const Degradation& kind, uint64_t seed);

struct BtResult {
  std::vector<double> scores;
  int baseline = 0;
  int iterations = 0;

  // e^{s_i} / (e^{s_i} + e^{s_j}).
  double probability(int i, int j) const;
};

struct BtOptions {
  int baseline = 0;
  double tolerance = 1e-8;
  int max_iterations = 100000;
};

// Maximum-likelihood Bradley-Terry scores from counts[i][j] = wins of i over
// j, fitted with minorization-maximization updates. Scores are shifted so the
// baseline method scores 0. Throws EstimationError naming the strongly
// connected components when the win graph is not strongly connected (the
// likelihood then has no finite maximizer).
BtResult bt_scores(const std::vector<std::vector<double>>& counts, const BtOptions& opts = {});

struct SelfOracleReport {
  double psnr_ours = 0.0;
  double psnr_bicubic = 0.0;
  double gain = 0.0;
  double reconstruction_rms = 0.0;
  // The ground truth itself is the sample, so the duplicate guard is off.
  bool oracle_mode = true;
  ImageBuf output;
  ImageBuf bicubic;
  // Per-iteration diagnostics of the hallucination run.
  std::vector<IterationStats> stats;
};

// Downsamples gt by a, hallucinates it back with gt as the only sample and
// compares the result and a bicubic upsample against gt.
SelfOracleReport self_oracle(const ImageBuf& gt, double a, const HallucinationConfig& cfg);

}  // namespace hallu

#endif  // HALLU_EVAL_H_
