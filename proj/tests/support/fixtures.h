#ifndef HALLU_TESTS_FIXTURES_H_
#define HALLU_TESTS_FIXTURES_H_

// Shared test fixtures and independent reference implementations used as
// oracles. Nothing here calls the library routine it is meant to check.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hallu/correspond.h"
#include "hallu/fuse.h"
#include "hallu/image.h"

namespace hallu::testing {

std::filesystem::path data_path(const std::string& name);

// Uniform noise in [lo, hi].
ImageBuf noise_image(int w, int h, uint64_t seed, double lo = 0.0, double hi = 255.0);

// Smooth random texture: sum of a few random sinusoids per channel, [0,255].
ImageBuf smooth_texture(int w, int h, uint64_t seed);

// Crop (x, y, w, h) of img.
ImageBuf crop(const ImageBuf& img, int x, int y, int w, int h);

// Horizontal mirror.
ImageBuf mirror(const ImageBuf& img);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Reference patch distance with color adjustment, computed directly from the
// definitions: bilinear samples with clamped coordinates, gradients as
// forward differences of the warped patch, population statistics.
double reference_distance(const ImageBuf& target, const ImageBuf& source, int ax, int ay,
                          const PatchTransform& t, int z, double lambda);

// Exhaustive translation-only nearest neighbor field.
struct ExhaustiveResult {
  std::vector<double> dist;
  std::vector<int> sx;
  std::vector<int> sy;
  double mean() const;
};
ExhaustiveResult exhaustive_nnf(const ImageBuf& target, const ImageBuf& source, int z,
                                double lambda);

// Brute-force coherence: loops over the whole grid and tests every pair.
double brute_coherence(const NNF& nnf, int px, int py, int window,
                       const CoherenceThresholds& th);

// Brute-force argmin merge.
NNFMap brute_merge_winners(const std::vector<NNF>& nnfs, const NNFMap* prev, double alpha_coh,
                           double alpha_con, int window, const CoherenceThresholds& th);

// Brute-force majority filter.
NNFMap brute_majority(const NNFMap& map, int kernel);

// Brute-force per-pixel weighted mean of the adjusted source patches.
VoteTarget brute_vote(int w, int h, const NNFMap& map, const std::vector<NNF>& nnfs,
                      const std::vector<ImageBuf>& candidates,
                      const std::vector<double>& weights);

// Dense direct solve (Eigen LDLT) of (I + lambda D^T D) x = c + lambda D^T g.
ImageBuf dense_poisson(const VoteTarget& vt, double lambda);

}  // namespace hallu::testing

#endif  // HALLU_TESTS_FIXTURES_H_
