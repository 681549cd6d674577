#ifndef HALLU_PIPELINE_H_
#define HALLU_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hallu/correspond.h"
#include "hallu/fuse.h"
#include "hallu/image.h"
#include "hallu/samples.h"

namespace hallu {

struct ScaleStep {
  int width = 0;
  int height = 0;
  // Cumulative magnification c^k relative to the input.
  double factor = 1.0;
  // Injection weight 0.8^(k-1).
  double alpha = 1.0;
  int iterations = 0;
};

struct ScaleSchedule {
  double magnification = 1.0;
  int scale_count = 0;
  double step = 1.0;
  std::vector<ScaleStep> steps;  // steps[k-1] describes scale k
};

struct HallucinationConfig {
  int patch_size = 32;
  double lambda = 5.0;
  double alpha_coh = 0.0005;
  double alpha_con = 0.05;
  int search_radius = 10;
  int max_samples = 8;
  int pm_iterations = 5;
  float scale_min = 0.9f;
  float scale_max = 1.1f;
  float theta_max = static_cast<float>(std::numbers::pi / 4.0);
  bool allow_reflection = true;
  double alpha_decay = 0.8;
  double target_step = 1.2;
  double poisson_lambda = 5.0;
  uint64_t seed = 0;
  int workers = 0;

  // Diagnostics.
  std::filesystem::path dump_intermediate;
  std::filesystem::path dump_nnf;
  std::filesystem::path log_csv;

  SearchConfig search_config() const;
  FuseConfig fuse_config() const;
  // Throws std::invalid_argument when a parameter is out of range.
  void validate() const;
};

// n = ceil(log a / log 1.2), c = a^(1/n), dims(k) = round(c^k * dims),
// alpha(k) = 0.8^(k-1), iters(k) = ceil(8 - 7 (k-1)/(n-1)) (8 when n == 1).
ScaleSchedule compute_schedule(double magnification, int width, int height, int patch_size = 32,
                               double target_step = 1.2, double alpha_decay = 0.8);

struct CandidateSet {
  std::vector<ImageBuf> candidates;
  std::vector<ImageBuf> lowpass;
  // Index into the sample list each candidate came from.
  std::vector<int> sample_index;
};

// Resizes every sample to the scale's area (aspect preserved) and builds the
// low-pass variants used on the first iteration of the scale. Samples that end
// up smaller than the patch are dropped with a warning.
CandidateSet prepare_candidates(const std::vector<ImageBuf>& samples, int width, int height,
                                double c, int patch_size = 32);

// (L, H) = freq_split(ik, dims(i0));
// result = H + alpha * up(i0) + (1 - alpha) * L, evaluated as
// ik + alpha * (up(i0) - L).
ImageBuf inject(const ImageBuf& i0, const ImageBuf& ik, double alpha, double ck);

struct EnergyTerms {
  double recon = 0.0;
  double patch = 0.0;
};

// Diagnostic energy: recon = alpha * sum (area(ik -> dims(i0)) - i0)^2,
// patch = sum over anchors of cached d + alpha_coh * Coherence +
// alpha_con * Contribution for the winning NNF (Contribution from `map`).
EnergyTerms energy(const ImageBuf& ik, const ImageBuf& i0, const std::vector<NNF>& nnfs,
                   const NNFMap& map, const HallucinationConfig& cfg, double alpha);

struct IterationStats {
  int scale = 0;
  int iteration = 0;
  EnergyTerms energy;
  // Fraction of anchors sourced from each sample.
  std::vector<double> contribution;
};

using ProgressCallback = std::function<void(const IterationStats&)>;

struct HallucinationResult {
  ImageBuf image;
  ScaleSchedule schedule;
  std::vector<IterationStats> stats;
  std::vector<int> used_samples;
};

// The full multi-scale alternating optimization. Returns the final image
// clamped to [0,255].
HallucinationResult hallucinate(const ImageBuf& i0, const std::vector<ImageBuf>& samples,
                                double magnification, const HallucinationConfig& cfg,
                                const ProgressCallback& progress = {});

// Same, but the target size is given explicitly (used by restore mode).
HallucinationResult hallucinate_to(const ImageBuf& i0, const std::vector<ImageBuf>& samples,
                                   int out_w, int out_h, const HallucinationConfig& cfg,
                                   const ProgressCallback& progress = {});

}  // namespace hallu

#endif  // HALLU_PIPELINE_H_
