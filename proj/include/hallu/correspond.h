#ifndef HALLU_CORRESPOND_H_
#define HALLU_CORRESPOND_H_

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "hallu/image.h"
#include "hallu/patch.h"

namespace hallu {

// Nearest-neighbor field of one candidate image: one transform per top-left
// patch anchor of the target, grid (target_h - z + 1) x (target_w - z + 1).
struct NNF {
  int grid_w = 0;
  int grid_h = 0;
  int z = 0;
  // Index of the candidate image this field points into.
  int candidate = 0;
  std::vector<PatchTransform> entries;

  NNF() = default;
  NNF(int target_w, int target_h, int patch_size, int candidate_index);

  int target_w() const { return grid_w + z - 1; }
  int target_h() const { return grid_h + z - 1; }
  PatchTransform& at(int x, int y) { return entries[static_cast<size_t>(y) * grid_w + x]; }
  const PatchTransform& at(int x, int y) const {
    return entries[static_cast<size_t>(y) * grid_w + x];
  }
};

struct SearchConfig {
  int patch_size = 32;
  double lambda = 5.0;
  // Random search is confined to a (2r+1)^2 box around the entry's position
  // at the start of the call. r <= 0 searches the whole candidate.
  int search_radius = 10;
  // Scan-order passes per search() call, alternating direction.
  int iterations = 5;
  bool allow_similarity = true;
  bool allow_reflection = true;
  float scale_min = 0.9f;
  float scale_max = 1.1f;
  float theta_max = static_cast<float>(std::numbers::pi / 4.0);
  uint64_t seed = 0;
  int workers = 0;
  // Anchor rows per independently scanned band; band boundaries shift by half
  // a band on odd passes so propagation crosses them.
  int band_rows = 16;
};

// Strategy for the first-scale NNFs.
class NnfInitializer {
 public:
  virtual ~NnfInitializer() = default;
  virtual std::vector<NNF> initialize(const ImageBuf& target,
                                      const std::vector<ImageBuf>& candidates,
                                      const SearchConfig& cfg) const = 0;
};

// Coarse-to-fine dense matcher: exhaustive translation search at the coarsest
// pyramid level (at most 64 px wide, at least 4 levels when the images allow),
// then parent propagation plus a +/-2 px refinement at every finer level.
class CoarseToFineInitializer : public NnfInitializer {
 public:
  std::vector<NNF> initialize(const ImageBuf& target, const std::vector<ImageBuf>& candidates,
                              const SearchConfig& cfg) const override;
};

// Candidates smaller than the patch are skipped with a warning; throws
// NoCandidatesError when none is usable.
std::vector<NNF> init_nnfs(const ImageBuf& target, const std::vector<ImageBuf>& candidates,
                           const SearchConfig& cfg);

// Regrids NNFs onto a target grown by c. Each new anchor copies the nearest
// old anchor's entry; its source position is the old one scaled by c plus
// the sub-anchor offset, clamped to the candidate. Distances are marked stale
// (NaN) and are rebuilt by the next search().
std::vector<NNF> upsample_nnfs(const std::vector<NNF>& nnfs, double c, int target_w,
                               int target_h, const std::vector<ImageBuf>& candidates);

// Generalized PatchMatch over every NNF (propagation + radius-limited random
// search over translation, scale, rotation and reflection). Distances are
// recomputed against `target` first; an entry only changes when a strictly
// better transform is found. `stream` decorrelates RNG streams of successive
// calls.
std::vector<NNF> search(const ImageBuf& target, std::vector<NNF> nnfs,
                        const std::vector<ImageBuf>& candidates, const SearchConfig& cfg,
                        uint64_t stream = 0);

// Recomputes one entry's distance and color adjustment from scratch.
double entry_distance(const ImageBuf& target, const ImageBuf& candidate, int ax, int ay,
                      const PatchTransform& t, int z, double lambda,
                      ColorAdjustment* adj = nullptr);

// Diagnostic dump: 16-byte header ("NNF1", grid w, grid h, candidate; u32 LE)
// followed by one 29-byte little-endian record per entry: anchor x, y (u32),
// source x, y, scale, theta (f32), reflect (u8), dist (f32).
void write_nnf(const NNF& nnf, const std::filesystem::path& path);
NNF read_nnf(const std::filesystem::path& path, int patch_size);

}  // namespace hallu

#endif  // HALLU_CORRESPOND_H_
