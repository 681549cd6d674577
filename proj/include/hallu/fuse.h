#ifndef HALLU_FUSE_H_
#define HALLU_FUSE_H_

#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "hallu/correspond.h"
#include "hallu/image.h"

namespace hallu {

// Winning NNF per target anchor. Values index the NNF list handed to merge()
// (which equals the candidate index when no candidate was skipped).
struct NNFMap {
  int grid_w = 0;
  int grid_h = 0;
  std::vector<uint8_t> index;

  NNFMap() = default;
  NNFMap(int w, int h, uint8_t fill = 0)
      : grid_w(w), grid_h(h), index(static_cast<size_t>(w) * h, fill) {}

  uint8_t& at(int x, int y) { return index[static_cast<size_t>(y) * grid_w + x]; }
  uint8_t at(int x, int y) const { return index[static_cast<size_t>(y) * grid_w + x]; }
};

struct VoteTarget {
  ImageBuf colors;
  GradientField gradients;
  std::vector<double> weights;
};

struct CoherenceThresholds {
  double position = 2.0;
  double scale = 0.01;
  double theta = std::numbers::pi / 20.0;
};

struct FuseConfig {
  double alpha_coh = 0.0005;
  double alpha_con = 0.05;
  // Side of the square anchor window used for coherence (33 -> radius 16).
  int coherence_window = 33;
  // Majority kernel side; 0 means "patch size".
  int majority_kernel = 0;
  double min_vote_weight = 1e-4;
  // Gradient weight of the screened Poisson reconstruction.
  double poisson_lambda = 5.0;
  double poisson_tolerance = 1e-4;
  int poisson_max_iterations = 5000;
  CoherenceThresholds thresholds;
  int workers = 0;
};

// True iff the two entries' offsets (source - anchor) agree within 2 px per
// axis, scales within 0.01, rotations within pi/20 and reflections match.
bool check_coherence(const PatchTransform& t1, int x1, int y1, const PatchTransform& t2, int x2,
                     int y2, const CoherenceThresholds& th = {});

// -(coherent neighbors of p) / (in-grid neighbors of p), self excluded, over a
// window x window anchor neighborhood. In [-1, 0].
double coherence(int px, int py, const NNF& nnf, int window = 33,
                 const CoherenceThresholds& th = {});

// Coherence of every anchor of `nnf`.
std::vector<double> coherence_field(const NNF& nnf, int window, const CoherenceThresholds& th,
                                    int workers);

// -(entries of prev_map equal to m) / (entries of prev_map). In [-1, 0].
double contribution(int m, const NNFMap& prev_map);

// Per-anchor argmin of d + alpha_coh * Coherence + alpha_con * Contribution,
// ties to the lowest index. Contribution is 0 without a previous map.
NNFMap merge_winners(const std::vector<NNF>& nnfs, const NNFMap* prev_map, const FuseConfig& cfg);

// merge_winners followed by majority smoothing with a patch-sized kernel.
NNFMap merge(const std::vector<NNF>& nnfs, const NNFMap* prev_map, const FuseConfig& cfg);

// Replaces every entry by the most frequent index in the kernel x kernel
// window (offsets -k/2 .. k - 1 - k/2, clipped at the borders); ties go to
// the smallest index.
NNFMap majority_smooth(const NNFMap& map, int kernel, int label_count = 0);

// Coherency weight of every anchor's winning patch: fraction of its in-grid
// window neighbors whose winning entry comes from the same NNF and is
// coherent with it, floored at cfg.min_vote_weight.
std::vector<double> vote_weights(const NNFMap& map, const std::vector<NNF>& nnfs,
                                 const FuseConfig& cfg);

// Coherency-weighted average of the color-adjusted source patches (colors and
// gradients) at every covered pixel.
VoteTarget vote(int target_w, int target_h, const NNFMap& map, const std::vector<NNF>& nnfs,
                const std::vector<ImageBuf>& candidates, const FuseConfig& cfg);

// Same accumulation with caller-provided per-anchor weights.
VoteTarget vote_weighted(int target_w, int target_h, const NNFMap& map,
                         const std::vector<NNF>& nnfs, const std::vector<ImageBuf>& candidates,
                         const std::vector<double>& weights, int workers);

// Per channel minimizer of sum (I - colors)^2 + lambda * sum |grad I - g|^2
// over interior forward-difference edges (Neumann boundary), solved with
// Jacobi-preconditioned conjugate gradients to an infinity-norm residual of
// cfg.poisson_tolerance. Throws SolverError when it does not converge.
ImageBuf screened_poisson(const VoteTarget& vt, const FuseConfig& cfg);

}  // namespace hallu

#endif  // HALLU_FUSE_H_
