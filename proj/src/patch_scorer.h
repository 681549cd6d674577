#ifndef HALLU_SRC_PATCH_SCORER_H_
#define HALLU_SRC_PATCH_SCORER_H_

#include <array>
#include <limits>
#include <type_traits>
#include <vector>

#include "hallu/image.h"
#include "hallu/patch.h"

namespace hallu::detail {

// Image plus its gradient field and per-channel integral images of values
// and squared values, so patch moments cost O(1). Colors and gradients are
// also packed per pixel as 4-lane rgb groups (lane 3 zero), one plane each
// for colors, gx and gy, in both float and double, so one bilinear tap
// fetches a whole group at once and neighboring texels are contiguous.
class ScoringImage {
 public:
  explicit ScoringImage(const ImageBuf& img);

  const ImageBuf& image() const { return *img_; }
  const GradientField& grad() const { return grad_; }
  int width() const { return img_->width(); }
  int height() const { return img_->height(); }

  void moments(int x, int y, int z, std::array<double, 3>& mean,
               std::array<double, 3>& stddev) const;

  template <typename T>
  const T* color_texel(int x, int y) const {
    return texels<T>().color.data() + offset(x, y);
  }
  template <typename T>
  const T* gx_texel(int x, int y) const {
    return texels<T>().gx.data() + offset(x, y);
  }
  template <typename T>
  const T* gy_texel(int x, int y) const {
    return texels<T>().gy.data() + offset(x, y);
  }

 private:
  const ImageBuf* img_;
  GradientField grad_;
  std::array<std::vector<double>, 3> sum_;
  std::array<std::vector<double>, 3> sq_;
  template <typename T>
  struct Texels {
    std::vector<T> color;
    std::vector<T> gx;
    std::vector<T> gy;
  };

  size_t offset(int x, int y) const {
    return (static_cast<size_t>(y) * img_->width() + x) * 4;
  }
  template <typename T>
  const Texels<T>& texels() const {
    if constexpr (std::is_same_v<T, float>) {
      return tex_f_;
    } else {
      return tex_d_;
    }
  }

  Texels<float> tex_f_;
  Texels<double> tex_d_;
};

// Reusable per-thread buffers for the transformed-patch path.
struct ScorerScratch {
  std::vector<int> pixel;
  std::vector<int> dx;
  std::vector<int> dy;
  std::vector<float> weights_f;
  std::vector<float> colors_f;
  std::vector<double> weights_d;
  std::vector<double> colors_d;
};

// Color-adjusted patch distance between a target anchor and a transformed
// source patch. evaluate() works in float and returns +infinity as soon as
// the partial sum exceeds `bound`; evaluate_exact() works in double and
// agrees with a from-scratch patch_distance to about 1e-12 relative.
class PatchScorer {
 public:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  PatchScorer(const ScoringImage& target, const ScoringImage& source, int z, double lambda)
      : target_(target), source_(source), z_(z), lambda_(lambda) {}

  double evaluate(int ax, int ay, const PatchTransform& t, double bound, ColorAdjustment& adj,
                  ScorerScratch& scratch) const;
  double evaluate_exact(int ax, int ay, const PatchTransform& t, ColorAdjustment& adj,
                        ScorerScratch& scratch) const;

  int z() const { return z_; }

 private:
  template <typename T>
  double dispatch(int ax, int ay, const PatchTransform& t, double bound, ColorAdjustment& adj,
                  ScorerScratch& scratch) const;
  template <typename T>
  double evaluate_translation(int ax, int ay, int sx, int sy, double bound,
                              ColorAdjustment& adj) const;
  template <typename T>
  double evaluate_general(int ax, int ay, const PatchTransform& t, double bound,
                          ColorAdjustment& adj, ScorerScratch& scratch) const;

  const ScoringImage& target_;
  const ScoringImage& source_;
  int z_;
  double lambda_;
};

}  // namespace hallu::detail

#endif  // HALLU_SRC_PATCH_SCORER_H_
