#ifndef HALLU_PATCH_H_
#define HALLU_PATCH_H_

#include <array>
#include <span>
#include <vector>

#include "hallu/image.h"

namespace hallu {

// Per-channel gain/bias applied to a source patch so it better matches its
// target: colors -> gain * colors + bias.
struct ColorAdjustment {
  static constexpr double kGainMin = 1.0;
  static constexpr double kGainMax = 1.3;
  static constexpr double kBiasLimit = 20.0;
  // Below this source std-dev only the bias is applied.
  static constexpr double kMinSourceStdDev = 5.0;

  std::array<double, 3> gain{1.0, 1.0, 1.0};
  std::array<double, 3> bias{0.0, 0.0, 0.0};

  static ColorAdjustment identity() { return {}; }
  friend bool operator==(const ColorAdjustment&, const ColorAdjustment&) = default;
};

// Similarity transform of a z x z patch into a source image. (sx, sy) is the
// top-left corner the patch would have under the identity transform; scale,
// rotation and the optional horizontal reflection act about the patch center.
struct PatchTransform {
  float sx = 0.0f;
  float sy = 0.0f;
  float scale = 1.0f;
  float theta = 0.0f;
  bool reflect = false;
  double dist = 0.0;
  ColorAdjustment adjust;

  bool is_integer_translation() const;
};

// Colors and gradients of a z x z patch, channel-planar (3 planes each).
struct Patch {
  int z = 0;
  std::vector<double> colors;
  std::vector<double> gx;
  std::vector<double> gy;

  Patch() = default;
  explicit Patch(int size);

  size_t plane_size() const { return static_cast<size_t>(z) * z; }
  double& color(int c, int u, int v) { return colors[c * plane_size() + v * z + u]; }
  double color(int c, int u, int v) const { return colors[c * plane_size() + v * z + u]; }
};

// Samples the source patch selected by `t` with bilinear interpolation.
// Sample coordinates that leave the image are clamped; the patch center must
// lie inside the image (OutOfBoundsError otherwise). Gradients are forward
// differences of the warped patch in the patch frame (one extra sample past
// the last column and row), which equals the image gradient for integer
// translations. Does not apply t.adjust.
Patch extract_patch(const ImageBuf& img, const GradientField& grad, const PatchTransform& t,
                    int z);

// Extracts only patch row `v` (colors and gradients, channel-planar, z samples
// per plane; 9 planes in the order R,G,B, gxR,gxG,gxB, gyR,gyG,gyB) into `out`.
void extract_patch_row(const ImageBuf& img, const GradientField& grad, const PatchTransform& t,
                       int z, int v, std::span<double> out);

// d(P,Q) = sum of squared color differences + lambda * sum of squared
// gradient differences over both directions.
double patch_distance(const Patch& p, const Patch& q, double lambda);

// Per channel: gain = clamp(sigma_target / sigma_source, 1.0, 1.3) (1.0 when
// sigma_source < 5), bias = clamp(mu_target - gain * mu_source, -20, 20).
ColorAdjustment compute_color_adjustment(const Patch& source, const Patch& target);

// Gain and bias act on the colors; the bias cancels in the gradients.
Patch apply_color_adjustment(const Patch& patch, const ColorAdjustment& adj);

// Gain/bias from channel statistics, shared by the patch-level API and the
// search kernels.
ColorAdjustment adjustment_from_moments(const std::array<double, 3>& source_mean,
                                        const std::array<double, 3>& source_std,
                                        const std::array<double, 3>& target_mean,
                                        const std::array<double, 3>& target_std);

}  // namespace hallu

#endif  // HALLU_PATCH_H_
