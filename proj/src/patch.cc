#include "hallu/patch.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hallu/error.h"

namespace hallu {

bool PatchTransform::is_integer_translation() const {
  return scale == 1.0f && theta == 0.0f && !reflect && sx == std::floor(sx) &&
         sy == std::floor(sy);
}

Patch::Patch(int size) : z(size) {
  if (size < 2) throw std::invalid_argument("patch size must be at least 2");
  const size_t n = 3 * plane_size();
  colors.assign(n, 0.0);
  gx.assign(n, 0.0);
  gy.assign(n, 0.0);
}

namespace {

// Bilinear color sample at (x, y) with the position clamped to the image.
void sample_color(const ImageBuf& img, double x, double y, double* out3) {
  const int w = img.width();
  const int h = img.height();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  for (int c = 0; c < 3; ++c) {
    const double* r0 = img.row(c, y0);
    const double* r1 = img.row(c, y1);
    const double top = r0[x0] + fx * (r0[x1] - r0[x0]);
    const double bot = r1[x0] + fx * (r1[x1] - r1[x0]);
    out3[c] = top + fy * (bot - top);
  }
}

void check_center(const ImageBuf& img, const PatchTransform& t, int z) {
  const double cz = (z - 1) * 0.5;
  const double cx = t.sx + cz;
  const double cy = t.sy + cz;
  if (!(cx >= 0.0 && cy >= 0.0 && cx <= img.width() - 1 && cy <= img.height() - 1)) {
    throw OutOfBoundsError("patch center (" + std::to_string(cx) + ", " + std::to_string(cy) +
                           ") lies outside the " + std::to_string(img.width()) + "x" +
                           std::to_string(img.height()) + " source image");
  }
}

}  // namespace

void extract_patch_row(const ImageBuf& img, const GradientField& grad, const PatchTransform& t,
                       int z, int v, std::span<double> out) {
  if (out.size() < static_cast<size_t>(9 * z)) {
    throw std::invalid_argument("extract_patch_row: output span too small");
  }
  if (t.is_integer_translation() && t.sx >= 0 && t.sy >= 0 && t.sx + z <= img.width() &&
      t.sy + v < img.height()) {
    const int x0 = static_cast<int>(t.sx);
    const int y = static_cast<int>(t.sy) + v;
    for (int c = 0; c < 3; ++c) {
      std::copy_n(img.row(c, y) + x0, z, out.data() + c * z);
      std::copy_n(grad.gx.row(c, y) + x0, z, out.data() + (3 + c) * z);
      std::copy_n(grad.gy.row(c, y) + x0, z, out.data() + (6 + c) * z);
    }
    return;
  }
  const double cz = (z - 1) * 0.5;
  const double cx = t.sx + cz;
  const double cy = t.sy + cz;
  const double cs = std::cos(static_cast<double>(t.theta)) * t.scale;
  const double sn = std::sin(static_cast<double>(t.theta)) * t.scale;
  const double flip = t.reflect ? -1.0 : 1.0;
  auto at = [&](int u, int vv, double* out3) {
    const double dx = flip * (u - cz);
    const double dy = vv - cz;
    sample_color(img, cx + cs * dx - sn * dy, cy + sn * dx + cs * dy, out3);
  };
  // Gradients are forward differences of the warped patch, which needs one
  // extra sample to the right and below.
  double here[3];
  double right[3];
  double below[3];
  at(0, v, here);
  for (int u = 0; u < z; ++u) {
    at(u + 1, v, right);
    at(u, v + 1, below);
    for (int c = 0; c < 3; ++c) {
      out[c * z + u] = here[c];
      out[(3 + c) * z + u] = right[c] - here[c];
      out[(6 + c) * z + u] = below[c] - here[c];
      here[c] = right[c];
    }
  }
}

Patch extract_patch(const ImageBuf& img, const GradientField& grad, const PatchTransform& t,
                    int z) {
  if (!img.same_dims(grad.gx) || !img.same_dims(grad.gy)) {
    throw std::invalid_argument("extract_patch: gradient field does not match image");
  }
  check_center(img, t, z);
  Patch p(z);
  std::vector<double> row(9 * static_cast<size_t>(z));
  const size_t ps = p.plane_size();
  for (int v = 0; v < z; ++v) {
    extract_patch_row(img, grad, t, z, v, row);
    for (int c = 0; c < 3; ++c) {
      std::copy_n(row.data() + c * z, z, p.colors.data() + c * ps + v * z);
      std::copy_n(row.data() + (3 + c) * z, z, p.gx.data() + c * ps + v * z);
      std::copy_n(row.data() + (6 + c) * z, z, p.gy.data() + c * ps + v * z);
    }
  }
  return p;
}

double patch_distance(const Patch& p, const Patch& q, double lambda) {
  if (p.z != q.z) {
    throw std::invalid_argument("patch_distance: patch sizes differ (" + std::to_string(p.z) +
                                " vs " + std::to_string(q.z) + ")");
  }
  auto ssd = [](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      acc += d * d;
    }
    return acc;
  };
  return ssd(p.colors, q.colors) + lambda * (ssd(p.gx, q.gx) + ssd(p.gy, q.gy));
}

ColorAdjustment adjustment_from_moments(const std::array<double, 3>& source_mean,
                                        const std::array<double, 3>& source_std,
                                        const std::array<double, 3>& target_mean,
                                        const std::array<double, 3>& target_std) {
  ColorAdjustment adj;
  for (int c = 0; c < 3; ++c) {
    double g = 1.0;
    if (source_std[c] >= ColorAdjustment::kMinSourceStdDev) {
      g = std::clamp(target_std[c] / source_std[c], ColorAdjustment::kGainMin,
                     ColorAdjustment::kGainMax);
    }
    adj.gain[c] = g;
    adj.bias[c] = std::clamp(target_mean[c] - g * source_mean[c], -ColorAdjustment::kBiasLimit,
                             ColorAdjustment::kBiasLimit);
  }
  return adj;
}

namespace {

void channel_moments(const Patch& p, std::array<double, 3>& mean, std::array<double, 3>& stddev) {
  const size_t n = p.plane_size();
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    double sq = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double v = p.colors[c * n + i];
      sum += v;
      sq += v * v;
    }
    mean[c] = sum / n;
    stddev[c] = std::sqrt(std::max(0.0, sq / n - mean[c] * mean[c]));
  }
}

}  // namespace

ColorAdjustment compute_color_adjustment(const Patch& source, const Patch& target) {
  if (source.z != target.z) throw std::invalid_argument("compute_color_adjustment: size mismatch");
  std::array<double, 3> ms{}, ss{}, mt{}, st{};
  channel_moments(source, ms, ss);
  channel_moments(target, mt, st);
  return adjustment_from_moments(ms, ss, mt, st);
}

Patch apply_color_adjustment(const Patch& patch, const ColorAdjustment& adj) {
  Patch out = patch;
  const size_t n = patch.plane_size();
  for (int c = 0; c < 3; ++c) {
    for (size_t i = c * n; i < (c + 1) * n; ++i) {
      out.colors[i] = adj.gain[c] * patch.colors[i] + adj.bias[c];
      out.gx[i] = adj.gain[c] * patch.gx[i];
      out.gy[i] = adj.gain[c] * patch.gy[i];
    }
  }
  return out;
}

}  // namespace hallu
