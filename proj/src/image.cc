#include "hallu/image.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hallu {

ImageBuf::ImageBuf(int width, int height, double fill)
    : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw std::invalid_argument("image dimensions must be positive, got " +
                                std::to_string(width) + "x" + std::to_string(height));
  }
  data_.assign(static_cast<size_t>(kChannels) * width * height, fill);
}

void ImageBuf::clamp(double lo, double hi) {
  for (double& v : data_) v = std::clamp(v, lo, hi);
}

namespace {

// One output tap list per output coordinate along a single axis.
struct Taps {
  std::vector<int> begin;      // first source index
  std::vector<int> count;      // number of taps
  std::vector<double> weight;  // flattened, count[i] entries per output i
  std::vector<size_t> offset;  // start of output i in `weight`
};

Taps area_taps(int in, int out) {
  Taps t;
  const double ratio = static_cast<double>(in) / out;
  t.begin.resize(out);
  t.count.resize(out);
  t.offset.resize(out);
  for (int o = 0; o < out; ++o) {
    const double lo = o * ratio;
    const double hi = (o + 1) * ratio;
    const int first = std::clamp(static_cast<int>(std::floor(lo)), 0, in - 1);
    const int last = std::clamp(static_cast<int>(std::ceil(hi)) - 1, first, in - 1);
    t.begin[o] = first;
    t.count[o] = last - first + 1;
    t.offset[o] = t.weight.size();
    double total = 0.0;
    for (int s = first; s <= last; ++s) {
      const double w = std::min<double>(hi, s + 1) - std::max<double>(lo, s);
      t.weight.push_back(std::max(w, 0.0));
      total += std::max(w, 0.0);
    }
    for (int k = 0; k < t.count[o]; ++k) t.weight[t.offset[o] + k] /= total;
  }
  return t;
}

// Half-pixel-center bilinear source coordinate, clamped into [0, in-1].
struct LinearTap {
  int i0;
  int i1;
  double frac;
};

std::vector<LinearTap> linear_taps(int in, int out) {
  std::vector<LinearTap> taps(out);
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, s - i0};
  }
  return taps;
}

double lerp(double a, double b, double f) { return a + f * (b - a); }

void require_factor(double factor, const char* op) {
  if (!(factor > 1.0)) {
    throw std::invalid_argument(std::string(op) + ": factor must exceed 1, got " +
                                std::to_string(factor));
  }
}

double cubic_weight(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

}  // namespace

ImageBuf resize_area(const ImageBuf& img, int width, int height) {
  if (width < 1 || height < 1) throw std::invalid_argument("resize_area: empty output");
  if (width == img.width() && height == img.height()) return img;
  const Taps tx = area_taps(img.width(), width);
  const Taps ty = area_taps(img.height(), height);
  ImageBuf horiz(width, img.height());
  ImageBuf out(width, height);
  for (int c = 0; c < ImageBuf::kChannels; ++c) {
    for (int y = 0; y < img.height(); ++y) {
      const double* src = img.row(c, y);
      double* dst = horiz.row(c, y);
      for (int x = 0; x < width; ++x) {
        double acc = 0.0;
        const double* w = &tx.weight[tx.offset[x]];
        for (int k = 0; k < tx.count[x]; ++k) acc += w[k] * src[tx.begin[x] + k];
        dst[x] = acc;
      }
    }
    for (int y = 0; y < height; ++y) {
      double* dst = out.row(c, y);
      const double* w = &ty.weight[ty.offset[y]];
      for (int k = 0; k < ty.count[y]; ++k) {
        const double* src = horiz.row(c, ty.begin[y] + k);
        for (int x = 0; x < width; ++x) dst[x] += w[k] * src[x];
      }
    }
  }
  return out;
}

ImageBuf resize_bilinear(const ImageBuf& img, int width, int height) {
  if (width < 1 || height < 1) throw std::invalid_argument("resize_bilinear: empty output");
  if (width == img.width() && height == img.height()) return img;
  const auto tx = linear_taps(img.width(), width);
  const auto ty = linear_taps(img.height(), height);
  ImageBuf horiz(width, img.height());
  ImageBuf out(width, height);
  for (int c = 0; c < ImageBuf::kChannels; ++c) {
    for (int y = 0; y < img.height(); ++y) {
      const double* src = img.row(c, y);
      double* dst = horiz.row(c, y);
      for (int x = 0; x < width; ++x) dst[x] = lerp(src[tx[x].i0], src[tx[x].i1], tx[x].frac);
    }
    for (int y = 0; y < height; ++y) {
      const double* r0 = horiz.row(c, ty[y].i0);
      const double* r1 = horiz.row(c, ty[y].i1);
      double* dst = out.row(c, y);
      for (int x = 0; x < width; ++x) dst[x] = lerp(r0[x], r1[x], ty[y].frac);
    }
  }
  return out;
}

std::pair<int, int> scaled_dims(int width, int height, double factor) {
  return {static_cast<int>(std::lround(width * factor)),
          static_cast<int>(std::lround(height * factor))};
}

ImageBuf downsample(const ImageBuf& img, double factor) {
  require_factor(factor, "downsample");
  const auto [w, h] = scaled_dims(img.width(), img.height(), 1.0 / factor);
  if (w < 1 || h < 1) {
    throw std::invalid_argument("downsample: factor " + std::to_string(factor) +
                                " leaves an empty image");
  }
  return resize_area(img, w, h);
}

ImageBuf upsample_bilinear(const ImageBuf& img, double factor) {
  require_factor(factor, "upsample_bilinear");
  const auto [w, h] = scaled_dims(img.width(), img.height(), factor);
  return resize_bilinear(img, w, h);
}

GradientField gradient(const ImageBuf& img) {
  const int w = img.width();
  const int h = img.height();
  GradientField g{ImageBuf(w, h), ImageBuf(w, h)};
  for (int c = 0; c < ImageBuf::kChannels; ++c) {
    for (int y = 0; y < h; ++y) {
      const double* r = img.row(c, y);
      double* gx = g.gx.row(c, y);
      for (int x = 0; x + 1 < w; ++x) gx[x] = r[x + 1] - r[x];
      if (y + 1 < h) {
        const double* below = img.row(c, y + 1);
        double* gy = g.gy.row(c, y);
        for (int x = 0; x < w; ++x) gy[x] = below[x] - r[x];
      }
    }
  }
  return g;
}

FrequencyBands freq_split(const ImageBuf& img, int base_width, int base_height) {
  if (base_width < 1 || base_height < 1 || base_width > img.width() ||
      base_height > img.height()) {
    throw std::invalid_argument("freq_split: base dims must lie within image dims");
  }
  if (base_width == img.width() && base_height == img.height()) {
    return {img, ImageBuf(img.width(), img.height())};
  }
  FrequencyBands bands;
  bands.low = resize_bilinear(resize_area(img, base_width, base_height), img.width(),
                              img.height());
  constexpr double kGrid = 16777216.0;  // 2^24
  for (double& v : bands.low.data()) v = std::nearbyint(v * kGrid) / kGrid;
  bands.high = img;
  auto hi = bands.high.data();
  auto lo = bands.low.data();
  for (size_t i = 0; i < hi.size(); ++i) hi[i] -= lo[i];
  return bands;
}

ImageBuf resize_closest(int target_width, int target_height, const ImageBuf& sample) {
  if (target_width < 1 || target_height < 1) {
    throw std::invalid_argument("resize_closest: target dims must be positive");
  }
  const double target_area = static_cast<double>(target_width) * target_height;
  const double area = static_cast<double>(sample.width()) * sample.height();
  const double s = std::sqrt(target_area / area);
  const int w = std::max(1, static_cast<int>(std::lround(sample.width() * s)));
  const int h = std::max(1, static_cast<int>(std::lround(sample.height() * s)));
  if (w == sample.width() && h == sample.height()) return sample;
  if (s < 1.0) return resize_area(sample, w, h);
  return resize_bilinear(sample, w, h);
}

ImageBuf low_pass(double c, const ImageBuf& img) {
  require_factor(c, "low_pass");
  return resize_bilinear(downsample(img, c), img.width(), img.height());
}

ImageBuf resize_bicubic(const ImageBuf& img, int width, int height) {
  if (width < 1 || height < 1) throw std::invalid_argument("resize_bicubic: empty output");
  auto taps = [](int in, int out) {
    std::vector<std::array<double, 4>> w(out);
    std::vector<std::array<int, 4>> idx(out);
    const double ratio = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      const double s = (o + 0.5) * ratio - 0.5;
      const int base = static_cast<int>(std::floor(s)) - 1;
      double total = 0.0;
      for (int k = 0; k < 4; ++k) {
        idx[o][k] = std::clamp(base + k, 0, in - 1);
        w[o][k] = cubic_weight(s - (base + k));
        total += w[o][k];
      }
      for (double& v : w[o]) v /= total;
    }
    return std::pair(w, idx);
  };
  const auto [wx, ix] = taps(img.width(), width);
  const auto [wy, iy] = taps(img.height(), height);
  ImageBuf horiz(width, img.height());
  ImageBuf out(width, height);
  for (int c = 0; c < ImageBuf::kChannels; ++c) {
    for (int y = 0; y < img.height(); ++y) {
      const double* src = img.row(c, y);
      double* dst = horiz.row(c, y);
      for (int x = 0; x < width; ++x) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += wx[x][k] * src[ix[x][k]];
        dst[x] = acc;
      }
    }
    for (int y = 0; y < height; ++y) {
      double* dst = out.row(c, y);
      for (int k = 0; k < 4; ++k) {
        const double* src = horiz.row(c, iy[y][k]);
        for (int x = 0; x < width; ++x) dst[x] += wy[y][k] * src[x];
      }
    }
  }
  return out;
}

double rms_difference(const ImageBuf& a, const ImageBuf& b) {
  if (!a.same_dims(b)) throw std::invalid_argument("rms_difference: dimension mismatch");
  double acc = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (size_t i = 0; i < da.size(); ++i) {
    const double d = da[i] - db[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(da.size()));
}

}  // namespace hallu
