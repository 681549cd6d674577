#ifndef HALLU_IMAGE_H_
#define HALLU_IMAGE_H_

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace hallu {

// Planar 3-channel image with samples on the nominal [0,255] scale.
// Values may leave that range while an optimization is running; clamp()
// is applied once before the image leaves the library.
class ImageBuf {
 public:
  static constexpr int kChannels = 3;

  ImageBuf() = default;
  ImageBuf(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  size_t plane_size() const { return static_cast<size_t>(width_) * height_; }

  double& at(int c, int x, int y) { return data_[index(c, x, y)]; }
  double at(int c, int x, int y) const { return data_[index(c, x, y)]; }

  std::span<double> plane(int c) {
    return {data_.data() + c * plane_size(), plane_size()};
  }
  std::span<const double> plane(int c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }
  double* row(int c, int y) { return data_.data() + index(c, 0, y); }
  const double* row(int c, int y) const { return data_.data() + index(c, 0, y); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_dims(const ImageBuf& o) const {
    return width_ == o.width_ && height_ == o.height_;
  }
  void clamp(double lo = 0.0, double hi = 255.0);

  friend bool operator==(const ImageBuf&, const ImageBuf&) = default;

 private:
  size_t index(int c, int x, int y) const {
    return (static_cast<size_t>(c) * height_ + y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

// Forward differences per channel: gx(x,y) = I(x+1,y) - I(x,y), zero on the
// last column (replicate boundary); gy likewise along rows.
struct GradientField {
  ImageBuf gx;
  ImageBuf gy;
};

// Area-averaging (box) resample to explicit dimensions. Each output pixel is
// the mean of its source footprint, weighted by overlap.
ImageBuf resize_area(const ImageBuf& img, int width, int height);

// Bilinear resample with half-pixel centers and replicate borders.
ImageBuf resize_bilinear(const ImageBuf& img, int width, int height);

// Dimensions produced by scaling (w, h) by `factor` and rounding.
std::pair<int, int> scaled_dims(int width, int height, double factor);

// Antialiased downsample by factor > 1; output dims are round(dim / factor).
ImageBuf downsample(const ImageBuf& img, double factor);

// Bilinear upsample by factor > 1; output dims are round(dim * factor).
ImageBuf upsample_bilinear(const ImageBuf& img, double factor);

GradientField gradient(const ImageBuf& img);

struct FrequencyBands {
  ImageBuf low;
  ImageBuf high;
};

// low = bilinear(area(img -> base dims) -> img dims); high = img - low.
// low is kept on a 2^-24 grid so that low + high == img holds exactly for
// 8-bit sourced images.
FrequencyBands freq_split(const ImageBuf& img, int base_width, int base_height);

// Uniformly rescales `sample` so its area is closest to target_w * target_h
// while keeping its aspect ratio. Never crops.
ImageBuf resize_closest(int target_width, int target_height, const ImageBuf& sample);

// Downsample by c, then bilinear back to the exact input dims.
ImageBuf low_pass(double c, const ImageBuf& img);

// Keys cubic (a = -0.5) resample; used as the bicubic baseline.
ImageBuf resize_bicubic(const ImageBuf& img, int width, int height);

// Root-mean-square difference over every sample of two same-sized images.
double rms_difference(const ImageBuf& a, const ImageBuf& b);

}  // namespace hallu

#endif  // HALLU_IMAGE_H_
