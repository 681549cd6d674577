#include "patch_scorer.h"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace hallu::detail {

namespace {

template <typename T>
struct Vec4 {
  typedef T type __attribute__((vector_size(4 * sizeof(T))));
};

template <typename T>
using v4 = typename Vec4<T>::type;

template <typename T>
struct Vec8 {
  typedef T type __attribute__((vector_size(8 * sizeof(T))));
};

// Two adjacent 4-lane texels.
template <typename T>
using v8 = typename Vec8<T>::type;

template <typename T>
inline v8<T> load8(const T* p) {
  v8<T> v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

template <typename T>
inline v8<T> join(v4<T> lo, v4<T> hi) {
  v8<T> v;
  std::memcpy(&v, &lo, sizeof(lo));
  std::memcpy(reinterpret_cast<char*>(&v) + sizeof(lo), &hi, sizeof(hi));
  return v;
}

template <typename T>
inline double hsum8(v8<T> v) {
  double s = 0.0;
  for (int i = 0; i < 8; ++i) s += static_cast<double>(v[i]);
  return s;
}

template <typename T>
inline v4<T> load4(const T* p) {
  v4<T> v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

template <typename T>
inline void store4(T* p, v4<T> v) {
  std::memcpy(p, &v, sizeof(v));
}

template <typename T>
inline double hsum(v4<T> v) {
  return static_cast<double>(v[0]) + static_cast<double>(v[1]) + static_cast<double>(v[2]) +
         static_cast<double>(v[3]);
}

template <typename T>
inline v4<T> splat(T f) {
  return v4<T>{f, f, f, f};
}

template <typename T>
v4<T> lanes(const std::array<double, 3>& a) {
  return v4<T>{static_cast<T>(a[0]), static_cast<T>(a[1]), static_cast<T>(a[2]), T(0)};
}

template <typename T>
std::vector<T>& colors_of(ScorerScratch& s) {
  if constexpr (std::is_same_v<T, float>) {
    return s.colors_f;
  } else {
    return s.colors_d;
  }
}

template <typename T>
std::vector<T>& weights_of(ScorerScratch& s) {
  if constexpr (std::is_same_v<T, float>) {
    return s.weights_f;
  } else {
    return s.weights_d;
  }
}

}  // namespace

ScoringImage::ScoringImage(const ImageBuf& img) : img_(&img), grad_(gradient(img)) {
  const int w = img.width();
  const int h = img.height();
  const size_t stride = static_cast<size_t>(w) + 1;
  for (int c = 0; c < 3; ++c) {
    auto& s = sum_[c];
    auto& q = sq_[c];
    s.assign(stride * (h + 1), 0.0);
    q.assign(stride * (h + 1), 0.0);
    for (int y = 0; y < h; ++y) {
      const double* r = img.row(c, y);
      double rs = 0.0;
      double rq = 0.0;
      for (int x = 0; x < w; ++x) {
        rs += r[x];
        rq += r[x] * r[x];
        s[(y + 1) * stride + x + 1] = s[y * stride + x + 1] + rs;
        q[(y + 1) * stride + x + 1] = q[y * stride + x + 1] + rq;
      }
    }
  }
  for (auto* v : {&tex_f_.color, &tex_f_.gx, &tex_f_.gy}) v->assign(static_cast<size_t>(w) * h * 4, 0.0f);
  for (auto* v : {&tex_d_.color, &tex_d_.gx, &tex_d_.gy}) v->assign(static_cast<size_t>(w) * h * 4, 0.0);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      const double* r = img.row(c, y);
      const double* gx = grad_.gx.row(c, y);
      const double* gy = grad_.gy.row(c, y);
      const size_t base = static_cast<size_t>(y) * w * 4;
      for (int x = 0; x < w; ++x) {
        const size_t i = base + x * 4 + c;
        tex_f_.color[i] = static_cast<float>(r[x]);
        tex_f_.gx[i] = static_cast<float>(gx[x]);
        tex_f_.gy[i] = static_cast<float>(gy[x]);
        tex_d_.color[i] = r[x];
        tex_d_.gx[i] = gx[x];
        tex_d_.gy[i] = gy[x];
      }
    }
  }
}

void ScoringImage::moments(int x, int y, int z, std::array<double, 3>& mean,
                           std::array<double, 3>& stddev) const {
  const size_t stride = static_cast<size_t>(img_->width()) + 1;
  const size_t a = y * stride + x;
  const size_t b = y * stride + x + z;
  const size_t c = (y + z) * stride + x;
  const size_t d = (y + z) * stride + x + z;
  const double n = static_cast<double>(z) * z;
  for (int ch = 0; ch < 3; ++ch) {
    const auto& s = sum_[ch];
    const auto& q = sq_[ch];
    const double m = (s[d] - s[b] - s[c] + s[a]) / n;
    const double e2 = (q[d] - q[b] - q[c] + q[a]) / n;
    mean[ch] = m;
    stddev[ch] = std::sqrt(std::max(0.0, e2 - m * m));
  }
}

double PatchScorer::evaluate(int ax, int ay, const PatchTransform& t, double bound,
                             ColorAdjustment& adj, ScorerScratch& scratch) const {
  return dispatch<float>(ax, ay, t, bound, adj, scratch);
}

double PatchScorer::evaluate_exact(int ax, int ay, const PatchTransform& t, ColorAdjustment& adj,
                                   ScorerScratch& scratch) const {
  return dispatch<double>(ax, ay, t, kInf, adj, scratch);
}

template <typename T>
double PatchScorer::dispatch(int ax, int ay, const PatchTransform& t, double bound,
                             ColorAdjustment& adj, ScorerScratch& scratch) const {
  if (t.is_integer_translation() && t.sx >= 0 && t.sy >= 0 && t.sx + z_ <= source_.width() &&
      t.sy + z_ <= source_.height()) {
    return evaluate_translation<T>(ax, ay, static_cast<int>(t.sx), static_cast<int>(t.sy), bound,
                                   adj);
  }
  return evaluate_general<T>(ax, ay, t, bound, adj, scratch);
}

template <typename T>
double PatchScorer::evaluate_translation(int ax, int ay, int sx, int sy, double bound,
                                         ColorAdjustment& adj) const {
  std::array<double, 3> ms{}, ss{}, mt{}, st{};
  source_.moments(sx, sy, z_, ms, ss);
  target_.moments(ax, ay, z_, mt, st);
  adj = adjustment_from_moments(ms, ss, mt, st);

  const v4<T> gain = lanes<T>(adj.gain);
  const v4<T> bias = lanes<T>(adj.bias);
  const v8<T> gain8 = join<T>(gain, gain);
  const v8<T> bias8 = join<T>(bias, bias);
  const int z = z_;
  double total = 0.0;
  for (int v = 0; v < z; ++v) {
    const T* sc = source_.color_texel<T>(sx, sy + v);
    const T* sgx = source_.gx_texel<T>(sx, sy + v);
    const T* sgy = source_.gy_texel<T>(sx, sy + v);
    const T* tc = target_.color_texel<T>(ax, ay + v);
    const T* tgx = target_.gx_texel<T>(ax, ay + v);
    const T* tgy = target_.gy_texel<T>(ax, ay + v);
    v8<T> color{};
    v8<T> grad{};
    int u = 0;
    for (; u + 2 <= z; u += 2) {
      const int o = 4 * u;
      const v8<T> dc = gain8 * load8(sc + o) + bias8 - load8(tc + o);
      const v8<T> dx = gain8 * load8(sgx + o) - load8(tgx + o);
      const v8<T> dy = gain8 * load8(sgy + o) - load8(tgy + o);
      color += dc * dc;
      grad += dx * dx + dy * dy;
    }
    double cs = hsum8<T>(color);
    double gs = hsum8<T>(grad);
    if (u < z) {
      const int o = 4 * u;
      const v4<T> dc = gain * load4(sc + o) + bias - load4(tc + o);
      const v4<T> dx = gain * load4(sgx + o) - load4(tgx + o);
      const v4<T> dy = gain * load4(sgy + o) - load4(tgy + o);
      cs += hsum<T>(dc * dc);
      gs += hsum<T>(dx * dx + dy * dy);
    }
    total += cs + lambda_ * gs;
    if (total > bound) return kInf;
  }
  return total;
}

template <typename T>
double PatchScorer::evaluate_general(int ax, int ay, const PatchTransform& t, double bound,
                                     ColorAdjustment& adj, ScorerScratch& scratch) const {
  const int z = z_;
  // Colors are sampled on a (z+1)^2 grid; the extra column and row feed the
  // forward differences of the last column and row.
  const int g = z + 1;
  const size_t n = static_cast<size_t>(z) * z;
  const size_t ng = static_cast<size_t>(g) * g;
  const int w = source_.width();
  const int h = source_.height();
  colors_of<T>(scratch).resize(ng * 4);
  scratch.pixel.resize(g);
  scratch.dx.resize(g);
  scratch.dy.resize(g);
  weights_of<T>(scratch).resize(4 * static_cast<size_t>(g));
  T* colors = colors_of<T>(scratch).data();

  const double cz = (z - 1) * 0.5;
  const double cs = std::cos(static_cast<double>(t.theta)) * t.scale;
  const double sn = std::sin(static_cast<double>(t.theta)) * t.scale;
  const double flip = t.reflect ? -1.0 : 1.0;
  const double max_x = w - 1;
  const double max_y = h - 1;
  const double dxu = flip * cs;
  const double dyu = flip * sn;
  const double dxv = -sn;
  const double dyv = cs;
  const double x00 = t.sx + cz - cz * (dxu + dxv);
  const double y00 = t.sy + cz - cz * (dyu + dyv);
  const double span = z;
  const double xs[4] = {x00, x00 + span * dxu, x00 + span * dxv, x00 + span * (dxu + dxv)};
  const double ys[4] = {y00, y00 + span * dyu, y00 + span * dyv, y00 + span * (dyu + dyv)};
  const bool inside = *std::min_element(xs, xs + 4) >= 0.0 &&
                      *std::min_element(ys, ys + 4) >= 0.0 &&
                      *std::max_element(xs, xs + 4) < max_x &&
                      *std::max_element(ys, ys + 4) < max_y;
  const T* cbase = source_.color_texel<T>(0, 0);
  int* pixel = scratch.pixel.data();
  int* ox = scratch.dx.data();
  int* oy = scratch.dy.data();
  T* w00 = weights_of<T>(scratch).data();
  T* w10 = w00 + g;
  T* w01 = w10 + g;
  T* w11 = w01 + g;
  const T fdxu = static_cast<T>(dxu);
  const T fdyu = static_cast<T>(dyu);
  const T fmax_x = static_cast<T>(max_x);
  const T fmax_y = static_cast<T>(max_y);
  double sum_d[3] = {0.0, 0.0, 0.0};
  double sq_d[3] = {0.0, 0.0, 0.0};
  for (int v = 0; v < g; ++v) {
    const T xr = static_cast<T>(x00 + v * dxv);
    const T yr = static_cast<T>(y00 + v * dyv);
    if (inside) {
#pragma omp simd
      for (int u = 0; u < g; ++u) {
        const T x = xr + u * fdxu;
        const T y = yr + u * fdyu;
        const int x0 = static_cast<int>(x);
        const int y0 = static_cast<int>(y);
        const T fx = x - x0;
        const T fy = y - y0;
        pixel[u] = y0 * w + x0;
        ox[u] = 1;
        oy[u] = w;
        w00[u] = (T(1) - fx) * (T(1) - fy);
        w10[u] = fx * (T(1) - fy);
        w01[u] = (T(1) - fx) * fy;
        w11[u] = fx * fy;
      }
    } else {
      for (int u = 0; u < g; ++u) {
        const T x = std::clamp<T>(xr + u * fdxu, T(0), fmax_x);
        const T y = std::clamp<T>(yr + u * fdyu, T(0), fmax_y);
        const int x0 = static_cast<int>(x);
        const int y0 = static_cast<int>(y);
        const T fx = x - x0;
        const T fy = y - y0;
        pixel[u] = y0 * w + x0;
        ox[u] = x0 + 1 < w ? 1 : 0;
        oy[u] = y0 + 1 < h ? w : 0;
        w00[u] = (T(1) - fx) * (T(1) - fy);
        w10[u] = fx * (T(1) - fy);
        w01[u] = (T(1) - fx) * fy;
        w11[u] = fx * fy;
      }
    }
    T* row = colors + static_cast<size_t>(v) * g * 4;
    v4<T> sum{};
    v4<T> sq{};
    for (int u = 0; u < g; ++u) {
      const T* p = cbase + static_cast<size_t>(pixel[u]) * 4;
      const T* py = p + 4 * oy[u];
      const int dx = 4 * ox[u];
      const v4<T> c = splat(w00[u]) * load4(p) + splat(w10[u]) * load4(p + dx) +
                      splat(w01[u]) * load4(py) + splat(w11[u]) * load4(py + dx);
      store4(row + u * 4, c);
      if (u < z) {
        sum += c;
        sq += c * c;
      }
    }
    if (v < z) {
      for (int c = 0; c < 3; ++c) {
        sum_d[c] += sum[c];
        sq_d[c] += sq[c];
      }
    }
  }
  std::array<double, 3> ms{}, ss{}, mt{}, st{};
  for (int c = 0; c < 3; ++c) {
    ms[c] = sum_d[c] / n;
    ss[c] = std::sqrt(std::max(0.0, sq_d[c] / n - ms[c] * ms[c]));
  }
  target_.moments(ax, ay, z, mt, st);
  adj = adjustment_from_moments(ms, ss, mt, st);

  const v4<T> gain = lanes<T>(adj.gain);
  const v4<T> bias = lanes<T>(adj.bias);
  const v8<T> gain8 = join<T>(gain, gain);
  const v8<T> bias8 = join<T>(bias, bias);
  double total = 0.0;
  for (int v = 0; v < z; ++v) {
    const T* s = colors + static_cast<size_t>(v) * g * 4;
    const T* sb = s + static_cast<size_t>(g) * 4;
    const T* tc = target_.color_texel<T>(ax, ay + v);
    const T* tgx = target_.gx_texel<T>(ax, ay + v);
    const T* tgy = target_.gy_texel<T>(ax, ay + v);
    v8<T> color{};
    v8<T> grad{};
    int u = 0;
    for (; u + 2 <= z; u += 2) {
      const int o = 4 * u;
      const v8<T> c = load8(s + o);
      const v8<T> dc = gain8 * c + bias8 - load8(tc + o);
      const v8<T> du = gain8 * (load8(s + o + 4) - c) - load8(tgx + o);
      const v8<T> dv = gain8 * (load8(sb + o) - c) - load8(tgy + o);
      color += dc * dc;
      grad += du * du + dv * dv;
    }
    double cs = hsum8<T>(color);
    double gs = hsum8<T>(grad);
    if (u < z) {
      const int o = 4 * u;
      const v4<T> c = load4(s + o);
      const v4<T> dc = gain * c + bias - load4(tc + o);
      const v4<T> du = gain * (load4(s + o + 4) - c) - load4(tgx + o);
      const v4<T> dv = gain * (load4(sb + o) - c) - load4(tgy + o);
      cs += hsum<T>(dc * dc);
      gs += hsum<T>(du * du + dv * dv);
    }
    total += cs + lambda_ * gs;
    if (total > bound) return kInf;
  }
  return total;
}

}  // namespace hallu::detail
