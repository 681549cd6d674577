#include "hallu/fuse.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "hallu/error.h"
#include "hallu/parallel.h"

namespace hallu {

bool check_coherence(const PatchTransform& t1, int x1, int y1, const PatchTransform& t2, int x2,
                     int y2, const CoherenceThresholds& th) {
  const double dx = (double{t1.sx} - x1) - (double{t2.sx} - x2);
  const double dy = (double{t1.sy} - y1) - (double{t2.sy} - y2);
  return std::abs(dx) <= th.position && std::abs(dy) <= th.position &&
         std::abs(double{t1.scale} - t2.scale) <= th.scale &&
         std::abs(double{t1.theta} - t2.theta) <= th.theta && t1.reflect == t2.reflect;
}

namespace {

// Structure-of-arrays view of an NNF for the window scans.
struct Offsets {
  std::vector<double> ox, oy, scale, theta;
  std::vector<uint8_t> reflect;

  explicit Offsets(const NNF& nnf) {
    const size_t n = nnf.entries.size();
    ox.resize(n);
    oy.resize(n);
    scale.resize(n);
    theta.resize(n);
    reflect.resize(n);
    for (int y = 0; y < nnf.grid_h; ++y) {
      for (int x = 0; x < nnf.grid_w; ++x) {
        const size_t i = static_cast<size_t>(y) * nnf.grid_w + x;
        const PatchTransform& e = nnf.entries[i];
        ox[i] = double{e.sx} - x;
        oy[i] = double{e.sy} - y;
        scale[i] = e.scale;
        theta[i] = e.theta;
        reflect[i] = e.reflect ? 1 : 0;
      }
    }
  }

  bool coherent(size_t i, size_t p, const CoherenceThresholds& th) const {
    return std::abs(ox[i] - ox[p]) <= th.position && std::abs(oy[i] - oy[p]) <= th.position &&
           std::abs(scale[i] - scale[p]) <= th.scale &&
           std::abs(theta[i] - theta[p]) <= th.theta && reflect[i] == reflect[p];
  }
};

struct Window {
  int x0, x1, y0, y1;  // inclusive
  int area() const { return (x1 - x0 + 1) * (y1 - y0 + 1) - 1; }
};

Window window_at(int px, int py, int gw, int gh, int window) {
  const int r = window / 2;
  return {std::max(0, px - r), std::min(gw - 1, px + r), std::max(0, py - r),
          std::min(gh - 1, py + r)};
}

double coherence_at(const Offsets& off, int px, int py, int gw, int gh, int window,
                    const CoherenceThresholds& th) {
  const Window win = window_at(px, py, gw, gh, window);
  const int area = win.area();
  if (area == 0) return 0.0;
  const size_t p = static_cast<size_t>(py) * gw + px;
  int count = 0;
  for (int y = win.y0; y <= win.y1; ++y) {
    for (int x = win.x0; x <= win.x1; ++x) {
      const size_t i = static_cast<size_t>(y) * gw + x;
      if (i != p && off.coherent(i, p, th)) ++count;
    }
  }
  return -static_cast<double>(count) / area;
}

void check_same_grid(const std::vector<NNF>& nnfs) {
  if (nnfs.empty()) throw std::invalid_argument("merge: no NNFs");
  if (nnfs.size() > 255) throw std::invalid_argument("merge: at most 255 NNFs are supported");
  for (const NNF& f : nnfs) {
    if (f.grid_w != nnfs[0].grid_w || f.grid_h != nnfs[0].grid_h) {
      throw std::invalid_argument("merge: NNF grids differ");
    }
  }
}

}  // namespace

double coherence(int px, int py, const NNF& nnf, int window, const CoherenceThresholds& th) {
  if (px < 0 || py < 0 || px >= nnf.grid_w || py >= nnf.grid_h) {
    throw std::invalid_argument("coherence: anchor outside the NNF grid");
  }
  const Offsets off(nnf);
  return coherence_at(off, px, py, nnf.grid_w, nnf.grid_h, window, th);
}

std::vector<double> coherence_field(const NNF& nnf, int window, const CoherenceThresholds& th,
                                    int workers) {
  const Offsets off(nnf);
  std::vector<double> out(nnf.entries.size());
  parallel_for(nnf.grid_h, workers, [&](int y) {
    for (int x = 0; x < nnf.grid_w; ++x) {
      out[static_cast<size_t>(y) * nnf.grid_w + x] =
          coherence_at(off, x, y, nnf.grid_w, nnf.grid_h, window, th);
    }
  });
  return out;
}

double contribution(int m, const NNFMap& prev_map) {
  if (prev_map.index.empty()) return 0.0;
  const auto hits = std::count(prev_map.index.begin(), prev_map.index.end(), m);
  return -static_cast<double>(hits) / static_cast<double>(prev_map.index.size());
}

NNFMap merge_winners(const std::vector<NNF>& nnfs, const NNFMap* prev_map, const FuseConfig& cfg) {
  check_same_grid(nnfs);
  const int gw = nnfs[0].grid_w;
  const int gh = nnfs[0].grid_h;
  NNFMap map(gw, gh, 0);
  if (nnfs.size() == 1) return map;
  std::vector<double> best(map.index.size(), std::numeric_limits<double>::infinity());
  for (size_t m = 0; m < nnfs.size(); ++m) {
    const std::vector<double> coh =
        coherence_field(nnfs[m], cfg.coherence_window, cfg.thresholds, cfg.workers);
    const double con = prev_map ? contribution(static_cast<int>(m), *prev_map) : 0.0;
    for (size_t i = 0; i < best.size(); ++i) {
      const double e = nnfs[m].entries[i].dist + cfg.alpha_coh * coh[i] + cfg.alpha_con * con;
      if (e < best[i]) {
        best[i] = e;
        map.index[i] = static_cast<uint8_t>(m);
      }
    }
  }
  return map;
}

NNFMap merge(const std::vector<NNF>& nnfs, const NNFMap* prev_map, const FuseConfig& cfg) {
  const NNFMap raw = merge_winners(nnfs, prev_map, cfg);
  if (nnfs.size() == 1) return raw;
  const int kernel = cfg.majority_kernel > 0 ? cfg.majority_kernel : nnfs[0].z;
  return majority_smooth(raw, kernel, static_cast<int>(nnfs.size()));
}

NNFMap majority_smooth(const NNFMap& map, int kernel, int label_count) {
  if (kernel < 1) throw std::invalid_argument("majority_smooth: kernel must be >= 1");
  const int gw = map.grid_w;
  const int gh = map.grid_h;
  if (label_count <= 0) {
    label_count = map.index.empty() ? 1 : *std::max_element(map.index.begin(), map.index.end()) + 1;
  }
  // One integral image of label occurrences per label.
  const size_t stride = static_cast<size_t>(gw) + 1;
  std::vector<std::vector<int>> integral(label_count, std::vector<int>(stride * (gh + 1), 0));
  for (int l = 0; l < label_count; ++l) {
    auto& s = integral[l];
    for (int y = 0; y < gh; ++y) {
      int run = 0;
      for (int x = 0; x < gw; ++x) {
        run += map.at(x, y) == l ? 1 : 0;
        s[(y + 1) * stride + x + 1] = s[y * stride + x + 1] + run;
      }
    }
  }
  const int lo = -(kernel / 2);
  const int hi = lo + kernel - 1;
  NNFMap out(gw, gh);
  for (int y = 0; y < gh; ++y) {
    const int y0 = std::max(0, y + lo);
    const int y1 = std::min(gh - 1, y + hi);
    for (int x = 0; x < gw; ++x) {
      const int x0 = std::max(0, x + lo);
      const int x1 = std::min(gw - 1, x + hi);
      int best_label = 0;
      int best_count = -1;
      for (int l = 0; l < label_count; ++l) {
        const auto& s = integral[l];
        const int n = s[(y1 + 1) * stride + x1 + 1] - s[y0 * stride + x1 + 1] -
                      s[(y1 + 1) * stride + x0] + s[y0 * stride + x0];
        if (n > best_count) {
          best_count = n;
          best_label = l;
        }
      }
      out.at(x, y) = static_cast<uint8_t>(best_label);
    }
  }
  return out;
}

std::vector<double> vote_weights(const NNFMap& map, const std::vector<NNF>& nnfs,
                                 const FuseConfig& cfg) {
  check_same_grid(nnfs);
  const int gw = map.grid_w;
  const int gh = map.grid_h;
  if (gw != nnfs[0].grid_w || gh != nnfs[0].grid_h) {
    throw std::invalid_argument("vote_weights: map and NNF grids differ");
  }
  std::vector<Offsets> offsets;
  offsets.reserve(nnfs.size());
  for (const NNF& f : nnfs) offsets.emplace_back(f);
  std::vector<double> weights(map.index.size());
  parallel_for(gh, cfg.workers, [&](int py) {
    for (int px = 0; px < gw; ++px) {
      const size_t p = static_cast<size_t>(py) * gw + px;
      const uint8_t m = map.index[p];
      if (m >= nnfs.size()) throw std::invalid_argument("vote_weights: map index out of range");
      const Offsets& off = offsets[m];
      const Window win = window_at(px, py, gw, gh, cfg.coherence_window);
      const int area = win.area();
      int count = 0;
      for (int y = win.y0; y <= win.y1; ++y) {
        for (int x = win.x0; x <= win.x1; ++x) {
          const size_t i = static_cast<size_t>(y) * gw + x;
          if (i != p && map.index[i] == m && off.coherent(i, p, cfg.thresholds)) ++count;
        }
      }
      const double frac = area > 0 ? static_cast<double>(count) / area : 1.0;
      weights[p] = std::max(frac, cfg.min_vote_weight);
    }
  });
  return weights;
}

VoteTarget vote_weighted(int target_w, int target_h, const NNFMap& map,
                         const std::vector<NNF>& nnfs, const std::vector<ImageBuf>& candidates,
                         const std::vector<double>& weights, int workers) {
  check_same_grid(nnfs);
  const int z = nnfs[0].z;
  const int gw = map.grid_w;
  const int gh = map.grid_h;
  if (gw != target_w - z + 1 || gh != target_h - z + 1 || gw != nnfs[0].grid_w ||
      gh != nnfs[0].grid_h || weights.size() != map.index.size()) {
    throw std::invalid_argument("vote: map, NNFs, weights and target dims are inconsistent");
  }
  std::vector<GradientField> grads(candidates.size());
  for (const NNF& f : nnfs) {
    if (f.candidate < 0 || f.candidate >= static_cast<int>(candidates.size())) {
      throw std::invalid_argument("vote: NNF refers to a missing candidate");
    }
    if (grads[f.candidate].gx.empty()) grads[f.candidate] = gradient(candidates[f.candidate]);
  }

  VoteTarget vt{ImageBuf(target_w, target_h),
                {ImageBuf(target_w, target_h), ImageBuf(target_w, target_h)},
                std::vector<double>(static_cast<size_t>(target_w) * target_h, 0.0)};

  parallel_for(target_h, workers, [&](int y) {
    std::vector<double> acc(9 * static_cast<size_t>(target_w), 0.0);
    std::vector<double> wsum(target_w, 0.0);
    std::vector<double> row(9 * static_cast<size_t>(z));
    const int ay0 = std::max(0, y - z + 1);
    const int ay1 = std::min(y, gh - 1);
    for (int ay = ay0; ay <= ay1; ++ay) {
      const int v = y - ay;
      for (int ax = 0; ax < gw; ++ax) {
        const size_t a = static_cast<size_t>(ay) * gw + ax;
        const NNF& f = nnfs[map.index[a]];
        const PatchTransform& t = f.entries[a];
        const ImageBuf& img = candidates[f.candidate];
        const GradientField& g = grads[f.candidate];
        const double w = weights[a];
        extract_patch_row(img, g, t, z, v, row);
        for (int c = 0; c < 3; ++c) {
          const double gain = t.adjust.gain[c];
          const double bias = t.adjust.bias[c];
          double* dc = acc.data() + c * target_w + ax;
          double* dgx = acc.data() + (3 + c) * target_w + ax;
          double* dgy = acc.data() + (6 + c) * target_w + ax;
          const double* sc = row.data() + c * z;
          const double* sgx = row.data() + (3 + c) * z;
          const double* sgy = row.data() + (6 + c) * z;
          for (int u = 0; u < z; ++u) {
            dc[u] += w * (gain * sc[u] + bias);
            dgx[u] += w * (gain * sgx[u]);
            dgy[u] += w * (gain * sgy[u]);
          }
        }
        for (int u = 0; u < z; ++u) wsum[ax + u] += w;
      }
    }
    for (int x = 0; x < target_w; ++x) {
      const double inv = 1.0 / wsum[x];
      vt.weights[static_cast<size_t>(y) * target_w + x] = wsum[x];
      for (int c = 0; c < 3; ++c) {
        vt.colors.row(c, y)[x] = acc[c * target_w + x] * inv;
        vt.gradients.gx.row(c, y)[x] = acc[(3 + c) * target_w + x] * inv;
        vt.gradients.gy.row(c, y)[x] = acc[(6 + c) * target_w + x] * inv;
      }
    }
  });
  return vt;
}

VoteTarget vote(int target_w, int target_h, const NNFMap& map, const std::vector<NNF>& nnfs,
                const std::vector<ImageBuf>& candidates, const FuseConfig& cfg) {
  return vote_weighted(target_w, target_h, map, nnfs, candidates, vote_weights(map, nnfs, cfg),
                       cfg.workers);
}

namespace {

class PoissonOperator {
 public:
  PoissonOperator(int w, int h, double lambda) : w_(w), h_(h), lambda_(lambda) {}

  void apply(const std::vector<double>& x, std::vector<double>& out) const {
    out = x;
    for (int y = 0; y < h_; ++y) {
      const size_t r = static_cast<size_t>(y) * w_;
      for (int i = 0; i + 1 < w_; ++i) {
        const double e = lambda_ * (x[r + i + 1] - x[r + i]);
        out[r + i] -= e;
        out[r + i + 1] += e;
      }
    }
    for (int y = 0; y + 1 < h_; ++y) {
      const size_t r = static_cast<size_t>(y) * w_;
      for (int i = 0; i < w_; ++i) {
        const double e = lambda_ * (x[r + w_ + i] - x[r + i]);
        out[r + i] -= e;
        out[r + w_ + i] += e;
      }
    }
  }

  std::vector<double> diagonal() const {
    std::vector<double> d(static_cast<size_t>(w_) * h_);
    for (int y = 0; y < h_; ++y) {
      for (int x = 0; x < w_; ++x) {
        const int degree = (x > 0) + (x + 1 < w_) + (y > 0) + (y + 1 < h_);
        d[static_cast<size_t>(y) * w_ + x] = 1.0 + lambda_ * degree;
      }
    }
    return d;
  }

  // colors + lambda * D^T g over interior edges.
  std::vector<double> rhs(std::span<const double> colors, std::span<const double> gx,
                          std::span<const double> gy) const {
    std::vector<double> b(colors.begin(), colors.end());
    for (int y = 0; y < h_; ++y) {
      const size_t r = static_cast<size_t>(y) * w_;
      for (int i = 0; i + 1 < w_; ++i) {
        const double e = lambda_ * gx[r + i];
        b[r + i] -= e;
        b[r + i + 1] += e;
      }
    }
    for (int y = 0; y + 1 < h_; ++y) {
      const size_t r = static_cast<size_t>(y) * w_;
      for (int i = 0; i < w_; ++i) {
        const double e = lambda_ * gy[r + i];
        b[r + i] -= e;
        b[r + w_ + i] += e;
      }
    }
    return b;
  }

 private:
  int w_;
  int h_;
  double lambda_;
};

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void solve_channel(const PoissonOperator& op, const std::vector<double>& b,
                   const std::vector<double>& diag, std::vector<double>& x, double tol,
                   int max_iter) {
  const size_t n = x.size();
  std::vector<double> r(n), z(n), p(n), ap(n);
  auto true_residual = [&] {
    op.apply(x, ap);
    for (size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
    return inf_norm(r);
  };
  double res = true_residual();
  int it = 0;
  while (res > tol) {
    const int started = it;
    // Restarted from the true residual whenever the recurrence claims success.
    for (size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
    p = z;
    double rz = dot(r, z);
    while (it < max_iter) {
      ++it;
      op.apply(p, ap);
      const double pap = dot(p, ap);
      if (pap <= 0.0) break;
      const double alpha = rz / pap;
      for (size_t i = 0; i < n; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * ap[i];
      }
      if (inf_norm(r) <= 0.5 * tol) break;
      for (size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
      const double rz_next = dot(r, z);
      const double beta = rz_next / rz;
      rz = rz_next;
      for (size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    res = true_residual();
    if (res > tol && (it >= max_iter || it == started)) {
      throw SolverError("screened Poisson solve did not converge (residual " +
                            std::to_string(res) + " after " + std::to_string(it) + " iterations)",
                        res, it);
    }
  }
}

}  // namespace

ImageBuf screened_poisson(const VoteTarget& vt, const FuseConfig& cfg) {
  const ImageBuf& colors = vt.colors;
  if (!colors.same_dims(vt.gradients.gx) || !colors.same_dims(vt.gradients.gy)) {
    throw std::invalid_argument("screened_poisson: gradient dims differ from color dims");
  }
  const int w = colors.width();
  const int h = colors.height();
  const PoissonOperator op(w, h, cfg.poisson_lambda);
  const std::vector<double> diag = op.diagonal();
  ImageBuf out(w, h);
  parallel_for(3, cfg.workers, [&](int c) {
    const std::vector<double> b =
        op.rhs(colors.plane(c), vt.gradients.gx.plane(c), vt.gradients.gy.plane(c));
    std::vector<double> x(colors.plane(c).begin(), colors.plane(c).end());
    solve_channel(op, b, diag, x, cfg.poisson_tolerance, cfg.poisson_max_iterations);
    std::copy(x.begin(), x.end(), out.plane(c).begin());
  });
  return out;
}

}  // namespace hallu
