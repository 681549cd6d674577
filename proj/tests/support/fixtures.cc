#include "fixtures.h"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <unistd.h>

namespace hallu::testing {

std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(HALLU_TEST_DATA) / name;
}

ImageBuf noise_image(int w, int h, uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  ImageBuf img(w, h);
  for (double& v : img.data()) v = dist(rng);
  return img;
}

ImageBuf smooth_texture(int w, int h, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(0.02, 0.25);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  ImageBuf img(w, h);
  for (int c = 0; c < 3; ++c) {
    struct Wave {
      double fx, fy, ph;
    };
    std::array<Wave, 4> waves;
    for (Wave& wv : waves) wv = {freq(rng), freq(rng), phase(rng)};
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double v = 0.0;
        for (const Wave& wv : waves) v += std::sin(wv.fx * x + wv.fy * y + wv.ph);
        img.at(c, x, y) = 127.5 + 31.0 * v;
      }
    }
  }
  return img;
}

ImageBuf crop(const ImageBuf& img, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || x + w > img.width() || y + h > img.height()) {
    throw std::invalid_argument("crop outside image");
  }
  ImageBuf out(w, h);
  for (int c = 0; c < 3; ++c) {
    for (int j = 0; j < h; ++j) {
      for (int i = 0; i < w; ++i) out.at(c, i, j) = img.at(c, x + i, y + j);
    }
  }
  return out;
}

ImageBuf mirror(const ImageBuf& img) {
  ImageBuf out(img.width(), img.height());
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        out.at(c, x, y) = img.at(c, img.width() - 1 - x, y);
      }
    }
  }
  return out;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = std::filesystem::temp_directory_path() /
          ("hallu_test_" + std::to_string(::getpid()) + "_" + std::to_string(stamp) + "_" +
           std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

namespace {

std::array<double, 3> bilinear(const ImageBuf& img, double x, double y) {
  x = std::min(std::max(x, 0.0), img.width() - 1.0);
  y = std::min(std::max(y, 0.0), img.height() - 1.0);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    out[c] = (1 - fx) * (1 - fy) * img.at(c, x0, y0) + fx * (1 - fy) * img.at(c, x1, y0) +
             (1 - fx) * fy * img.at(c, x0, y1) + fx * fy * img.at(c, x1, y1);
  }
  return out;
}

// Warped source patch on a (z+1)^2 grid, channel-major: s[c][v][u].
struct Warped {
  int g;
  std::vector<double> s;
  double at(int c, int u, int v) const { return s[(static_cast<size_t>(c) * g + v) * g + u]; }
};

Warped warp(const ImageBuf& src, const PatchTransform& t, int z) {
  Warped w{z + 1, std::vector<double>(3 * static_cast<size_t>(z + 1) * (z + 1))};
  const double cz = (z - 1) / 2.0;
  const double f = t.reflect ? -1.0 : 1.0;
  const double cs = std::cos(double{t.theta});
  const double sn = std::sin(double{t.theta});
  for (int v = 0; v <= z; ++v) {
    for (int u = 0; u <= z; ++u) {
      const double du = f * (u - cz);
      const double dv = v - cz;
      const double x = t.sx + cz + t.scale * (cs * du - sn * dv);
      const double y = t.sy + cz + t.scale * (sn * du + cs * dv);
      const auto val = bilinear(src, x, y);
      for (int c = 0; c < 3; ++c) w.s[(static_cast<size_t>(c) * w.g + v) * w.g + u] = val[c];
    }
  }
  return w;
}

double image_gx(const ImageBuf& img, int c, int x, int y) {
  return x + 1 < img.width() ? img.at(c, x + 1, y) - img.at(c, x, y) : 0.0;
}

double image_gy(const ImageBuf& img, int c, int x, int y) {
  return y + 1 < img.height() ? img.at(c, x, y + 1) - img.at(c, x, y) : 0.0;
}

struct Adjust {
  std::array<double, 3> gain, bias;
};

Adjust reference_adjust(const Warped& s, const ImageBuf& target, int ax, int ay, int z) {
  Adjust a{};
  const double n = static_cast<double>(z) * z;
  for (int c = 0; c < 3; ++c) {
    double ms = 0, mt = 0;
    for (int v = 0; v < z; ++v) {
      for (int u = 0; u < z; ++u) {
        ms += s.at(c, u, v);
        mt += target.at(c, ax + u, ay + v);
      }
    }
    ms /= n;
    mt /= n;
    double vs = 0, vt = 0;
    for (int v = 0; v < z; ++v) {
      for (int u = 0; u < z; ++u) {
        vs += (s.at(c, u, v) - ms) * (s.at(c, u, v) - ms);
        vt += (target.at(c, ax + u, ay + v) - mt) * (target.at(c, ax + u, ay + v) - mt);
      }
    }
    const double ss = std::sqrt(vs / n);
    const double st = std::sqrt(vt / n);
    double g = 1.0;
    if (ss >= 5.0) g = std::min(std::max(st / ss, 1.0), 1.3);
    a.gain[c] = g;
    a.bias[c] = std::min(std::max(mt - g * ms, -20.0), 20.0);
  }
  return a;
}

}  // namespace

double reference_distance(const ImageBuf& target, const ImageBuf& source, int ax, int ay,
                          const PatchTransform& t, int z, double lambda) {
  const Warped s = warp(source, t, z);
  const Adjust a = reference_adjust(s, target, ax, ay, z);
  double color = 0.0;
  double grad = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double g = a.gain[c];
    for (int v = 0; v < z; ++v) {
      for (int u = 0; u < z; ++u) {
        const double dc = g * s.at(c, u, v) + a.bias[c] - target.at(c, ax + u, ay + v);
        const double dx =
            g * (s.at(c, u + 1, v) - s.at(c, u, v)) - image_gx(target, c, ax + u, ay + v);
        const double dy =
            g * (s.at(c, u, v + 1) - s.at(c, u, v)) - image_gy(target, c, ax + u, ay + v);
        color += dc * dc;
        grad += dx * dx + dy * dy;
      }
    }
  }
  return color + lambda * grad;
}

double ExhaustiveResult::mean() const {
  double s = 0.0;
  for (double d : dist) s += d;
  return s / static_cast<double>(dist.size());
}

ExhaustiveResult exhaustive_nnf(const ImageBuf& target, const ImageBuf& source, int z,
                                double lambda) {
  const int gw = target.width() - z + 1;
  const int gh = target.height() - z + 1;
  const int rw = source.width() - z + 1;
  const int rh = source.height() - z + 1;
  ExhaustiveResult r;
  r.dist.assign(static_cast<size_t>(gw) * gh, std::numeric_limits<double>::infinity());
  r.sx.assign(r.dist.size(), 0);
  r.sy.assign(r.dist.size(), 0);
  const double n = static_cast<double>(z) * z;
  auto stats = [&](const ImageBuf& img, int x, int y, int c, double& m, double& sd) {
    double s = 0, q = 0;
    for (int v = 0; v < z; ++v) {
      for (int u = 0; u < z; ++u) {
        const double val = img.at(c, x + u, y + v);
        s += val;
        q += val * val;
      }
    }
    m = s / n;
    double var = 0;
    for (int v = 0; v < z; ++v) {
      for (int u = 0; u < z; ++u) {
        const double d = img.at(c, x + u, y + v) - m;
        var += d * d;
      }
    }
    sd = std::sqrt(var / n);
  };
  std::vector<std::array<double, 6>> src_stats(static_cast<size_t>(rw) * rh);
  for (int y = 0; y < rh; ++y) {
    for (int x = 0; x < rw; ++x) {
      auto& st = src_stats[static_cast<size_t>(y) * rw + x];
      for (int c = 0; c < 3; ++c) stats(source, x, y, c, st[c], st[3 + c]);
    }
  }
  for (int ay = 0; ay < gh; ++ay) {
    for (int ax = 0; ax < gw; ++ax) {
      std::array<double, 3> mt{}, sdt{};
      for (int c = 0; c < 3; ++c) stats(target, ax, ay, c, mt[c], sdt[c]);
      const size_t a = static_cast<size_t>(ay) * gw + ax;
      for (int sy = 0; sy < rh; ++sy) {
        for (int sx = 0; sx < rw; ++sx) {
          const auto& st = src_stats[static_cast<size_t>(sy) * rw + sx];
          double d = 0.0;
          for (int c = 0; c < 3; ++c) {
            double g = 1.0;
            if (st[3 + c] >= 5.0) g = std::min(std::max(sdt[c] / st[3 + c], 1.0), 1.3);
            const double b = std::min(std::max(mt[c] - g * st[c], -20.0), 20.0);
            for (int v = 0; v < z; ++v) {
              for (int u = 0; u < z; ++u) {
                const double dc =
                    g * source.at(c, sx + u, sy + v) + b - target.at(c, ax + u, ay + v);
                const double dx = g * image_gx(source, c, sx + u, sy + v) -
                                  image_gx(target, c, ax + u, ay + v);
                const double dy = g * image_gy(source, c, sx + u, sy + v) -
                                  image_gy(target, c, ax + u, ay + v);
                d += dc * dc + lambda * (dx * dx + dy * dy);
              }
            }
          }
          if (d < r.dist[a]) {
            r.dist[a] = d;
            r.sx[a] = sx;
            r.sy[a] = sy;
          }
        }
      }
    }
  }
  return r;
}

namespace {

bool coherent_pair(const PatchTransform& a, int ax, int ay, const PatchTransform& b, int bx,
                   int by, const CoherenceThresholds& th) {
  const double dx = (a.sx - ax) - (b.sx - bx);
  const double dy = (a.sy - ay) - (b.sy - by);
  return std::fabs(dx) <= th.position && std::fabs(dy) <= th.position &&
         std::fabs(double{a.scale} - double{b.scale}) <= th.scale &&
         std::fabs(double{a.theta} - double{b.theta}) <= th.theta && a.reflect == b.reflect;
}

}  // namespace

double brute_coherence(const NNF& nnf, int px, int py, int window,
                       const CoherenceThresholds& th) {
  const int r = window / 2;
  int count = 0;
  int area = 0;
  for (int y = 0; y < nnf.grid_h; ++y) {
    for (int x = 0; x < nnf.grid_w; ++x) {
      if (std::abs(x - px) > r || std::abs(y - py) > r) continue;
      if (x == px && y == py) continue;
      ++area;
      if (coherent_pair(nnf.at(x, y), x, y, nnf.at(px, py), px, py, th)) ++count;
    }
  }
  return area == 0 ? 0.0 : -static_cast<double>(count) / area;
}

NNFMap brute_merge_winners(const std::vector<NNF>& nnfs, const NNFMap* prev, double alpha_coh,
                           double alpha_con, int window, const CoherenceThresholds& th) {
  const int gw = nnfs[0].grid_w;
  const int gh = nnfs[0].grid_h;
  NNFMap out(gw, gh);
  for (int y = 0; y < gh; ++y) {
    for (int x = 0; x < gw; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (size_t m = 0; m < nnfs.size(); ++m) {
        double con = 0.0;
        if (prev && !prev->index.empty()) {
          int hits = 0;
          for (uint8_t l : prev->index) hits += l == m;
          con = -static_cast<double>(hits) / prev->index.size();
        }
        const double e = nnfs[m].at(x, y).dist +
                         alpha_coh * brute_coherence(nnfs[m], x, y, window, th) + alpha_con * con;
        if (e < best) {
          best = e;
          out.at(x, y) = static_cast<uint8_t>(m);
        }
      }
    }
  }
  return out;
}

NNFMap brute_majority(const NNFMap& map, int kernel) {
  NNFMap out(map.grid_w, map.grid_h);
  const int lo = -(kernel / 2);
  const int hi = kernel - 1 - kernel / 2;
  for (int y = 0; y < map.grid_h; ++y) {
    for (int x = 0; x < map.grid_w; ++x) {
      std::array<int, 256> counts{};
      for (int dy = lo; dy <= hi; ++dy) {
        for (int dx = lo; dx <= hi; ++dx) {
          const int xx = x + dx;
          const int yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= map.grid_w || yy >= map.grid_h) continue;
          ++counts[map.at(xx, yy)];
        }
      }
      int best = 0;
      for (int l = 1; l < 256; ++l) {
        if (counts[l] > counts[best]) best = l;
      }
      out.at(x, y) = static_cast<uint8_t>(best);
    }
  }
  return out;
}

VoteTarget brute_vote(int w, int h, const NNFMap& map, const std::vector<NNF>& nnfs,
                      const std::vector<ImageBuf>& candidates,
                      const std::vector<double>& weights) {
  const int z = nnfs[0].z;
  ImageBuf num(w, h), ngx(w, h), ngy(w, h);
  std::vector<double> den(static_cast<size_t>(w) * h, 0.0);
  for (int ay = 0; ay < map.grid_h; ++ay) {
    for (int ax = 0; ax < map.grid_w; ++ax) {
      const size_t a = static_cast<size_t>(ay) * map.grid_w + ax;
      const NNF& f = nnfs[map.index[a]];
      const PatchTransform& t = f.entries[a];
      const Warped s = warp(candidates[f.candidate], t, z);
      const double wt = weights[a];
      for (int v = 0; v < z; ++v) {
        for (int u = 0; u < z; ++u) {
          den[static_cast<size_t>(ay + v) * w + ax + u] += wt;
          for (int c = 0; c < 3; ++c) {
            const double g = t.adjust.gain[c];
            num.at(c, ax + u, ay + v) += wt * (g * s.at(c, u, v) + t.adjust.bias[c]);
            ngx.at(c, ax + u, ay + v) += wt * g * (s.at(c, u + 1, v) - s.at(c, u, v));
            ngy.at(c, ax + u, ay + v) += wt * g * (s.at(c, u, v + 1) - s.at(c, u, v));
          }
        }
      }
    }
  }
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double d = den[static_cast<size_t>(y) * w + x];
        num.at(c, x, y) /= d;
        ngx.at(c, x, y) /= d;
        ngy.at(c, x, y) /= d;
      }
    }
  }
  return {num, {ngx, ngy}, den};
}

ImageBuf dense_poisson(const VoteTarget& vt, double lambda) {
  const int w = vt.colors.width();
  const int h = vt.colors.height();
  const int n = w * h;
  // Edge-incidence matrix over interior forward-difference edges.
  const int edges = (w - 1) * h + w * (h - 1);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(edges, n);
  int e = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x + 1 < w; ++x, ++e) {
      d(e, y * w + x) = -1.0;
      d(e, y * w + x + 1) = 1.0;
    }
  }
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x < w; ++x, ++e) {
      d(e, y * w + x) = -1.0;
      d(e, (y + 1) * w + x) = 1.0;
    }
  }
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) + lambda * d.transpose() * d;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  ImageBuf out(w, h);
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd g(edges);
    e = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x + 1 < w; ++x) g(e++) = vt.gradients.gx.at(c, x, y);
    }
    for (int y = 0; y + 1 < h; ++y) {
      for (int x = 0; x < w; ++x) g(e++) = vt.gradients.gy.at(c, x, y);
    }
    Eigen::VectorXd col(n);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) col(y * w + x) = vt.colors.at(c, x, y);
    }
    const Eigen::VectorXd sol = ldlt.solve(col + lambda * d.transpose() * g);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(c, x, y) = sol(y * w + x);
    }
  }
  return out;
}

}  // namespace hallu::testing
