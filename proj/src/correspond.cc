#include "hallu/correspond.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>

#include "hallu/error.h"
#include "hallu/parallel.h"
#include "patch_scorer.h"

namespace hallu {

using detail::PatchScorer;
using detail::ScorerScratch;
using detail::ScoringImage;

NNF::NNF(int target_w, int target_h, int patch_size, int candidate_index)
    : grid_w(target_w - patch_size + 1),
      grid_h(target_h - patch_size + 1),
      z(patch_size),
      candidate(candidate_index) {
  if (grid_w < 1 || grid_h < 1) {
    throw InputTooSmallError("target " + std::to_string(target_w) + "x" +
                             std::to_string(target_h) + " is smaller than the " +
                             std::to_string(patch_size) + " px patch");
  }
  entries.resize(static_cast<size_t>(grid_w) * grid_h);
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

uint64_t mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t stream_seed(uint64_t seed, uint64_t stream, uint64_t m, uint64_t pass, uint64_t band) {
  uint64_t h = mix(seed);
  for (uint64_t v : {stream, m, pass, band}) h = mix(h ^ v);
  return h;
}

bool usable(const ImageBuf& candidate, int z) {
  return candidate.width() >= z && candidate.height() >= z;
}

// Source positions keep the whole identity footprint inside the candidate.
struct SourceRange {
  float max_x;
  float max_y;

  float clamp_x(double x) const { return static_cast<float>(std::clamp(x, 0.0, double{max_x})); }
  float clamp_y(double y) const { return static_cast<float>(std::clamp(y, 0.0, double{max_y})); }
};

SourceRange source_range(const ImageBuf& candidate, int z) {
  return {static_cast<float>(candidate.width() - z), static_cast<float>(candidate.height() - z)};
}

// Exhaustive / local translation matching at one pyramid level. `preferred`
// positions break distance ties (closest wins).
struct LevelMatcher {
  const PatchScorer& scorer;
  int z;
  int max_sx;
  int max_sy;

  void best_in_window(int ax, int ay, int x0, int x1, int y0, int y1, double px, double py,
                      PatchTransform& e) const {
    ScorerScratch scratch;
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, max_sx);
    y1 = std::min(y1, max_sy);
    double best = e.dist;
    double best_d2 = (e.sx - px) * (e.sx - px) + (e.sy - py) * (e.sy - py);
    ColorAdjustment adj;
    PatchTransform cand;
    for (int sy = y0; sy <= y1; ++sy) {
      for (int sx = x0; sx <= x1; ++sx) {
        cand.sx = static_cast<float>(sx);
        cand.sy = static_cast<float>(sy);
        // Equal distances still need an exact value for the tie rule.
        const double d = scorer.evaluate(ax, ay, cand, std::nextafter(best, PatchScorer::kInf),
                                         adj, scratch);
        if (d > best) continue;
        const double d2 = (sx - px) * (sx - px) + (sy - py) * (sy - py);
        if (d < best || d2 < best_d2) {
          best = d;
          best_d2 = d2;
          e.sx = cand.sx;
          e.sy = cand.sy;
          e.dist = d;
          e.adjust = adj;
        }
      }
    }
  }
};

NNF match_coarse_to_fine(const ImageBuf& target, const ImageBuf& candidate, int m,
                         const SearchConfig& cfg) {
  const int z = cfg.patch_size;
  auto level_patch = [z](int l) { return std::max(2, z >> l); };
  auto level_dim = [](int d, int l) { return std::max(1, static_cast<int>(std::lround(d / std::ldexp(1.0, l)))); };
  int levels = 4;
  while (levels < 8 && level_dim(target.width(), levels - 1) > 64) ++levels;
  auto fits = [&](int l) {
    const int zl = level_patch(l);
    return level_dim(target.width(), l) >= zl + 2 && level_dim(target.height(), l) >= zl + 2 &&
           level_dim(candidate.width(), l) >= zl + 2 && level_dim(candidate.height(), l) >= zl + 2;
  };
  while (levels > 1 && !fits(levels - 1)) --levels;

  std::vector<ImageBuf> tp{target};
  std::vector<ImageBuf> cp{candidate};
  for (int l = 1; l < levels; ++l) {
    tp.push_back(resize_area(tp.back(), level_dim(target.width(), l), level_dim(target.height(), l)));
    cp.push_back(resize_area(cp.back(), level_dim(candidate.width(), l),
                             level_dim(candidate.height(), l)));
  }

  NNF prev;
  for (int l = levels - 1; l >= 0; --l) {
    const int zl = level_patch(l);
    const ScoringImage st(tp[l]);
    const ScoringImage sc(cp[l]);
    const PatchScorer scorer(st, sc, zl, cfg.lambda);
    NNF cur(tp[l].width(), tp[l].height(), zl, m);
    const LevelMatcher matcher{scorer, zl, cp[l].width() - zl, cp[l].height() - zl};
    const double rx = static_cast<double>(cp[l].width() - zl) / std::max(1, tp[l].width() - zl);
    const double ry = static_cast<double>(cp[l].height() - zl) / std::max(1, tp[l].height() - zl);
    parallel_for(cur.grid_h, cfg.workers, [&](int y) {
      for (int x = 0; x < cur.grid_w; ++x) {
        PatchTransform& e = cur.at(x, y);
        e.dist = PatchScorer::kInf;
        if (l == levels - 1) {
          const double px = x * rx;
          const double py = y * ry;
          e.sx = static_cast<float>(std::lround(std::min<double>(px, matcher.max_sx)));
          e.sy = static_cast<float>(std::lround(std::min<double>(py, matcher.max_sy)));
          matcher.best_in_window(x, y, 0, matcher.max_sx, 0, matcher.max_sy, px, py, e);
        } else {
          const int ox = std::clamp(x / 2, 0, prev.grid_w - 1);
          const int oy = std::clamp(y / 2, 0, prev.grid_h - 1);
          const PatchTransform& parent = prev.at(ox, oy);
          const int px = std::clamp(static_cast<int>(std::lround(2.0 * parent.sx)) + (x - 2 * ox),
                                    0, matcher.max_sx);
          const int py = std::clamp(static_cast<int>(std::lround(2.0 * parent.sy)) + (y - 2 * oy),
                                    0, matcher.max_sy);
          e.sx = static_cast<float>(px);
          e.sy = static_cast<float>(py);
          ScorerScratch scratch;
          e.dist = scorer.evaluate(x, y, e, PatchScorer::kInf, e.adjust, scratch);
          matcher.best_in_window(x, y, px - 2, px + 2, py - 2, py + 2, px, py, e);
        }
        if (l == 0) {
          ScorerScratch scratch;
          e.dist = scorer.evaluate_exact(x, y, e, e.adjust, scratch);
        }
      }
    });
    prev = std::move(cur);
  }
  prev.candidate = m;
  return prev;
}

void validate_nnfs(const ImageBuf& target, const std::vector<NNF>& nnfs,
                   const std::vector<ImageBuf>& candidates) {
  for (const NNF& f : nnfs) {
    if (f.target_w() != target.width() || f.target_h() != target.height()) {
      throw std::invalid_argument("NNF grid does not match the target dimensions");
    }
    if (f.candidate < 0 || f.candidate >= static_cast<int>(candidates.size())) {
      throw std::invalid_argument("NNF refers to a missing candidate");
    }
    if (!usable(candidates[f.candidate], f.z)) {
      throw std::invalid_argument("NNF candidate is smaller than the patch");
    }
  }
}

struct BandJob {
  int nnf;
  int y0;
  int y1;
  int index;
};

class BandScanner {
 public:
  BandScanner(NNF& nnf, const PatchScorer& scorer, const std::vector<float>& box_x,
              const std::vector<float>& box_y, SourceRange range, const SearchConfig& cfg)
      : nnf_(nnf), scorer_(scorer), box_x_(box_x), box_y_(box_y), range_(range), cfg_(cfg) {}

  void scan(int y0, int y1, int pass, std::mt19937_64& rng) {
    const bool forward = pass % 2 == 0;
    const int step = forward ? 1 : -1;
    const double decay = std::ldexp(1.0, -pass);
    for (int y = forward ? y0 : y1 - 1; y >= y0 && y < y1; y += step) {
      for (int x = forward ? 0 : nnf_.grid_w - 1; x >= 0 && x < nnf_.grid_w; x += step) {
        propagate(x, y, x - step, y);
        if (y - step >= y0 && y - step < y1) propagate(x, y, x, y - step);
        random_search(x, y, decay, rng);
      }
    }
  }

 private:
  void try_candidate(int x, int y, const PatchTransform& cand) {
    PatchTransform& e = nnf_.at(x, y);
    if (cand.sx == e.sx && cand.sy == e.sy && cand.scale == e.scale && cand.theta == e.theta &&
        cand.reflect == e.reflect) {
      return;
    }
    ColorAdjustment adj;
    const double d = scorer_.evaluate(x, y, cand, e.dist, adj, scratch_);
    if (d < e.dist) {
      e.sx = cand.sx;
      e.sy = cand.sy;
      e.scale = cand.scale;
      e.theta = cand.theta;
      e.reflect = cand.reflect;
      e.dist = d;
      e.adjust = adj;
    }
  }

  void propagate(int x, int y, int nx, int ny) {
    if (nx < 0 || nx >= nnf_.grid_w) return;
    const PatchTransform& n = nnf_.at(nx, ny);
    const double fx = (n.reflect ? -1.0 : 1.0) * (x - nx);
    const double fy = y - ny;
    const double cs = std::cos(static_cast<double>(n.theta)) * n.scale;
    const double sn = std::sin(static_cast<double>(n.theta)) * n.scale;
    PatchTransform cand = n;
    cand.sx = range_.clamp_x(n.sx + cs * fx - sn * fy);
    cand.sy = range_.clamp_y(n.sy + sn * fx + cs * fy);
    try_candidate(x, y, cand);
  }

  void random_search(int x, int y, double decay, std::mt19937_64& rng) {
    const size_t i = static_cast<size_t>(y) * nnf_.grid_w + x;
    double lo_x = 0.0, hi_x = range_.max_x, lo_y = 0.0, hi_y = range_.max_y;
    int radius = std::max(range_.max_x, range_.max_y) + 1;
    if (cfg_.search_radius > 0) {
      radius = cfg_.search_radius;
      lo_x = std::max(lo_x, std::ceil(static_cast<double>(box_x_[i]) - radius));
      hi_x = std::min(hi_x, std::floor(static_cast<double>(box_x_[i]) + radius));
      lo_y = std::max(lo_y, std::ceil(static_cast<double>(box_y_[i]) - radius));
      hi_y = std::min(hi_y, std::floor(static_cast<double>(box_y_[i]) + radius));
    }
    for (int r = radius; r >= 1; r /= 2) {
      const PatchTransform& e = nnf_.at(x, y);
      std::uniform_int_distribution<int> offset(-r, r);
      const int ox = offset(rng);
      const int oy = offset(rng);
      PatchTransform cand = e;
      cand.sx = static_cast<float>(std::clamp(std::round(static_cast<double>(e.sx) + ox), lo_x, hi_x));
      cand.sy = static_cast<float>(std::clamp(std::round(static_cast<double>(e.sy) + oy), lo_y, hi_y));
      try_candidate(x, y, cand);
    }
    if (cfg_.allow_similarity || cfg_.allow_reflection) {
      const PatchTransform& e = nnf_.at(x, y);
      std::uniform_real_distribution<double> unit(-1.0, 1.0);
      PatchTransform cand = e;
      if (cfg_.allow_similarity) {
        const double half_span = 0.5 * (cfg_.scale_max - cfg_.scale_min);
        cand.scale = static_cast<float>(std::clamp<double>(e.scale + unit(rng) * half_span * decay,
                                                          cfg_.scale_min, cfg_.scale_max));
        cand.theta = static_cast<float>(std::clamp<double>(
            e.theta + unit(rng) * cfg_.theta_max * decay, -cfg_.theta_max, cfg_.theta_max));
      }
      if (cfg_.allow_reflection && unit(rng) > 0.5) cand.reflect = !cand.reflect;
      try_candidate(x, y, cand);
    }
  }

  NNF& nnf_;
  const PatchScorer& scorer_;
  const std::vector<float>& box_x_;
  const std::vector<float>& box_y_;
  SourceRange range_;
  const SearchConfig& cfg_;
  ScorerScratch scratch_;
};

std::vector<BandJob> make_bands(int nnf, int grid_h, int band_rows, int pass) {
  std::vector<BandJob> jobs;
  const int offset = (pass % 2 == 1) ? band_rows / 2 : 0;
  int y0 = 0;
  int y1 = offset > 0 ? offset : band_rows;
  int index = 0;
  while (y0 < grid_h) {
    jobs.push_back({nnf, y0, std::min(y1, grid_h), index++});
    y0 = y1;
    y1 += band_rows;
  }
  return jobs;
}

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<uint32_t>(f)); }

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error("truncated NNF file");
  return uint32_t{b[0]} | uint32_t{b[1]} << 8 | uint32_t{b[2]} << 16 | uint32_t{b[3]} << 24;
}

float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

}  // namespace

std::vector<NNF> CoarseToFineInitializer::initialize(const ImageBuf& target,
                                                     const std::vector<ImageBuf>& candidates,
                                                     const SearchConfig& cfg) const {
  const int z = cfg.patch_size;
  if (!usable(target, z)) {
    throw InputTooSmallError("target is smaller than the " + std::to_string(z) + " px patch");
  }
  std::vector<int> keep;
  for (int m = 0; m < static_cast<int>(candidates.size()); ++m) {
    if (usable(candidates[m], z)) {
      keep.push_back(m);
    } else {
      spdlog::warn("candidate {} ({}x{}) is smaller than the {} px patch; skipped", m,
                   candidates[m].width(), candidates[m].height(), z);
    }
  }
  if (keep.empty()) throw NoCandidatesError("no candidate image is large enough to match");
  std::vector<NNF> out(keep.size());
  // Parallelism lives inside each match; candidates run one after another.
  for (size_t i = 0; i < keep.size(); ++i) {
    out[i] = match_coarse_to_fine(target, candidates[keep[i]], keep[i], cfg);
  }
  return out;
}

std::vector<NNF> init_nnfs(const ImageBuf& target, const std::vector<ImageBuf>& candidates,
                           const SearchConfig& cfg) {
  return CoarseToFineInitializer{}.initialize(target, candidates, cfg);
}

std::vector<NNF> upsample_nnfs(const std::vector<NNF>& nnfs, double c, int target_w,
                               int target_h, const std::vector<ImageBuf>& candidates) {
  if (!(c > 1.0)) throw std::invalid_argument("upsample_nnfs: factor must exceed 1");
  std::vector<NNF> out;
  out.reserve(nnfs.size());
  for (const NNF& old : nnfs) {
    if (old.candidate < 0 || old.candidate >= static_cast<int>(candidates.size())) {
      throw std::invalid_argument("upsample_nnfs: NNF refers to a missing candidate");
    }
    const SourceRange range = source_range(candidates[old.candidate], old.z);
    NNF nnf(target_w, target_h, old.z, old.candidate);
    for (int y = 0; y < nnf.grid_h; ++y) {
      const int oy = std::clamp(static_cast<int>(std::lround(y / c)), 0, old.grid_h - 1);
      for (int x = 0; x < nnf.grid_w; ++x) {
        const int ox = std::clamp(static_cast<int>(std::lround(x / c)), 0, old.grid_w - 1);
        PatchTransform e = old.at(ox, oy);
        e.sx = range.clamp_x(std::round(x + c * (double{e.sx} - ox)));
        e.sy = range.clamp_y(std::round(y + c * (double{e.sy} - oy)));
        e.dist = kNaN;
        nnf.at(x, y) = e;
      }
    }
    out.push_back(std::move(nnf));
  }
  return out;
}

std::vector<NNF> search(const ImageBuf& target, std::vector<NNF> nnfs,
                        const std::vector<ImageBuf>& candidates, const SearchConfig& cfg,
                        uint64_t stream) {
  validate_nnfs(target, nnfs, candidates);
  if (nnfs.empty()) return nnfs;
  const ScoringImage st(target);
  std::vector<std::unique_ptr<ScoringImage>> sources(candidates.size());
  std::vector<std::unique_ptr<PatchScorer>> scorers;
  std::vector<SourceRange> ranges;
  for (const NNF& f : nnfs) {
    auto& src = sources[f.candidate];
    if (!src) src = std::make_unique<ScoringImage>(candidates[f.candidate]);
    scorers.push_back(std::make_unique<PatchScorer>(st, *src, f.z, cfg.lambda));
    ranges.push_back(source_range(candidates[f.candidate], f.z));
  }
  const int count = static_cast<int>(nnfs.size());

  // Rebuild every cached distance against the current target.
  std::vector<std::pair<int, int>> rows;
  for (int m = 0; m < count; ++m) {
    for (int y = 0; y < nnfs[m].grid_h; ++y) rows.emplace_back(m, y);
  }
  parallel_for(static_cast<int>(rows.size()), cfg.workers, [&](int i) {
    const auto [m, y] = rows[i];
    ScorerScratch scratch;
    for (int x = 0; x < nnfs[m].grid_w; ++x) {
      PatchTransform& e = nnfs[m].at(x, y);
      e.sx = ranges[m].clamp_x(e.sx);
      e.sy = ranges[m].clamp_y(e.sy);
      e.dist = scorers[m]->evaluate_exact(x, y, e, e.adjust, scratch);
    }
  });
  const std::vector<NNF> before = nnfs;

  std::vector<std::vector<float>> box_x(count);
  std::vector<std::vector<float>> box_y(count);
  for (int m = 0; m < count; ++m) {
    for (const PatchTransform& e : nnfs[m].entries) {
      box_x[m].push_back(e.sx);
      box_y[m].push_back(e.sy);
    }
  }

  const int band_rows = std::max(2, cfg.band_rows);
  for (int pass = 0; pass < cfg.iterations; ++pass) {
    std::vector<BandJob> jobs;
    for (int m = 0; m < count; ++m) {
      auto bands = make_bands(m, nnfs[m].grid_h, band_rows, pass);
      jobs.insert(jobs.end(), bands.begin(), bands.end());
    }
    parallel_for(static_cast<int>(jobs.size()), cfg.workers, [&](int j) {
      const BandJob& job = jobs[j];
      std::mt19937_64 rng(stream_seed(cfg.seed, stream, static_cast<uint64_t>(nnfs[job.nnf].candidate),
                                      static_cast<uint64_t>(pass), static_cast<uint64_t>(job.index)));
      BandScanner scanner(nnfs[job.nnf], *scorers[job.nnf], box_x[job.nnf], box_y[job.nnf],
                          ranges[job.nnf], cfg);
      scanner.scan(job.y0, job.y1, pass, rng);
    });
  }

  // The scan compares single-precision distances. Changed entries get their
  // cached distance recomputed in double, and an entry whose new transform is
  // not better at that precision reverts to its starting transform.
  parallel_for(static_cast<int>(rows.size()), cfg.workers, [&](int i) {
    const auto [m, y] = rows[i];
    ScorerScratch scratch;
    for (int x = 0; x < nnfs[m].grid_w; ++x) {
      PatchTransform& e = nnfs[m].at(x, y);
      const PatchTransform& old = before[m].at(x, y);
      if (e.sx == old.sx && e.sy == old.sy && e.scale == old.scale && e.theta == old.theta &&
          e.reflect == old.reflect) {
        e = old;
        continue;
      }
      ColorAdjustment adj;
      const double d = scorers[m]->evaluate_exact(x, y, e, adj, scratch);
      if (d <= old.dist) {
        e.dist = d;
        e.adjust = adj;
      } else {
        e = old;
      }
    }
  });
  return nnfs;
}

double entry_distance(const ImageBuf& target, const ImageBuf& candidate, int ax, int ay,
                      const PatchTransform& t, int z, double lambda, ColorAdjustment* adj) {
  PatchTransform anchor;
  anchor.sx = static_cast<float>(ax);
  anchor.sy = static_cast<float>(ay);
  const Patch tp = extract_patch(target, gradient(target), anchor, z);
  const Patch sp = extract_patch(candidate, gradient(candidate), t, z);
  const ColorAdjustment a = compute_color_adjustment(sp, tp);
  if (adj) *adj = a;
  return patch_distance(apply_color_adjustment(sp, a), tp, lambda);
}

void write_nnf(const NNF& nnf, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os.write("NNF1", 4);
  put_u32(os, static_cast<uint32_t>(nnf.grid_w));
  put_u32(os, static_cast<uint32_t>(nnf.grid_h));
  put_u32(os, static_cast<uint32_t>(nnf.candidate));
  for (int y = 0; y < nnf.grid_h; ++y) {
    for (int x = 0; x < nnf.grid_w; ++x) {
      const PatchTransform& e = nnf.at(x, y);
      put_u32(os, static_cast<uint32_t>(x));
      put_u32(os, static_cast<uint32_t>(y));
      put_f32(os, e.sx);
      put_f32(os, e.sy);
      put_f32(os, e.scale);
      put_f32(os, e.theta);
      const char reflect = e.reflect ? 1 : 0;
      os.write(&reflect, 1);
      put_f32(os, static_cast<float>(e.dist));
    }
  }
  if (!os) throw Error("failed writing " + path.string());
}

NNF read_nnf(const std::filesystem::path& path, int patch_size) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "NNF1", 4) != 0) {
    throw Error("bad NNF magic in " + path.string());
  }
  const auto gw = static_cast<int>(get_u32(is));
  const auto gh = static_cast<int>(get_u32(is));
  const auto cand = static_cast<int>(get_u32(is));
  NNF nnf(gw + patch_size - 1, gh + patch_size - 1, patch_size, cand);
  for (size_t i = 0; i < nnf.entries.size(); ++i) {
    const auto x = static_cast<int>(get_u32(is));
    const auto y = static_cast<int>(get_u32(is));
    if (x >= gw || y >= gh) throw Error("NNF record anchor out of range");
    PatchTransform& e = nnf.at(x, y);
    e.sx = get_f32(is);
    e.sy = get_f32(is);
    e.scale = get_f32(is);
    e.theta = get_f32(is);
    char reflect = 0;
    if (!is.read(&reflect, 1)) throw Error("truncated NNF file");
    e.reflect = reflect != 0;
    e.dist = get_f32(is);
  }
  return nnf;
}

}  // namespace hallu
