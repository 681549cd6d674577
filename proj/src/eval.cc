#include "hallu/eval.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "hallu/error.h"

namespace hallu {

double psnr(const ImageBuf& img, const ImageBuf& ref) {
  if (!img.same_dims(ref)) throw std::invalid_argument("psnr: images differ in size");
  const auto a = img.data();
  const auto b = ref.data();
  double sse = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sse += (a[i] - b[i]) * (a[i] - b[i]);
  if (sse == 0.0) return kPsnrInfinity;
  const double mse = sse / static_cast<double>(a.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double reconstruction_error(const ImageBuf& output, const ImageBuf& input, double a) {
  const auto [ew, eh] = scaled_dims(input.width(), input.height(), a);
  if (output.width() != ew || output.height() != eh) {
    throw std::invalid_argument("reconstruction_error: output is " +
                                std::to_string(output.width()) + "x" +
                                std::to_string(output.height()) + ", expected " +
                                std::to_string(ew) + "x" + std::to_string(eh));
  }
  return rms_difference(resize_area(output, input.width(), input.height()), input);
}

namespace {

ImageBuf add_noise(const ImageBuf& img, double sigma, uint64_t seed) {
  if (!(sigma > 0.0)) throw std::invalid_argument("noise sigma must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  ImageBuf out = img;
  for (double& v : out.data()) v += noise(rng);
  out.clamp();
  return out;
}

double sample_replicate(const ImageBuf& img, int c, double x, double y) {
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
  const double top = img.at(c, x0, y0) + fx * (img.at(c, x1, y0) - img.at(c, x0, y0));
  const double bot = img.at(c, x0, y1) + fx * (img.at(c, x1, y1) - img.at(c, x0, y1));
  return top + fy * (bot - top);
}

ImageBuf motion_blur(const ImageBuf& img, int length, double angle) {
  if (length < 1) throw std::invalid_argument("motion blur length must be >= 1");
  if (length == 1) return img;
  const double dx = std::cos(angle);
  const double dy = std::sin(angle);
  std::vector<double> offsets(length);
  for (int t = 0; t < length; ++t) offsets[t] = t - (length - 1) / 2.0;
  ImageBuf out(img.width(), img.height());
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        double sum = 0.0;
        for (double o : offsets) sum += sample_replicate(img, c, x + o * dx, y + o * dy);
        out.at(c, x, y) = sum / length;
      }
    }
  }
  return out;
}

// Strongly connected components of the "i beat j" graph, each sorted, in
// order of their smallest member.
std::vector<std::vector<int>> strong_components(const std::vector<std::vector<double>>& wins) {
  const int n = static_cast<int>(wins.size());
  auto reach = [&](int src, bool forward) {
    std::vector<char> seen(n, 0);
    std::vector<int> stack{src};
    seen[src] = 1;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int v = 0; v < n; ++v) {
        const double w = forward ? wins[u][v] : wins[v][u];
        if (w > 0.0 && !seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
      }
    }
    return seen;
  };
  std::vector<int> comp(n, -1);
  std::vector<std::vector<int>> comps;
  for (int i = 0; i < n; ++i) {
    if (comp[i] >= 0) continue;
    const auto fwd = reach(i, true);
    const auto bwd = reach(i, false);
    std::vector<int> members;
    for (int j = 0; j < n; ++j) {
      if (fwd[j] && bwd[j]) {
        comp[j] = static_cast<int>(comps.size());
        members.push_back(j);
      }
    }
    comps.push_back(std::move(members));
  }
  return comps;
}

std::string describe_components(const std::vector<std::vector<int>>& comps) {
  std::string out;
  for (size_t k = 0; k < comps.size(); ++k) {
    out += k == 0 ? "{" : ", {";
    for (size_t i = 0; i < comps[k].size(); ++i) {
      if (i) out += ",";
      out += std::to_string(comps[k][i]);
    }
    out += "}";
  }
  return out;
}

}  // namespace

ImageBuf degrade(const ImageBuf& img, const Degradation& kind, uint64_t seed) {
  if (const auto* g = std::get_if<GaussianNoise>(&kind)) return add_noise(img, g->sigma, seed);
  const auto& m = std::get<MotionBlur>(kind);
  return motion_blur(img, m.length, m.angle);
}

double BtResult::probability(int i, int j) const {
  const double d = scores.at(j) - scores.at(i);
  return 1.0 / (1.0 + std::exp(d));
}

BtResult bt_scores(const std::vector<std::vector<double>>& counts, const BtOptions& opts) {
  const int n = static_cast<int>(counts.size());
  if (n < 2) throw std::invalid_argument("bt_scores needs at least two methods");
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(counts[i].size()) != n) {
      throw std::invalid_argument("bt_scores: counts must be square");
    }
    for (int j = 0; j < n; ++j) {
      if (!(counts[i][j] >= 0.0) || !std::isfinite(counts[i][j])) {
        throw std::invalid_argument("bt_scores: counts must be finite and non-negative");
      }
    }
  }
  if (opts.baseline < 0 || opts.baseline >= n) {
    throw std::invalid_argument("bt_scores: baseline index out of range");
  }
  std::vector<std::vector<double>> wins = counts;
  for (int i = 0; i < n; ++i) wins[i][i] = 0.0;
  const auto comps = strong_components(wins);
  if (comps.size() > 1) {
    throw EstimationError("comparison graph is not strongly connected; components: " +
                          describe_components(comps));
  }

  std::vector<double> total_wins(n, 0.0);
  for (int i = 0; i < n; ++i) {
    total_wins[i] = std::accumulate(wins[i].begin(), wins[i].end(), 0.0);
  }
  std::vector<double> p(n, 1.0);
  std::vector<double> next(n);
  BtResult result;
  result.baseline = opts.baseline;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    for (int i = 0; i < n; ++i) {
      double denom = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double games = wins[i][j] + wins[j][i];
        if (games > 0.0) denom += games / (p[i] + p[j]);
      }
      next[i] = total_wins[i] / denom;
    }
    // Normalize to unit geometric mean so the iteration cannot drift.
    double log_mean = 0.0;
    for (double v : next) log_mean += std::log(v);
    log_mean /= n;
    double change = 0.0;
    for (int i = 0; i < n; ++i) {
      const double s_new = std::log(next[i]) - log_mean;
      change = std::max(change, std::abs(s_new - std::log(p[i])));
      p[i] = std::exp(s_new);
    }
    result.iterations = it;
    if (change < opts.tolerance) {
      result.scores.resize(n);
      const double base = std::log(p[opts.baseline]);
      for (int i = 0; i < n; ++i) result.scores[i] = std::log(p[i]) - base;
      return result;
    }
  }
  throw EstimationError("Bradley-Terry MM did not converge in " +
                        std::to_string(opts.max_iterations) + " iterations");
}

SelfOracleReport self_oracle(const ImageBuf& gt, double a, const HallucinationConfig& cfg) {
  SelfOracleReport report;
  const ImageBuf small = downsample(gt, a);
  report.bicubic = resize_bicubic(small, gt.width(), gt.height());
  report.bicubic.clamp();
  HallucinationResult res =
      hallucinate_to(small, {gt}, gt.width(), gt.height(), cfg,
                     [&report](const IterationStats& s) { report.stats.push_back(s); });
  report.output = std::move(res.image);
  report.psnr_ours = psnr(report.output, gt);
  report.psnr_bicubic = psnr(report.bicubic, gt);
  report.gain = report.psnr_ours - report.psnr_bicubic;
  report.reconstruction_rms = rms_difference(
      resize_area(report.output, small.width(), small.height()), small);
  return report;
}

}  // namespace hallu
