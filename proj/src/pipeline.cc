#include "hallu/pipeline.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "hallu/error.h"
#include "hallu/image_io.h"

namespace hallu {

SearchConfig HallucinationConfig::search_config() const {
  SearchConfig s;
  s.patch_size = patch_size;
  s.lambda = lambda;
  s.search_radius = search_radius;
  s.iterations = pm_iterations;
  s.scale_min = scale_min;
  s.scale_max = scale_max;
  s.theta_max = theta_max;
  s.allow_similarity = scale_min < scale_max || theta_max > 0.0f;
  s.allow_reflection = allow_reflection;
  s.seed = seed;
  s.workers = workers;
  return s;
}

FuseConfig HallucinationConfig::fuse_config() const {
  FuseConfig f;
  f.alpha_coh = alpha_coh;
  f.alpha_con = alpha_con;
  f.majority_kernel = patch_size;
  f.poisson_lambda = poisson_lambda;
  f.workers = workers;
  return f;
}

void HallucinationConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (patch_size < 2 || patch_size % 2 != 0) fail("patch size must be an even number >= 2");
  if (!(lambda > 0.0)) fail("lambda must be positive");
  if (!(alpha_coh > 0.0) || !(alpha_con > 0.0)) fail("alpha_coh and alpha_con must be positive");
  if (search_radius < 1) fail("search radius must be positive");
  if (max_samples < 1 || max_samples > 255) fail("sample count must lie in [1, 255]");
  if (pm_iterations < 1) fail("PatchMatch iterations must be positive");
  if (!(scale_min > 0.0f) || scale_min > 1.0f || scale_max < 1.0f) {
    fail("scale range must contain 1");
  }
  if (theta_max < 0.0f) fail("rotation range must be non-negative");
  if (!(alpha_decay > 0.0) || alpha_decay > 1.0) fail("alpha decay must lie in (0, 1]");
  if (!(target_step > 1.0)) fail("per-scale step must exceed 1");
  if (!(poisson_lambda > 0.0)) fail("Poisson gradient weight must be positive");
}

ScaleSchedule compute_schedule(double magnification, int width, int height, int patch_size,
                               double target_step, double alpha_decay) {
  if (!(magnification > 1.0)) {
    throw std::invalid_argument("magnification must exceed 1, got " + std::to_string(magnification));
  }
  if (width < 1 || height < 1) throw std::invalid_argument("input dims must be positive");
  ScaleSchedule s;
  s.magnification = magnification;
  // The epsilon keeps exact powers of the step (e.g. 1.44) from rounding up.
  const double ratio = std::log(magnification) / std::log(target_step);
  s.scale_count = std::max(1, static_cast<int>(std::ceil(ratio - 1e-9)));
  const int n = s.scale_count;
  s.step = std::pow(magnification, 1.0 / n);
  for (int k = 1; k <= n; ++k) {
    ScaleStep st;
    st.factor = k == n ? magnification : std::pow(s.step, k);
    st.width = static_cast<int>(std::lround(st.factor * width));
    st.height = static_cast<int>(std::lround(st.factor * height));
    st.alpha = std::pow(alpha_decay, k - 1);
    if (n == 1) {
      st.iterations = 8;
    } else {
      const int num = 8 * (n - 1) - 7 * (k - 1);
      st.iterations = (num + (n - 1) - 1) / (n - 1);
    }
    s.steps.push_back(st);
  }
  if (s.steps.front().width < patch_size || s.steps.front().height < patch_size) {
    throw InputTooSmallError("first scale (" + std::to_string(s.steps.front().width) + "x" +
                             std::to_string(s.steps.front().height) + ") is smaller than the " +
                             std::to_string(patch_size) + " px patch");
  }
  return s;
}

CandidateSet prepare_candidates(const std::vector<ImageBuf>& samples, int width, int height,
                                double c, int patch_size) {
  CandidateSet set;
  for (size_t i = 0; i < samples.size(); ++i) {
    ImageBuf cand = resize_closest(width, height, samples[i]);
    if (cand.width() < patch_size || cand.height() < patch_size) {
      spdlog::warn("sample {} resizes to {}x{}, smaller than the {} px patch; dropped", i,
                   cand.width(), cand.height(), patch_size);
      continue;
    }
    set.lowpass.push_back(low_pass(c, cand));
    set.candidates.push_back(std::move(cand));
    set.sample_index.push_back(static_cast<int>(i));
  }
  return set;
}

ImageBuf inject(const ImageBuf& i0, const ImageBuf& ik, double alpha, double ck) {
  const auto [ew, eh] = scaled_dims(i0.width(), i0.height(), ck);
  if (std::abs(ik.width() - ew) > 1 || std::abs(ik.height() - eh) > 1 ||
      ik.width() < i0.width() || ik.height() < i0.height()) {
    throw std::invalid_argument("inject: image is " + std::to_string(ik.width()) + "x" +
                                std::to_string(ik.height()) + ", expected " + std::to_string(ew) +
                                "x" + std::to_string(eh));
  }
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("inject: alpha must lie in [0,1]");
  const FrequencyBands bands = freq_split(ik, i0.width(), i0.height());
  const ImageBuf up = resize_bilinear(i0, ik.width(), ik.height());
  ImageBuf out = ik;
  auto o = out.data();
  auto u = up.data();
  auto l = bands.low.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] += alpha * (u[i] - l[i]);
  return out;
}

namespace {

std::vector<double> contribution_fractions(const NNFMap& map, int count) {
  std::vector<double> frac(count, 0.0);
  for (int m = 0; m < count; ++m) frac[m] = -contribution(m, map);
  return frac;
}

std::string scale_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scale_%02d", k);
  return buf;
}

}  // namespace

EnergyTerms energy(const ImageBuf& ik, const ImageBuf& i0, const std::vector<NNF>& nnfs,
                   const NNFMap& map, const HallucinationConfig& cfg, double alpha) {
  EnergyTerms e;
  const ImageBuf down = resize_area(ik, i0.width(), i0.height());
  const auto d = down.data();
  const auto r = i0.data();
  for (size_t i = 0; i < d.size(); ++i) e.recon += (d[i] - r[i]) * (d[i] - r[i]);
  e.recon *= alpha;

  const FuseConfig fc = cfg.fuse_config();
  std::vector<std::vector<double>> coh(nnfs.size());
  std::vector<double> con(nnfs.size());
  for (size_t m = 0; m < nnfs.size(); ++m) {
    coh[m] = coherence_field(nnfs[m], fc.coherence_window, fc.thresholds, fc.workers);
    con[m] = contribution(static_cast<int>(m), map);
  }
  for (size_t i = 0; i < map.index.size(); ++i) {
    const int m = map.index[i];
    e.patch += nnfs[m].entries[i].dist + fc.alpha_coh * coh[m][i] + fc.alpha_con * con[m];
  }
  return e;
}

HallucinationResult hallucinate_to(const ImageBuf& i0, const std::vector<ImageBuf>& samples,
                                   int out_w, int out_h, const HallucinationConfig& cfg,
                                   const ProgressCallback& progress) {
  cfg.validate();
  if (i0.width() < 8 || i0.height() < 8) {
    throw InputTooSmallError("input must be at least 8x8");
  }
  const double magnification = static_cast<double>(out_w) / i0.width();
  HallucinationResult result;
  result.schedule = compute_schedule(magnification, i0.width(), i0.height(), cfg.patch_size,
                                     cfg.target_step, cfg.alpha_decay);
  ScaleSchedule& sched = result.schedule;
  sched.steps.back().width = out_w;
  sched.steps.back().height = out_h;
  const double c = sched.step;
  const int z = cfg.patch_size;

  // The candidate set is fixed for the whole run so NNF indices stay stable;
  // candidates only grow with the scale.
  std::vector<ImageBuf> usable;
  for (size_t i = 0; i < samples.size() && static_cast<int>(usable.size()) < cfg.max_samples; ++i) {
    const ImageBuf probe =
        resize_closest(sched.steps.front().width, sched.steps.front().height, samples[i]);
    if (probe.width() >= z && probe.height() >= z) {
      usable.push_back(samples[i]);
      result.used_samples.push_back(static_cast<int>(i));
    } else {
      spdlog::warn("sample {} is too small for the {} px patch at the first scale; dropped", i, z);
    }
  }
  if (usable.empty()) throw NoCandidatesError("no usable sample image");
  const int count = static_cast<int>(usable.size());

  const SearchConfig scfg = cfg.search_config();
  const FuseConfig fcfg = cfg.fuse_config();
  const bool want_stats = static_cast<bool>(progress) || !cfg.log_csv.empty();
  std::ofstream csv;
  if (!cfg.log_csv.empty()) {
    csv.open(cfg.log_csv);
    if (!csv) throw Error("cannot write " + cfg.log_csv.string());
    csv.precision(17);
    csv << "k,i,recon_term,patch_term";
    for (int m = 0; m < count; ++m) csv << ",contrib_" << m;
    csv << '\n';
  }
  for (const auto& dir : {cfg.dump_intermediate, cfg.dump_nnf}) {
    if (!dir.empty()) std::filesystem::create_directories(dir);
  }

  ImageBuf current = i0;
  std::vector<NNF> nnfs;
  NNFMap prev_map;
  bool have_prev = false;
  for (int k = 1; k <= sched.scale_count; ++k) {
    const ScaleStep& st = sched.steps[k - 1];
    current = resize_bilinear(current, st.width, st.height);
    const CandidateSet cands = prepare_candidates(usable, st.width, st.height, c, z);
    if (static_cast<int>(cands.candidates.size()) != count) {
      throw NoCandidatesError("a sample became unusable at scale " + std::to_string(k));
    }
    nnfs = k == 1 ? init_nnfs(current, cands.candidates, scfg)
                  : upsample_nnfs(nnfs, c, st.width, st.height, cands.candidates);
    spdlog::info("scale {}/{}: {}x{}, {} iteration(s), alpha {:.4f}", k, sched.scale_count,
                 st.width, st.height, st.iterations, st.alpha);
    for (int i = 1; i <= st.iterations; ++i) {
      const uint64_t stream = static_cast<uint64_t>(k) * 1024 + static_cast<uint64_t>(i);
      nnfs = search(current, std::move(nnfs), i == 1 ? cands.lowpass : cands.candidates, scfg,
                    stream);
      NNFMap map = merge(nnfs, have_prev ? &prev_map : nullptr, fcfg);
      if (want_stats) {
        IterationStats stats;
        stats.scale = k;
        stats.iteration = i;
        stats.energy = energy(current, i0, nnfs, map, cfg, st.alpha);
        stats.contribution = contribution_fractions(map, count);
        if (csv.is_open()) {
          csv << k << ',' << i << ',' << stats.energy.recon << ',' << stats.energy.patch;
          for (double f : stats.contribution) csv << ',' << f;
          csv << '\n';
        }
        if (progress) progress(stats);
        result.stats.push_back(std::move(stats));
      }
      const VoteTarget vt = vote(st.width, st.height, map, nnfs, cands.candidates, fcfg);
      current = screened_poisson(vt, fcfg);
      current = inject(i0, current, st.alpha, st.factor);
      prev_map = std::move(map);
      have_prev = true;
    }
    if (!cfg.dump_intermediate.empty()) {
      save_png(current, cfg.dump_intermediate / (scale_name(k) + ".png"));
    }
    if (!cfg.dump_nnf.empty()) {
      for (const NNF& f : nnfs) {
        write_nnf(f, cfg.dump_nnf / (scale_name(k) + "_cand" + std::to_string(f.candidate) + ".nnf"));
      }
      save_indexed_png(prev_map.index, prev_map.grid_w, prev_map.grid_h,
                       cfg.dump_nnf / (scale_name(k) + "_map.png"));
    }
  }
  current.clamp();
  result.image = std::move(current);
  return result;
}

HallucinationResult hallucinate(const ImageBuf& i0, const std::vector<ImageBuf>& samples,
                                double magnification, const HallucinationConfig& cfg,
                                const ProgressCallback& progress) {
  if (!(magnification > 1.0)) {
    throw std::invalid_argument("magnification must exceed 1, got " + std::to_string(magnification));
  }
  const auto [w, h] = scaled_dims(i0.width(), i0.height(), magnification);
  HallucinationResult result = hallucinate_to(i0, samples, w, h, cfg, progress);
  result.schedule.magnification = magnification;
  return result;
}

}  // namespace hallu
