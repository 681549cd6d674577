// Command-line front end: upsample an image (or restore a degraded one) by
// hallucinating detail from sample images, and rank methods from pairwise
// preference counts.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hallu/error.h"
#include "hallu/eval.h"
#include "hallu/image_io.h"
#include "hallu/parallel.h"
#include "hallu/pipeline.h"
#include "hallu/samples.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNoSamples = 2;
constexpr int kExitPipeline = 3;

struct RunOptions {
  std::string input;
  double scale = 0.0;
  double shrink = 0.0;
  std::string samples;
  std::string manifest;
  std::string out;
  bool print_config = false;
  hallu::HallucinationConfig cfg;
};

nlohmann::json config_json(const RunOptions& o) {
  const auto& c = o.cfg;
  nlohmann::json j;
  j["input"] = o.input;
  if (o.shrink > 0.0) {
    j["mode"] = "restore";
    j["shrink"] = o.shrink;
  } else {
    j["mode"] = "upsample";
    j["scale"] = o.scale;
  }
  j["samples"] = o.samples;
  j["manifest"] = o.manifest;
  j["out"] = o.out;
  j["seed"] = c.seed;
  j["workers"] = c.workers > 0 ? c.workers : hallu::default_workers();
  j["patch_size"] = c.patch_size;
  j["lambda"] = c.lambda;
  j["alpha_coh"] = c.alpha_coh;
  j["alpha_con"] = c.alpha_con;
  j["search_radius"] = c.search_radius;
  j["m"] = c.max_samples;
  j["pm_iterations"] = c.pm_iterations;
  j["scale_range"] = {c.scale_min, c.scale_max};
  j["theta_max"] = c.theta_max;
  j["allow_reflection"] = c.allow_reflection;
  j["alpha_decay"] = c.alpha_decay;
  j["target_step"] = c.target_step;
  j["poisson_lambda"] = c.poisson_lambda;
  j["dump_intermediate"] = c.dump_intermediate.string();
  j["dump_nnf"] = c.dump_nnf.string();
  j["log_csv"] = c.log_csv.string();
  return j;
}

int run_hallucination(const RunOptions& o) {
  if (o.print_config) std::cout << config_json(o).dump(2) << '\n';
  if (o.input.empty() && o.print_config) return kExitOk;
  const bool restore = o.shrink > 0.0;
  if (o.input.empty() || o.out.empty()) {
    std::cerr << "error: --input and --out are required\n";
    return kExitUsage;
  }
  if (!restore && !(o.scale > 1.0)) {
    std::cerr << "error: magnification must exceed 1 (use --scale A with A > 1)\n";
    return kExitUsage;
  }
  if (restore && !(o.shrink > 1.0)) {
    std::cerr << "error: --shrink must exceed 1\n";
    return kExitUsage;
  }
  if (o.samples.empty() == o.manifest.empty()) {
    std::cerr << "error: give exactly one of --samples or --manifest\n";
    return kExitUsage;
  }
  try {
    o.cfg.validate();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const hallu::ImageBuf input = hallu::load_image(o.input);
    const hallu::SampleSet samples =
        o.manifest.empty()
            ? hallu::load_local_samples(o.samples, input, o.cfg.max_samples)
            : hallu::load_manifest_samples(o.manifest, &input, o.cfg.max_samples);
    spdlog::info("{} sample image(s) loaded", samples.entries.size());

    hallu::ProgressCallback progress;
    if (spdlog::should_log(spdlog::level::debug)) {
      progress = [](const hallu::IterationStats& s) {
        spdlog::debug("k={} i={} recon={:.4g} patch={:.4g}", s.scale, s.iteration,
                      s.energy.recon, s.energy.patch);
      };
    }
    hallu::HallucinationResult result;
    if (restore) {
      const hallu::ImageBuf small = hallu::downsample(input, o.shrink);
      spdlog::info("restore: {}x{} -> {}x{} -> {}x{}", input.width(), input.height(),
                   small.width(), small.height(), input.width(), input.height());
      result = hallu::hallucinate_to(small, samples.images(), input.width(), input.height(), o.cfg,
                                     progress);
    } else {
      result = hallu::hallucinate(input, samples.images(), o.scale, o.cfg, progress);
    }
    hallu::save_png(result.image, o.out);
    spdlog::info("wrote {} ({}x{})", o.out, result.image.width(), result.image.height());
  } catch (const hallu::NoSamplesError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNoSamples;
  } catch (const hallu::NoCandidatesError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNoSamples;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitPipeline;
  }
  return kExitOk;
}

struct BtRankOptions {
  std::string in;
  std::string out;
  std::string baseline = "bicubic";
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int run_bt_rank(const BtRankOptions& o) {
  std::ifstream in(o.in);
  if (!in) {
    std::cerr << "error: cannot read " << o.in << '\n';
    return kExitUsage;
  }
  std::vector<std::string> names;
  std::map<std::string, int> index;
  auto id = [&](const std::string& name) {
    auto [it, fresh] = index.emplace(name, static_cast<int>(names.size()));
    if (fresh) names.push_back(name);
    return it->second;
  };
  struct Row {
    int winner, loser;
    double count;
  };
  std::vector<Row> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string w, l, c;
    if (!std::getline(ss, w, ',') || !std::getline(ss, l, ',') || !std::getline(ss, c)) {
      std::cerr << "error: line " << line_no << ": expected winner,loser,count\n";
      return kExitUsage;
    }
    double count = 0.0;
    try {
      size_t used = 0;
      count = std::stod(trim(c), &used);
      if (used != trim(c).size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      if (line_no == 1) continue;  // header row
      std::cerr << "error: line " << line_no << ": bad count '" << trim(c) << "'\n";
      return kExitUsage;
    }
    const int wi = id(trim(w));
    const int li = id(trim(l));
    rows.push_back({wi, li, count});
  }
  if (names.size() < 2) {
    std::cerr << "error: need comparisons between at least two methods\n";
    return kExitUsage;
  }
  std::vector<std::vector<double>> counts(names.size(), std::vector<double>(names.size(), 0.0));
  for (const Row& r : rows) counts[r.winner][r.loser] += r.count;

  hallu::BtOptions bt;
  const auto base = index.find(o.baseline);
  bt.baseline = base != index.end() ? base->second : 0;
  try {
    const hallu::BtResult res = hallu::bt_scores(counts, bt);
    std::ofstream file;
    if (!o.out.empty()) {
      file.open(o.out);
      if (!file) {
        std::cerr << "error: cannot write " << o.out << '\n';
        return kExitPipeline;
      }
    }
    std::ostream& os = o.out.empty() ? std::cout : file;
    os << "method,score,p_over_baseline\n";
    for (size_t i = 0; i < names.size(); ++i) {
      os << names[i] << ',' << res.scores[i] << ','
         << res.probability(static_cast<int>(i), res.baseline) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitPipeline;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Example-based image hallucination"};
  app.require_subcommand(0, 1);

  RunOptions run;
  auto& cfg = run.cfg;
  app.add_option("--input", run.input, "Input image (PNG or JPEG)")->check(CLI::ExistingFile);
  auto* scale_opt = app.add_option("--scale", run.scale, "Magnification factor (> 1)");
  app.add_option("--shrink", run.shrink, "Restore mode: shrink factor before re-upsampling")
      ->excludes(scale_opt);
  auto* samples_opt =
      app.add_option("--samples", run.samples, "Directory of sample images")->check(CLI::ExistingDirectory);
  app.add_option("--manifest", run.manifest, "Sample manifest JSON")
      ->check(CLI::ExistingFile)
      ->excludes(samples_opt);
  app.add_option("--out", run.out, "Output PNG");
  app.add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  app.add_option("--workers", cfg.workers, "Worker threads (0 = hardware parallelism)")
      ->capture_default_str();
  app.add_option("--patch-size", cfg.patch_size, "Patch side in pixels")->capture_default_str();
  app.add_option("--lambda", cfg.lambda, "Gradient weight of the patch distance")
      ->capture_default_str();
  app.add_option("--alpha-coh", cfg.alpha_coh, "Coherence weight")->capture_default_str();
  app.add_option("--alpha-con", cfg.alpha_con, "Contribution weight")->capture_default_str();
  app.add_option("--search-radius", cfg.search_radius, "PatchMatch random search radius")
      ->capture_default_str();
  app.add_option("--m", cfg.max_samples, "Maximum number of sample images")->capture_default_str();
  app.add_option("--pm-iterations", cfg.pm_iterations, "PatchMatch passes per search")
      ->capture_default_str();
  app.add_option("--poisson-lambda", cfg.poisson_lambda, "Gradient weight of the reconstruction")
      ->capture_default_str();
  std::string dump_intermediate, dump_nnf, log_csv;
  app.add_option("--dump-intermediate", dump_intermediate, "Directory for per-scale images");
  app.add_option("--dump-nnf", dump_nnf, "Directory for per-scale NNF dumps and merge maps");
  app.add_option("--log-csv", log_csv, "Per-iteration diagnostics CSV");
  app.add_flag("--print-config", run.print_config, "Print the resolved configuration as JSON");
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->capture_default_str();

  BtRankOptions bt;
  auto* bt_cmd = app.add_subcommand("bt-rank", "Bradley-Terry scores from pairwise counts");
  bt_cmd->add_option("--in", bt.in, "CSV of winner,loser,count rows")
      ->required()
      ->check(CLI::ExistingFile);
  bt_cmd->add_option("--out", bt.out, "Score table CSV (default: stdout)");
  bt_cmd->add_option("--baseline", bt.baseline, "Method pinned to score 0")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("hallucinate"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  if (*bt_cmd) return run_bt_rank(bt);

  cfg.dump_intermediate = dump_intermediate;
  cfg.dump_nnf = dump_nnf;
  cfg.log_csv = log_csv;
  return run_hallucination(run);
}
