#include "hallu/samples.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <nlohmann/json.hpp>

#include "hallu/error.h"
#include "hallu/image_io.h"

namespace hallu {

std::vector<ImageBuf> SampleSet::images() const {
  std::vector<ImageBuf> out;
  out.reserve(entries.size());
  for (const SampleEntry& e : entries) out.push_back(e.image);
  return out;
}

bool is_duplicate_of(const ImageBuf& sample, const ImageBuf& input) {
  ImageBuf probe = sample.width() >= input.width() && sample.height() >= input.height()
                       ? resize_area(sample, input.width(), input.height())
                       : resize_bilinear(sample, input.width(), input.height());
  return rms_difference(probe, input) < kDuplicateRms;
}

namespace {

bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

void warn(SampleSet& set, std::string msg) {
  spdlog::warn("{}", msg);
  set.warnings.push_back(std::move(msg));
}

}  // namespace

SampleSet load_local_samples(const std::filesystem::path& dir, const ImageBuf& input,
                             int max_samples) {
  if (!std::filesystem::is_directory(dir)) {
    throw NoSamplesError("sample directory does not exist: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });

  SampleSet set;
  for (const auto& path : files) {
    if (max_samples > 0 && static_cast<int>(set.entries.size()) >= max_samples) break;
    ImageBuf img;
    try {
      img = load_image(path);
    } catch (const ImageIoError& e) {
      warn(set, std::string("skipping undecodable sample: ") + e.what());
      continue;
    }
    if (is_duplicate_of(img, input)) {
      warn(set, "skipping " + path.filename().string() + ": identical to the input image");
      continue;
    }
    set.entries.push_back({std::move(img), path.filename().string(), SampleOrigin::kLocal});
  }
  if (set.entries.empty()) throw NoSamplesError("no usable sample images in " + dir.string());
  return set;
}

SampleSet load_manifest_samples(const std::filesystem::path& manifest_path, const ImageBuf* input,
                                int max_samples) {
  std::ifstream in(manifest_path);
  if (!in) throw NoSamplesError("cannot open manifest " + manifest_path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw NoSamplesError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_array()) {
    throw NoSamplesError("manifest " + manifest_path.string() + " has no entries array");
  }
  SampleSet set;
  set.keyword = doc.value("keyword", "");
  set.query_time = doc.value("query_time", "");

  struct Ranked {
    long rank;
    std::string path;
  };
  std::vector<Ranked> ranked;
  for (const auto& e : doc["entries"]) {
    if (!e.is_object() || !e.contains("path") || !e["path"].is_string()) {
      warn(set, "skipping malformed manifest entry");
      continue;
    }
    const long rank = e.contains("rank") && e["rank"].is_number_integer() ? e["rank"].get<long>()
                                                                         : static_cast<long>(ranked.size()) + 1;
    ranked.push_back({rank, e["path"].get<std::string>()});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& a, const Ranked& b) { return a.rank < b.rank; });

  const auto base = manifest_path.parent_path();
  for (const Ranked& r : ranked) {
    if (max_samples > 0 && static_cast<int>(set.entries.size()) >= max_samples) break;
    const auto path = base / r.path;
    if (!std::filesystem::exists(path)) {
      warn(set, "manifest entry " + std::to_string(r.rank) + " is missing: " + path.string());
      continue;
    }
    ImageBuf img;
    try {
      img = load_image(path);
    } catch (const ImageIoError& e) {
      warn(set, std::string("skipping undecodable manifest entry: ") + e.what());
      continue;
    }
    if (input && is_duplicate_of(img, *input)) {
      warn(set, "skipping manifest entry " + std::to_string(r.rank) + ": identical to the input");
      continue;
    }
    set.entries.push_back({std::move(img), r.path, SampleOrigin::kWeb});
  }
  if (set.entries.empty()) {
    throw NoSamplesError("no loadable samples in manifest " + manifest_path.string());
  }
  return set;
}

}  // namespace hallu
