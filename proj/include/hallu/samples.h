#ifndef HALLU_SAMPLES_H_
#define HALLU_SAMPLES_H_

#include <filesystem>
#include <string>
#include <vector>

#include "hallu/image.h"

namespace hallu {

enum class SampleOrigin { kLocal, kWeb };

struct SampleEntry {
  ImageBuf image;
  std::string source_id;
  SampleOrigin origin = SampleOrigin::kLocal;
};

struct SampleSet {
  std::vector<SampleEntry> entries;
  std::string keyword;
  std::string query_time;
  std::vector<std::string> warnings;

  std::vector<ImageBuf> images() const;
};

// Samples whose area-downsampled copy (at the input's dims) is within this
// RMS of the input count as the input itself and are excluded.
inline constexpr double kDuplicateRms = 1.0;

bool is_duplicate_of(const ImageBuf& sample, const ImageBuf& input);

// Loads up to max_samples decodable images from `dir` in lexicographic file
// name order, skipping duplicates of `input`. Throws NoSamplesError when
// nothing usable remains.
SampleSet load_local_samples(const std::filesystem::path& dir, const ImageBuf& input,
                             int max_samples);

// Loads the images listed in a manifest, in rank order:
//   {"keyword": str, "query_time": ISO-8601 str,
//    "entries": [{"rank": int, "path": str, "source_url": str|null}]}
// Paths are relative to the manifest's directory. Missing or undecodable files
// are skipped with a warning; when `input` is given the duplicate guard
// applies. Throws NoSamplesError when no entry loads.
SampleSet load_manifest_samples(const std::filesystem::path& manifest_path,
                                const ImageBuf* input = nullptr, int max_samples = 0);

}  // namespace hallu

#endif  // HALLU_SAMPLES_H_
