#ifndef HALLU_IMAGE_IO_H_
#define HALLU_IMAGE_IO_H_

#include <cstdint>
#include <filesystem>
#include <span>

#include "hallu/image.h"

namespace hallu {

// Decodes an 8-bit PNG or JPEG (chosen by file signature) into [0,255]
// floating point. Gray and alpha inputs are expanded/dropped to RGB.
ImageBuf load_image(const std::filesystem::path& path);

// Clamps, rounds to 8 bits and writes an RGB PNG.
void save_png(const ImageBuf& img, const std::filesystem::path& path);

// Writes an 8-bit palette PNG of `indices` (row-major, width x height).
void save_indexed_png(std::span<const uint8_t> indices, int width, int height,
                      const std::filesystem::path& path);

}  // namespace hallu

#endif  // HALLU_IMAGE_IO_H_
