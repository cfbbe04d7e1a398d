#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "domainbank/data.hpp"

// PNG ingestion and emission. Decoded images are normalized CHW floats;
// grayscale stays 1 channel, color becomes 3 (alpha stripped, palettes
// expanded, 16-bit reduced).

namespace domainbank {

struct PngImage {
  std::int64_t c = 0, h = 0, w = 0;
  std::vector<float> pixels;  // CHW, [-1, 1]
};

PngImage read_png(const std::string& path);

/// 8-bit grayscale (c=1) or RGB (c=3) file from normalized CHW data.
void write_png(const std::string& path, const float* chw, std::int64_t c, std::int64_t h,
               std::int64_t w);

/// Bilinear scale so the image covers the target, then center crop to it.
PngImage resize_cover_crop(const PngImage& src, std::int64_t target_h, std::int64_t target_w);

/// Every .png in the directory, sorted by filename, resized/cropped to the
/// target. Undecodable files are skipped with a warning on stderr; an empty
/// result or mixed channel counts fail.
ImageSet load_png_dir(const std::string& dir, std::int64_t target_h, std::int64_t target_w);

/// Batch (N,C,H,W) tiled row-major into a grid image, `cols` panels wide.
void write_grid_png(const std::string& path, const TensorT<float>& batch, std::int64_t cols);

/// Horizontal strip: grid with as many columns as images.
void write_strip_png(const std::string& path, const TensorT<float>& batch);

}  // namespace domainbank
