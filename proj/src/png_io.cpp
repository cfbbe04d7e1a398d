#include "domainbank/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

namespace domainbank {

namespace {

struct FileCloser {
  std::FILE* f = nullptr;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

}  // namespace

PngImage read_png(const std::string& path) {
  FileCloser file;
  file.f = std::fopen(path.c_str(), "rb");
  if (!file.f) throw io_error("cannot open '" + path + "'");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw io_error("libpng: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw io_error("libpng: out of memory");
  }

  PngImage out;
  std::vector<std::uint8_t> interleaved;
  std::vector<png_bytep> rows;
  // longjmp target: libpng reports errors by jumping back here.
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw format_error("'" + path + "': not a decodable PNG");
  }

  png_init_io(png, file.f);
  png_read_info(png, info);

  // Normalize to 8-bit gray or RGB.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  const auto color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  out.h = png_get_image_height(png, info);
  out.w = png_get_image_width(png, info);
  out.c = png_get_channels(png, info);
  if (out.c != 1 && out.c != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw format_error("'" + path + "': unsupported channel count " + std::to_string(out.c));
  }

  interleaved.resize(static_cast<std::size_t>(out.h * out.w * out.c));
  rows.resize(static_cast<std::size_t>(out.h));
  for (std::int64_t y = 0; y < out.h; ++y)
    rows[static_cast<std::size_t>(y)] = interleaved.data() + y * out.w * out.c;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  out.pixels.resize(interleaved.size());
  for (std::int64_t ch = 0; ch < out.c; ++ch)
    for (std::int64_t y = 0; y < out.h; ++y)
      for (std::int64_t x = 0; x < out.w; ++x)
        out.pixels[static_cast<std::size_t>((ch * out.h + y) * out.w + x)] =
            byte_to_unit(interleaved[static_cast<std::size_t>((y * out.w + x) * out.c + ch)]);
  return out;
}

void write_png(const std::string& path, const float* chw, std::int64_t c, std::int64_t h,
               std::int64_t w) {
  if (c != 1 && c != 3)
    throw contract_error("write_png: channel count must be 1 or 3, got " + std::to_string(c));
  if (h < 1 || w < 1) throw contract_error("write_png: empty image");

  FileCloser file;
  file.f = std::fopen(path.c_str(), "wb");
  if (!file.f) throw io_error("cannot write '" + path + "'");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw io_error("libpng: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw io_error("libpng: out of memory");
  }

  std::vector<std::uint8_t> interleaved(static_cast<std::size_t>(h * w * c));
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        interleaved[static_cast<std::size_t>((y * w + x) * c + ch)] =
            unit_to_byte(chw[(ch * h + y) * w + x]);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (std::int64_t y = 0; y < h; ++y)
    rows[static_cast<std::size_t>(y)] = interleaved.data() + y * w * c;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw io_error("'" + path + "': PNG write failed");
  }

  png_init_io(png, file.f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

PngImage resize_cover_crop(const PngImage& src, std::int64_t target_h, std::int64_t target_w) {
  if (target_h < 1 || target_w < 1) throw contract_error("resize: empty target");
  if (src.h < 1 || src.w < 1) throw contract_error("resize: empty source");

  const double scale = std::max(static_cast<double>(target_h) / static_cast<double>(src.h),
                                static_cast<double>(target_w) / static_cast<double>(src.w));
  const double scaled_h = src.h * scale;
  const double scaled_w = src.w * scale;
  const double off_y = (scaled_h - target_h) / 2.0;
  const double off_x = (scaled_w - target_w) / 2.0;

  PngImage out;
  out.c = src.c;
  out.h = target_h;
  out.w = target_w;
  out.pixels.resize(static_cast<std::size_t>(out.c * out.h * out.w));

  auto at = [&](std::int64_t ch, std::int64_t y, std::int64_t x) {
    y = std::clamp<std::int64_t>(y, 0, src.h - 1);
    x = std::clamp<std::int64_t>(x, 0, src.w - 1);
    return src.pixels[static_cast<std::size_t>((ch * src.h + y) * src.w + x)];
  };

  for (std::int64_t ch = 0; ch < out.c; ++ch)
    for (std::int64_t y = 0; y < out.h; ++y)
      for (std::int64_t x = 0; x < out.w; ++x) {
        const double sy = (y + off_y + 0.5) / scale - 0.5;
        const double sx = (x + off_x + 0.5) / scale - 0.5;
        const auto y0 = static_cast<std::int64_t>(std::floor(sy));
        const auto x0 = static_cast<std::int64_t>(std::floor(sx));
        const double fy = sy - y0;
        const double fx = sx - x0;
        const double v = (1 - fy) * ((1 - fx) * at(ch, y0, x0) + fx * at(ch, y0, x0 + 1)) +
                         fy * ((1 - fx) * at(ch, y0 + 1, x0) + fx * at(ch, y0 + 1, x0 + 1));
        out.pixels[static_cast<std::size_t>((ch * out.h + y) * out.w + x)] =
            static_cast<float>(std::clamp(v, -1.0, 1.0));
      }
  return out;
}

ImageSet load_png_dir(const std::string& dir, std::int64_t target_h, std::int64_t target_w) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw io_error("'" + dir + "' is not a directory");

  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (ext == ".png") names.push_back(e.path().string());
  }
  std::sort(names.begin(), names.end());

  ImageSet set;
  for (const auto& name : names) {
    PngImage img;
    try {
      img = read_png(name);
    } catch (const error& e) {
      std::cerr << "warning: skipping '" << name << "': " << e.what() << "\n";
      continue;
    }
    img = resize_cover_crop(img, target_h, target_w);
    if (set.images.empty()) set.shape = {img.c, img.h, img.w};
    if (set.shape[0] != img.c)
      throw config_error("'" + dir + "' mixes grayscale and color images");
    set.images.push_back(std::move(img.pixels));
  }
  if (set.images.empty()) throw io_error("'" + dir + "' contains no decodable PNGs");
  set.validate();
  return set;
}

void write_grid_png(const std::string& path, const TensorT<float>& batch, std::int64_t cols) {
  if (batch.rank() != 4) throw contract_error("grid: batch must be (N,C,H,W)");
  const auto n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  if (n < 1 || cols < 1) throw contract_error("grid: nothing to draw");
  const std::int64_t rows = (n + cols - 1) / cols;

  std::vector<float> canvas(static_cast<std::size_t>(c * rows * h * cols * w), -1.0f);
  const std::int64_t gh = rows * h, gw = cols * w;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t r = i / cols, q = i % cols;
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
          canvas[static_cast<std::size_t>((ch * gh + r * h + y) * gw + q * w + x)] =
              batch.data()[((i * c + ch) * h + y) * w + x];
  }
  write_png(path, canvas.data(), c, gh, gw);
}

void write_strip_png(const std::string& path, const TensorT<float>& batch) {
  if (batch.rank() != 4) throw contract_error("strip: batch must be (N,C,H,W)");
  write_grid_png(path, batch, batch.dim(0));
}

}  // namespace domainbank
