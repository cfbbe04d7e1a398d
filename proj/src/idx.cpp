#include <cstdint>
#include <fstream>
#include <vector>

#include "domainbank/data.hpp"

// IDX digit-file ingestion. Headers are big-endian: magic, then one 32-bit
// dimension per axis (count/rows/cols for images, count for labels).

namespace domainbank {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<std::uint8_t> read_all(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f),
                                   std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off,
                        const std::string& path) {
  if (off + 4 > b.size())
    throw format_error("'" + path + "': truncated header, need 4 bytes at offset " +
                       std::to_string(off) + ", file has " + std::to_string(b.size()));
  return (static_cast<std::uint32_t>(b[off]) << 24) |
         (static_cast<std::uint32_t>(b[off + 1]) << 16) |
         (static_cast<std::uint32_t>(b[off + 2]) << 8) | static_cast<std::uint32_t>(b[off + 3]);
}

}  // namespace

IdxImages load_idx_images(const std::string& path) {
  const auto bytes = read_all(path);
  const auto magic = read_be32(bytes, 0, path);
  if (magic != kImageMagic) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "0x%08x", magic);
    throw format_error("'" + path + "': bad image magic " + buf + " at offset 0");
  }
  IdxImages out;
  out.n = read_be32(bytes, 4, path);
  out.h = read_be32(bytes, 8, path);
  out.w = read_be32(bytes, 12, path);
  const std::size_t want = 16 + static_cast<std::size_t>(out.n * out.h * out.w);
  if (bytes.size() != want)
    throw format_error("'" + path + "': expected " + std::to_string(want) + " bytes, got " +
                       std::to_string(bytes.size()) + " (payload starts at offset 16)");
  out.pixels.assign(bytes.begin() + 16, bytes.end());
  return out;
}

std::vector<int> load_idx_labels(const std::string& path) {
  const auto bytes = read_all(path);
  const auto magic = read_be32(bytes, 0, path);
  if (magic != kLabelMagic) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "0x%08x", magic);
    throw format_error("'" + path + "': bad label magic " + buf + " at offset 0");
  }
  const auto n = read_be32(bytes, 4, path);
  const std::size_t want = 8 + n;
  if (bytes.size() != want)
    throw format_error("'" + path + "': expected " + std::to_string(want) + " bytes, got " +
                       std::to_string(bytes.size()) + " (payload starts at offset 8)");
  return std::vector<int>(bytes.begin() + 8, bytes.end());
}

ImageSet idx_to_image_set(const IdxImages& raw) {
  if (raw.n < 1) throw config_error("idx conversion: no images");
  const std::int64_t h = (raw.h + 7) / 8 * 8;
  const std::int64_t w = (raw.w + 7) / 8 * 8;
  const std::int64_t top = (h - raw.h) / 2;
  const std::int64_t left = (w - raw.w) / 2;
  ImageSet set;
  set.shape = {1, h, w};
  set.images.reserve(static_cast<std::size_t>(raw.n));
  for (std::int64_t i = 0; i < raw.n; ++i) {
    std::vector<float> img(static_cast<std::size_t>(h * w), -1.0f);
    const std::uint8_t* src = raw.pixels.data() + i * raw.h * raw.w;
    for (std::int64_t y = 0; y < raw.h; ++y)
      for (std::int64_t x = 0; x < raw.w; ++x)
        img[static_cast<std::size_t>((y + top) * w + (x + left))] =
            byte_to_unit(src[y * raw.w + x]);
    set.images.push_back(std::move(img));
  }
  set.validate();
  return set;
}

LabeledImageSet load_idx_pair(const std::string& image_path, const std::string& label_path,
                              int num_classes) {
  const auto raw = load_idx_images(image_path);
  auto labels = load_idx_labels(label_path);
  if (static_cast<std::int64_t>(labels.size()) != raw.n)
    throw format_error("'" + image_path + "' has " + std::to_string(raw.n) + " images but '" +
                       label_path + "' has " + std::to_string(labels.size()) + " labels");
  LabeledImageSet out;
  out.set = idx_to_image_set(raw);
  out.labels = std::move(labels);
  out.num_classes = num_classes;
  out.validate();
  return out;
}

}  // namespace domainbank
