#include "domainbank/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

namespace domainbank {

void ImageSet::validate() const {
  if (shape.size() != 3)
    throw config_error("image set: shape must be (C,H,W), got " + shape_str(shape));
  const auto c = shape[0], h = shape[1], w = shape[2];
  if (c != 1 && c != 3)
    throw config_error("image set: channel count must be 1 or 3, got " + std::to_string(c));
  if (h < 8 || w < 8 || h % 8 != 0 || w % 8 != 0)
    throw config_error("image set: H and W must be multiples of 8, got " + shape_str(shape));
  const auto n = image_numel();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (static_cast<std::int64_t>(images[i].size()) != n)
      throw config_error("image set: image " + std::to_string(i) + " has " +
                         std::to_string(images[i].size()) + " values, expected " +
                         std::to_string(n));
    for (float v : images[i])
      if (!(v >= -1.0f && v <= 1.0f))
        throw config_error("image set: image " + std::to_string(i) +
                           " has values outside [-1,1]");
  }
}

void LabeledImageSet::validate() const {
  set.validate();
  if (static_cast<std::int64_t>(labels.size()) != set.size())
    throw config_error("labeled set: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(set.size()) + " images");
  if (num_classes < 2) throw config_error("labeled set: need at least 2 classes");
  for (int l : labels)
    if (l < 0 || l >= num_classes)
      throw config_error("labeled set: label " + std::to_string(l) + " outside [0," +
                         std::to_string(num_classes) + ")");
}

BatchIter::BatchIter(std::int64_t n, std::int64_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), seed_(seed) {
  if (n < 1) throw config_error("batch iterator: empty dataset");
  if (batch_size < 1 || batch_size > n)
    throw config_error("batch iterator: batch size " + std::to_string(batch_size) +
                       " not in [1," + std::to_string(n) + "]");
}

void BatchIter::start_epoch() {
  ++epoch_;
  cursor_ = 0;
  perm_.resize(static_cast<std::size_t>(n_));
  for (std::int64_t i = 0; i < n_; ++i) perm_[static_cast<std::size_t>(i)] = i;
  Rng rng(mix_seed(seed_, "epoch", static_cast<std::uint64_t>(epoch_)));
  for (std::int64_t i = n_ - 1; i > 0; --i)
    std::swap(perm_[static_cast<std::size_t>(i)],
              perm_[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
}

std::vector<std::int64_t> BatchIter::next() {
  if (epoch_ < 0 || cursor_ + batch_size_ > n_) start_epoch();
  std::vector<std::int64_t> out(perm_.begin() + cursor_, perm_.begin() + cursor_ + batch_size_);
  cursor_ += batch_size_;
  return out;
}

std::string BatchIter::state() const {
  return std::to_string(epoch_) + " " + std::to_string(cursor_);
}

void BatchIter::restore(const std::string& s) {
  std::istringstream is(s);
  std::int64_t e = 0, c = 0;
  if (!(is >> e >> c) || e < -1 || c < 0 || (e >= 0 && c > n_))
    throw format_error("batch iterator: corrupt state '" + s + "'");
  epoch_ = e;
  cursor_ = c;
  if (epoch_ >= 0) {
    --epoch_;  // start_epoch advances it back
    start_epoch();
    cursor_ = c;
  }
}

ImageBatchT<float> make_batch(const ImageSet& set, const std::vector<std::int64_t>& indices,
                              int domain) {
  if (indices.empty()) throw contract_error("make_batch: no indices");
  const auto per = set.image_numel();
  ImageBatchT<float> b;
  b.domain = domain;
  b.pixels = TensorT<float>::zeros(
      {static_cast<std::int64_t>(indices.size()), set.shape[0], set.shape[1], set.shape[2]});
  float* dst = b.pixels.data();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto i = indices[k];
    if (i < 0 || i >= set.size())
      throw contract_error("make_batch: index " + std::to_string(i) + " out of range");
    std::memcpy(dst + static_cast<std::int64_t>(k) * per,
                set.images[static_cast<std::size_t>(i)].data(),
                static_cast<std::size_t>(per) * sizeof(float));
  }
  return b;
}

std::pair<ImageBatchT<float>, std::vector<int>> make_labeled_batch(
    const LabeledImageSet& set, const std::vector<std::int64_t>& indices, int domain) {
  auto batch = make_batch(set.set, indices, domain);
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (auto i : indices) labels.push_back(set.labels[static_cast<std::size_t>(i)]);
  return {std::move(batch), std::move(labels)};
}

DataSource::DataSource(std::vector<ImageSet> sets, std::int64_t batch_size, std::uint64_t seed)
    : sets_(std::move(sets)) {
  if (sets_.empty()) throw config_error("data source: no domains");
  for (std::size_t d = 0; d < sets_.size(); ++d) {
    sets_[d].validate();
    iters_.emplace_back(sets_[d].size(), batch_size,
                        mix_seed(seed, "batches", static_cast<std::uint64_t>(d)));
  }
}

ImageBatchT<float> DataSource::batch(int domain) {
  if (domain < 0 || domain >= num_domains())
    throw contract_error("data source: domain " + std::to_string(domain) + " out of range");
  return make_batch(sets_[static_cast<std::size_t>(domain)],
                    iters_[static_cast<std::size_t>(domain)].next(), domain);
}

const ImageSet& DataSource::set(int domain) const {
  if (domain < 0 || domain >= num_domains())
    throw contract_error("data source: domain " + std::to_string(domain) + " out of range");
  return sets_[static_cast<std::size_t>(domain)];
}

std::string DataSource::state() const {
  std::string out;
  for (std::size_t d = 0; d < iters_.size(); ++d) {
    if (d) out += ";";
    out += iters_[d].state();
  }
  return out;
}

void DataSource::restore(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ';')) parts.push_back(cur);
  if (parts.size() != iters_.size())
    throw format_error("data source: state has " + std::to_string(parts.size()) +
                       " iterators, expected " + std::to_string(iters_.size()));
  for (std::size_t d = 0; d < iters_.size(); ++d) iters_[d].restore(parts[d]);
}

namespace {

struct SquareLatent {
  std::int64_t cx, cy, half;
};

// The latent is a function of (seed, index) only, so every domain renders
// the same square for a given sample index.
SquareLatent square_latent(std::uint64_t seed, std::int64_t index, std::int64_t size) {
  Rng rng(mix_seed(seed, "shape", static_cast<std::uint64_t>(index)));
  SquareLatent s;
  const std::int64_t lo = size / 8, hi = size / 4;  // half-extent range
  s.half = lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
  const std::int64_t margin = s.half + 1;
  const std::int64_t span = size - 2 * margin;
  s.cx = margin + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(span)));
  s.cy = margin + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(span)));
  return s;
}

std::vector<float> render_square(const SquareLatent& s, std::int64_t size, bool filled) {
  std::vector<float> img(static_cast<std::size_t>(size * size), -1.0f);
  for (std::int64_t y = 0; y < size; ++y)
    for (std::int64_t x = 0; x < size; ++x) {
      const std::int64_t d = std::max(std::abs(x - s.cx), std::abs(y - s.cy));
      const bool on = filled ? (d <= s.half) : (d <= s.half && d >= s.half - 1);
      if (on) img[static_cast<std::size_t>(y * size + x)] = 1.0f;
    }
  return img;
}

}  // namespace

std::vector<ImageSet> synthetic_shapes(int n_domains, std::int64_t n_per_domain,
                                       std::int64_t size, std::uint64_t seed) {
  if (n_domains < 1 || n_domains > 3)
    throw config_error("synthetic shapes: 1 to 3 domains, got " + std::to_string(n_domains));
  if (size < 16 || size % 8 != 0)
    throw config_error("synthetic shapes: size must be a multiple of 8, at least 16");
  if (n_per_domain < 1) throw config_error("synthetic shapes: need at least one sample");

  std::vector<ImageSet> out(static_cast<std::size_t>(n_domains));
  for (auto& set : out) {
    set.shape = {1, size, size};
    set.images.reserve(static_cast<std::size_t>(n_per_domain));
  }
  for (std::int64_t i = 0; i < n_per_domain; ++i) {
    const auto lat = square_latent(seed, i, size);
    auto filled = render_square(lat, size, true);
    if (n_domains > 0) out[0].images.push_back(render_square(lat, size, false));
    if (n_domains > 2) {
      std::vector<float> inv(filled.size());
      for (std::size_t k = 0; k < filled.size(); ++k) inv[k] = -filled[k];
      out[2].images.push_back(std::move(inv));
    }
    if (n_domains > 1) out[1].images.push_back(std::move(filled));
  }
  for (auto& set : out) set.validate();
  return out;
}

namespace {

// Classes: 0 horizontal bar, 1 vertical bar, 2 filled box. Positions and
// thickness jitter per sample; pixel-space class means stay far apart.
std::vector<float> render_glyph(int cls, Rng& rng, std::int64_t size) {
  std::vector<float> img(static_cast<std::size_t>(size * size), -1.0f);
  const std::int64_t thick = size / 5 + static_cast<std::int64_t>(rng.below(2));
  const std::int64_t jitter_range = size / 4;
  const std::int64_t off =
      -jitter_range / 2 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(jitter_range)));
  const std::int64_t c = size / 2 + off;
  auto put = [&](std::int64_t y, std::int64_t x) {
    if (y >= 0 && y < size && x >= 0 && x < size)
      img[static_cast<std::size_t>(y * size + x)] = 1.0f;
  };
  if (cls == 0) {
    for (std::int64_t y = c - thick / 2; y < c - thick / 2 + thick; ++y)
      for (std::int64_t x = 2; x < size - 2; ++x) put(y, x);
  } else if (cls == 1) {
    for (std::int64_t x = c - thick / 2; x < c - thick / 2 + thick; ++x)
      for (std::int64_t y = 2; y < size - 2; ++y) put(y, x);
  } else {
    const std::int64_t half = size / 4;
    for (std::int64_t y = c - half; y <= c + half; ++y)
      for (std::int64_t x = c - half; x <= c + half; ++x) put(y, x);
  }
  return img;
}

std::vector<float> invert_and_noise(const std::vector<float>& src, Rng& rng) {
  std::vector<float> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    float v = -src[i] + 0.1f * static_cast<float>(rng.gaussian());
    out[i] = std::min(1.0f, std::max(-1.0f, v));
  }
  return out;
}

}  // namespace

GlyphData synthetic_glyphs(std::int64_t n_per_class, std::int64_t size, std::uint64_t seed) {
  if (size < 16 || size % 8 != 0)
    throw config_error("synthetic glyphs: size must be a multiple of 8, at least 16");
  if (n_per_class < 1) throw config_error("synthetic glyphs: need at least one sample per class");

  GlyphData gd;
  const Shape shape{1, size, size};
  gd.source.set.shape = shape;
  gd.source.num_classes = 3;
  gd.target.shape = shape;
  gd.target_test.set.shape = shape;
  gd.target_test.num_classes = 3;

  const std::int64_t n_test = std::max<std::int64_t>(1, n_per_class / 4);
  for (int cls = 0; cls < 3; ++cls) {
    for (std::int64_t i = 0; i < n_per_class; ++i) {
      Rng rs(mix_seed(seed, "glyph.src", static_cast<std::uint64_t>(cls),
                      static_cast<std::uint64_t>(i)));
      gd.source.set.images.push_back(render_glyph(cls, rs, size));
      gd.source.labels.push_back(cls);

      Rng rt(mix_seed(seed, "glyph.tgt", static_cast<std::uint64_t>(cls),
                      static_cast<std::uint64_t>(i)));
      auto glyph = render_glyph(cls, rt, size);
      gd.target.images.push_back(invert_and_noise(glyph, rt));
    }
    for (std::int64_t i = 0; i < n_test; ++i) {
      Rng rv(mix_seed(seed, "glyph.test", static_cast<std::uint64_t>(cls),
                      static_cast<std::uint64_t>(i)));
      auto glyph = render_glyph(cls, rv, size);
      gd.target_test.set.images.push_back(invert_and_noise(glyph, rv));
      gd.target_test.labels.push_back(cls);
    }
  }
  gd.source.validate();
  gd.target.validate();
  gd.target_test.validate();
  return gd;
}

}  // namespace domainbank
