#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "domainbank/model.hpp"

// Dataset containers and deterministic batching. Images live as normalized
// float CHW buffers in [-1, 1]; the byte mapping is the exact affine
// bijection 0 -> -1, 255 -> +1 with 256 evenly spaced steps.

namespace domainbank {

inline float byte_to_unit(std::uint8_t b) {
  return static_cast<float>(b) * (2.0f / 255.0f) - 1.0f;
}

inline std::uint8_t unit_to_byte(float v) {
  if (v < -1.0f) v = -1.0f;
  if (v > 1.0f) v = 1.0f;
  return static_cast<std::uint8_t>((v + 1.0f) * (255.0f / 2.0f) + 0.5f);
}

/// Unlabeled image collection, one domain's worth of training data.
struct ImageSet {
  Shape shape;  // (C, H, W) of every image
  std::vector<std::vector<float>> images;

  std::int64_t size() const { return static_cast<std::int64_t>(images.size()); }
  std::int64_t image_numel() const { return numel_of(shape); }

  /// Uniform shapes, C in {1,3}, H and W multiples of 8, values in [-1,1].
  void validate() const;
};

/// Image collection with integer class labels. Deliberately a separate
/// type: training a target domain takes an ImageSet, so a caller cannot
/// leak target labels into training by construction.
struct LabeledImageSet {
  ImageSet set;
  std::vector<int> labels;
  int num_classes = 0;

  void validate() const;
};

/// Epoch-shuffled index stream. Each epoch's permutation comes from a
/// generator seeded by (seed, epoch), so the whole stream is determined by
/// the seed and the two-integer state (epoch, cursor). The trailing partial
/// batch of each epoch is dropped.
class BatchIter {
 public:
  BatchIter(std::int64_t n, std::int64_t batch_size, std::uint64_t seed);

  std::vector<std::int64_t> next();
  std::int64_t batches_per_epoch() const { return n_ / batch_size_; }

  std::string state() const;
  void restore(const std::string& s);

 private:
  void start_epoch();

  std::int64_t n_;
  std::int64_t batch_size_;
  std::uint64_t seed_;
  std::int64_t epoch_ = -1;  // start_epoch() moves to 0 lazily
  std::int64_t cursor_ = 0;
  std::vector<std::int64_t> perm_;
};

/// Copies the indexed images into an (N, C, H, W) batch tagged with the
/// domain it belongs to.
ImageBatchT<float> make_batch(const ImageSet& set, const std::vector<std::int64_t>& indices,
                              int domain);

/// Same, carrying the matching labels alongside.
std::pair<ImageBatchT<float>, std::vector<int>> make_labeled_batch(
    const LabeledImageSet& set, const std::vector<std::int64_t>& indices, int domain);

/// One BatchIter per domain over per-domain image sets; the trainer's batch
/// callback. State round-trips through text for resumable runs.
class DataSource {
 public:
  DataSource(std::vector<ImageSet> sets, std::int64_t batch_size, std::uint64_t seed);

  ImageBatchT<float> batch(int domain);

  int num_domains() const { return static_cast<int>(sets_.size()); }
  const ImageSet& set(int domain) const;

  std::string state() const;
  void restore(const std::string& s);

 private:
  std::vector<ImageSet> sets_;
  std::vector<BatchIter> iters_;
};

/// Trainer adapter. The source owns the iteration state; the step index is
/// ignored on purpose.
inline std::function<ImageBatchT<float>(int, std::int64_t)> batch_fn(DataSource& src) {
  return [&src](int domain, std::int64_t) { return src.batch(domain); };
}

/// Procedural square-rendering domains with a shared latent factor: sample
/// i has the same square (position, size) in every domain. Domain 0 draws
/// the outline, domain 1 fills it, domain 2 is exactly the negation of
/// domain 1. At most 3 domains.
std::vector<ImageSet> synthetic_shapes(int n_domains, std::int64_t n_per_domain,
                                       std::int64_t size, std::uint64_t seed);

/// Three-class glyph task for adaptation experiments: labeled source
/// (horizontal bar / vertical bar / filled box, jittered), unlabeled target
/// (intensity-inverted, lightly noised), and a held-out labeled target test
/// split that only evaluation may touch.
struct GlyphData {
  LabeledImageSet source;
  ImageSet target;
  LabeledImageSet target_test;
};

GlyphData synthetic_glyphs(std::int64_t n_per_class, std::int64_t size, std::uint64_t seed);

// -- IDX ingestion (big-endian header digit files) -------------------------

struct IdxImages {
  std::int64_t n = 0, h = 0, w = 0;
  std::vector<std::uint8_t> pixels;  // n*h*w bytes, row-major
};

/// Parses an image file (magic 0x00000803). Truncation and bad magics
/// report the byte offset they were discovered at.
IdxImages load_idx_images(const std::string& path);

/// Parses a label file (magic 0x00000801).
std::vector<int> load_idx_labels(const std::string& path);

/// Normalized ImageSet from raw IDX images; pads H and W up to the next
/// multiple of 8 with background (-1) so digit files satisfy the dataset
/// invariant.
ImageSet idx_to_image_set(const IdxImages& raw);

/// Image + label pair with count consistency enforced.
LabeledImageSet load_idx_pair(const std::string& image_path, const std::string& label_path,
                              int num_classes);

}  // namespace domainbank
