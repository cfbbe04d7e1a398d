#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "domainbank/layers.hpp"

// The translation model: one shared encoder top and decoder head, plus one
// bank per domain holding that domain's encoder front, decoder back, and
// discriminator. Encoding runs front-then-shared, decoding runs
// shared-then-back, so any (from, to) pair of domains is wired through the
// same latent space. Domain banks are structurally identical, which keeps
// the total parameter count affine in the number of domains.

namespace domainbank {

struct ArchConfig {
  std::int64_t in_channels = 3;
  // Channel widths after the stem conv and each of the two downsamples.
  std::vector<std::int64_t> channels = {16, 32, 64};
  std::int64_t enc_front_blocks = 1;
  std::int64_t shared_blocks = 2;
  std::int64_t dec_back_blocks = 1;
  std::int64_t down_kernel = 4;
  std::int64_t res_kernel = 3;
  double lrelu_slope = 0.2;
  // Share the final discriminator feature block across domains (the score
  // conv stays per-domain). Required by the domain-adaptation setup.
  bool tie_discriminator_top = false;
  std::int64_t num_classes = 0;  // > 0 attaches a classification head
  std::int64_t clf_hidden = 64;

  void validate() const {
    if (in_channels < 1) throw config_error("arch: in_channels must be positive");
    if (channels.size() != 3) throw config_error("arch: channels must list 3 stage widths");
    for (auto c : channels)
      if (c < 1) throw config_error("arch: channel widths must be positive");
    if (enc_front_blocks < 0 || shared_blocks < 1 || dec_back_blocks < 0)
      throw config_error("arch: block counts out of range");
    if (down_kernel < 2 || down_kernel % 2 != 0)
      throw config_error("arch: down_kernel must be even and >= 2");
    if (res_kernel < 1 || res_kernel % 2 == 0)
      throw config_error("arch: res_kernel must be odd");
    if (lrelu_slope < 0.0 || lrelu_slope >= 1.0)
      throw config_error("arch: lrelu_slope must be in [0,1)");
    if (num_classes < 0) throw config_error("arch: num_classes must be >= 0");
    if (num_classes > 0 && clf_hidden < 1)
      throw config_error("arch: clf_hidden must be positive");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"in_channels", in_channels},
                          {"channels", channels},
                          {"enc_front_blocks", enc_front_blocks},
                          {"shared_blocks", shared_blocks},
                          {"dec_back_blocks", dec_back_blocks},
                          {"down_kernel", down_kernel},
                          {"res_kernel", res_kernel},
                          {"lrelu_slope", lrelu_slope},
                          {"tie_discriminator_top", tie_discriminator_top},
                          {"num_classes", num_classes},
                          {"clf_hidden", clf_hidden}};
  }

  static ArchConfig from_json(const nlohmann::json& j) {
    ArchConfig a;
    a.in_channels = j.at("in_channels").get<std::int64_t>();
    a.channels = j.at("channels").get<std::vector<std::int64_t>>();
    a.enc_front_blocks = j.at("enc_front_blocks").get<std::int64_t>();
    a.shared_blocks = j.at("shared_blocks").get<std::int64_t>();
    a.dec_back_blocks = j.at("dec_back_blocks").get<std::int64_t>();
    a.down_kernel = j.at("down_kernel").get<std::int64_t>();
    a.res_kernel = j.at("res_kernel").get<std::int64_t>();
    a.lrelu_slope = j.at("lrelu_slope").get<double>();
    a.tie_discriminator_top = j.at("tie_discriminator_top").get<bool>();
    a.num_classes = j.at("num_classes").get<std::int64_t>();
    a.clf_hidden = j.at("clf_hidden").get<std::int64_t>();
    a.validate();
    return a;
  }

  /// Stable digest of the architecture, used to reject checkpoints built
  /// for a different shape.
  std::uint64_t hash() const {
    const std::string dump = to_json().dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : dump) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  bool operator==(const ArchConfig& o) const { return to_json() == o.to_json(); }
};

/// A batch of images tagged with the domain they belong to.
template <class S>
struct ImageBatchT {
  TensorT<S> pixels;  // (N, C, H, W), values in [-1, 1]
  int domain = -1;
};
using ImageBatch = ImageBatchT<float>;

// ---------------------------------------------------------------------------
// Submodules
// ---------------------------------------------------------------------------

template <class S>
struct EncoderFrontT {
  Conv2dT<S> conv_in;
  InstanceNormT<S> n_in;
  Conv2dT<S> down1;
  InstanceNormT<S> nd1;
  Conv2dT<S> down2;
  InstanceNormT<S> nd2;
  std::vector<ResBlockT<S>> res;
  double slope = 0.2;

  EncoderFrontT() = default;
  EncoderFrontT(const ArchConfig& a, Rng& rng)
      : conv_in(a.in_channels, a.channels[0], a.res_kernel, 1, (a.res_kernel - 1) / 2, rng),
        n_in(a.channels[0]),
        down1(a.channels[0], a.channels[1], a.down_kernel, 2, (a.down_kernel - 2) / 2, rng),
        nd1(a.channels[1]),
        down2(a.channels[1], a.channels[2], a.down_kernel, 2, (a.down_kernel - 2) / 2, rng),
        nd2(a.channels[2]),
        slope(a.lrelu_slope) {
    for (std::int64_t i = 0; i < a.enc_front_blocks; ++i)
      res.emplace_back(a.channels[2], a.res_kernel, a.lrelu_slope, rng);
  }

  TensorT<S> forward(TapeT<S>& tape, const TensorT<S>& x) const {
    auto h = ops::leaky_relu(tape, n_in.forward(tape, conv_in.forward(tape, x)), slope);
    h = ops::leaky_relu(tape, nd1.forward(tape, down1.forward(tape, h)), slope);
    h = ops::leaky_relu(tape, nd2.forward(tape, down2.forward(tape, h)), slope);
    for (const auto& r : res) h = r.forward(tape, h);
    return h;
  }

  void collect(const std::string& p, NamedParamsT<S>& out) const {
    conv_in.collect(p + ".conv_in", out);
    n_in.collect(p + ".n_in", out);
    down1.collect(p + ".down1", out);
    nd1.collect(p + ".nd1", out);
    down2.collect(p + ".down2", out);
    nd2.collect(p + ".nd2", out);
    for (std::size_t i = 0; i < res.size(); ++i)
      res[i].collect(p + ".res" + std::to_string(i), out);
  }
};

/// Residual stack shared by all domains (used for both the encoder top and
/// the decoder head).
template <class S>
struct ResStackT {
  std::vector<ResBlockT<S>> res;

  ResStackT() = default;
  ResStackT(std::int64_t blocks, std::int64_t channels, std::int64_t k, double slope, Rng& rng) {
    for (std::int64_t i = 0; i < blocks; ++i) res.emplace_back(channels, k, slope, rng);
  }

  TensorT<S> forward(TapeT<S>& tape, const TensorT<S>& x) const {
    auto h = x;
    for (const auto& r : res) h = r.forward(tape, h);
    return h;
  }

  void collect(const std::string& p, NamedParamsT<S>& out) const {
    for (std::size_t i = 0; i < res.size(); ++i)
      res[i].collect(p + ".res" + std::to_string(i), out);
  }
};

template <class S>
struct DecoderBackT {
  std::vector<ResBlockT<S>> res;
  ConvTranspose2dT<S> up1;
  InstanceNormT<S> nu1;
  ConvTranspose2dT<S> up2;
  InstanceNormT<S> nu2;
  Conv2dT<S> conv_out;
  double slope = 0.2;

  DecoderBackT() = default;
  DecoderBackT(const ArchConfig& a, Rng& rng)
      : up1(a.channels[2], a.channels[1], a.down_kernel, 2, (a.down_kernel - 2) / 2, rng),
        nu1(a.channels[1]),
        up2(a.channels[1], a.channels[0], a.down_kernel, 2, (a.down_kernel - 2) / 2, rng),
        nu2(a.channels[0]),
        conv_out(a.channels[0], a.in_channels, a.res_kernel, 1, (a.res_kernel - 1) / 2, rng),
        slope(a.lrelu_slope) {
    for (std::int64_t i = 0; i < a.dec_back_blocks; ++i)
      res.emplace_back(a.channels[2], a.res_kernel, a.lrelu_slope, rng);
  }

  TensorT<S> forward(TapeT<S>& tape, const TensorT<S>& z) const {
    auto h = z;
    for (const auto& r : res) h = r.forward(tape, h);
    h = ops::leaky_relu(tape, nu1.forward(tape, up1.forward(tape, h)), slope);
    h = ops::leaky_relu(tape, nu2.forward(tape, up2.forward(tape, h)), slope);
    return ops::tanh(tape, conv_out.forward(tape, h));
  }

  void collect(const std::string& p, NamedParamsT<S>& out) const {
    for (std::size_t i = 0; i < res.size(); ++i)
      res[i].collect(p + ".res" + std::to_string(i), out);
    up1.collect(p + ".up1", out);
    nu1.collect(p + ".nu1", out);
    up2.collect(p + ".up2", out);
    nu2.collect(p + ".nu2", out);
    conv_out.collect(p + ".conv_out", out);
  }
};

/// Final discriminator feature block; per-domain by default, shared across
/// domains when the architecture ties it.
template <class S>
struct DiscTopT {
  Conv2dT<S> conv;
  InstanceNormT<S> n;
  double slope = 0.2;

  DiscTopT() = default;
  DiscTopT(const ArchConfig& a, Rng& rng)
      : conv(a.channels[1], a.channels[2], a.down_kernel, 2, (a.down_kernel - 2) / 2, rng),
        n(a.channels[2]),
        slope(a.lrelu_slope) {}

  TensorT<S> forward(TapeT<S>& tape, const TensorT<S>& x) const {
    return ops::leaky_relu(tape, n.forward(tape, conv.forward(tape, x)), slope);
  }

  void collect(const std::string& p, NamedParamsT<S>& out) const {
    conv.collect(p + ".conv", out);
    n.collect(p + ".n", out);
  }
};

template <class S>
struct DiscriminatorT {
  Conv2dT<S> conv1;  // stem, no norm
  Conv2dT<S> conv2;
  InstanceNormT<S> n2;
  DiscTopT<S> own_top;  // unused (empty tensors) when the top is tied
  Conv2dT<S> score;     // 1-channel patch scores, always per-domain
  double slope = 0.2;
  bool has_own_top = true;

  DiscriminatorT() = default;
  DiscriminatorT(const ArchConfig& a, Rng& rng)
      : conv1(a.in_channels, a.channels[0], a.down_kernel, 2, (a.down_kernel - 2) / 2, rng),
        conv2(a.channels[0], a.channels[1], a.down_kernel, 2, (a.down_kernel - 2) / 2, rng),
        n2(a.channels[1]),
        score(a.channels[2], 1, a.res_kernel, 1, (a.res_kernel - 1) / 2, rng),
        slope(a.lrelu_slope),
        has_own_top(!a.tie_discriminator_top) {
    if (has_own_top) own_top = DiscTopT<S>(a, rng);
  }

  /// Features up to (not including) the score conv. `tied` supplies the
  /// shared top when this discriminator does not own one.
  TensorT<S> features(TapeT<S>& tape, const TensorT<S>& x, const DiscTopT<S>* tied) const {
    auto h = ops::leaky_relu(tape, conv1.forward(tape, x), slope);
    h = ops::leaky_relu(tape, n2.forward(tape, conv2.forward(tape, h)), slope);
    if (has_own_top) return own_top.forward(tape, h);
    if (!tied) throw contract_error("discriminator: tied top required but missing");
    return tied->forward(tape, h);
  }

  void collect(const std::string& p, NamedParamsT<S>& out) const {
    conv1.collect(p + ".conv1", out);
    conv2.collect(p + ".conv2", out);
    n2.collect(p + ".n2", out);
    if (has_own_top) own_top.collect(p + ".top", out);
    score.collect(p + ".score", out);
  }
};

template <class S>
struct ClassifierHeadT {
  DenseT<S> fc1, fc2;
  double slope = 0.2;

  ClassifierHeadT() = default;
  ClassifierHeadT(const ArchConfig& a, Rng& rng)
      : fc1(a.channels[2], a.clf_hidden, rng),
        fc2(a.clf_hidden, a.num_classes, rng),
        slope(a.lrelu_slope) {}

  /// pooled: (N, feature_channels) -> logits (N, num_classes)
  TensorT<S> forward(TapeT<S>& tape, const TensorT<S>& pooled) const {
    auto h = ops::leaky_relu(tape, fc1.forward(tape, pooled), slope);
    return fc2.forward(tape, h);
  }

  void collect(const std::string& p, NamedParamsT<S>& out) const {
    fc1.collect(p + ".fc1", out);
    fc2.collect(p + ".fc2", out);
  }
};

template <class S>
struct DomainBankEntryT {
  std::string name;
  EncoderFrontT<S> enc_front;
  DecoderBackT<S> dec_back;
  DiscriminatorT<S> disc;
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

template <class S>
class DomainBankModelT {
 public:
  DomainBankModelT() = default;

  DomainBankModelT(ArchConfig arch, const std::vector<std::string>& domain_names,
                   std::uint64_t seed)
      : arch_(arch), seed_(seed) {
    arch_.validate();
    if (domain_names.empty()) throw config_error("model: at least one domain required");
    Rng shared_rng(mix_seed(seed, "init.shared"));
    enc_top_ = ResStackT<S>(arch_.shared_blocks, arch_.channels[2], arch_.res_kernel,
                            arch_.lrelu_slope, shared_rng);
    dec_head_ = ResStackT<S>(arch_.shared_blocks, arch_.channels[2], arch_.res_kernel,
                             arch_.lrelu_slope, shared_rng);
    if (arch_.tie_discriminator_top) disc_top_ = DiscTopT<S>(arch_, shared_rng);
    if (arch_.num_classes > 0) clf_ = ClassifierHeadT<S>(arch_, shared_rng);
    for (const auto& name : domain_names) grow_domain(name);
  }

  const ArchConfig& arch() const { return arch_; }
  int num_domains() const { return static_cast<int>(banks_.size()); }

  const std::string& domain_name(int d) const { return banks_.at(check_domain(d)).name; }
  std::vector<std::string> domain_names() const {
    std::vector<std::string> out;
    for (const auto& b : banks_) out.push_back(b.name);
    return out;
  }

  int domain_index(const std::string& name) const {
    for (std::size_t i = 0; i < banks_.size(); ++i)
      if (banks_[i].name == name) return static_cast<int>(i);
    throw config_error("model: unknown domain '" + name + "'");
  }

  /// Adds a freshly initialized bank; existing parameters are untouched.
  /// Returns the new domain index.
  int grow_domain(const std::string& name) {
    for (const auto& b : banks_)
      if (b.name == name) throw config_error("model: duplicate domain name '" + name + "'");
    const std::uint64_t i = banks_.size();
    Rng rng(mix_seed(seed_, "init.bank", i));
    DomainBankEntryT<S> bank;
    bank.name = name;
    bank.enc_front = EncoderFrontT<S>(arch_, rng);
    bank.dec_back = DecoderBackT<S>(arch_, rng);
    bank.disc = DiscriminatorT<S>(arch_, rng);
    banks_.push_back(std::move(bank));
    return static_cast<int>(i);
  }

  /// Latent mean; sampling is the caller's business (z = mu + noise).
  TensorT<S> encode_mu(TapeT<S>& tape, int domain, const TensorT<S>& x) const {
    check_domain(domain);
    check_image(x);
    auto h = banks_[domain].enc_front.forward(tape, x);
    return enc_top_.forward(tape, h);
  }

  TensorT<S> decode(TapeT<S>& tape, int domain, const TensorT<S>& z) const {
    check_domain(domain);
    auto h = dec_head_.forward(tape, z);
    return banks_[domain].dec_back.forward(tape, h);
  }

  /// Decode through the shared head but a caller-supplied decoder back
  /// (a fused decoder is a synthetic output port, not a registered domain).
  TensorT<S> decode_with(TapeT<S>& tape, const DecoderBackT<S>& back,
                         const TensorT<S>& z) const {
    return back.forward(tape, dec_head_.forward(tape, z));
  }

  /// Deterministic translation (uses z = mu). from == to is rejected; the
  /// within-domain path is reconstruction, not translation.
  TensorT<S> translate(TapeT<S>& tape, int from, int to, const TensorT<S>& x) const {
    if (from == to) throw contract_error("translate: from == to");
    return decode(tape, to, encode_mu(tape, from, x));
  }

  TensorT<S> reconstruct(TapeT<S>& tape, int domain, const TensorT<S>& x) const {
    return decode(tape, domain, encode_mu(tape, domain, x));
  }

  /// a -> b -> a round trip, deterministic.
  TensorT<S> cycle(TapeT<S>& tape, int from, int via, const TensorT<S>& x) const {
    auto fab = translate(tape, from, via, x);
    return translate(tape, via, from, fab);
  }

  /// Patch scores through a sigmoid, in (0,1). Shape (N, 1, h', w').
  TensorT<S> discriminate(TapeT<S>& tape, int domain, const TensorT<S>& x) const {
    check_domain(domain);
    check_image(x);
    auto h = banks_[domain].disc.features(tape, x, tied_top());
    auto logits = banks_[domain].disc.score.forward(tape, h);
    return ops::sigmoid(tape, logits);
  }

  /// Discriminator features pooled over space, (N, C_top). The adaptation
  /// classifier consumes these.
  TensorT<S> discriminator_pooled_features(TapeT<S>& tape, int domain,
                                           const TensorT<S>& x) const {
    check_domain(domain);
    check_image(x);
    auto h = banks_[domain].disc.features(tape, x, tied_top());
    return ops::mean_axes(tape, h, {2, 3}, false);
  }

  /// Class logits (N, num_classes) from the tied discriminator features.
  TensorT<S> classify(TapeT<S>& tape, int domain, const TensorT<S>& x) const {
    if (arch_.num_classes <= 0)
      throw contract_error("classify: model built without a classification head");
    auto pooled = discriminator_pooled_features(tape, domain, x);
    return clf_.forward(tape, pooled);
  }

  // -- parameter access ------------------------------------------------

  NamedParamsT<S> shared_parameters() const {
    NamedParamsT<S> out = shared_generator_parameters();
    auto sd = shared_discriminator_parameters();
    out.insert(out.end(), sd.begin(), sd.end());
    auto cp = classifier_parameters();
    out.insert(out.end(), cp.begin(), cp.end());
    return out;
  }

  /// Shared weights that move with the generators (encoder top, decoder head).
  NamedParamsT<S> shared_generator_parameters() const {
    NamedParamsT<S> out;
    enc_top_.collect("shared.enc_top", out);
    dec_head_.collect("shared.dec_head", out);
    return out;
  }

  /// Shared weights that move with the discriminators (tied feature top, if any).
  NamedParamsT<S> shared_discriminator_parameters() const {
    NamedParamsT<S> out;
    if (arch_.tie_discriminator_top) disc_top_.collect("shared.disc_top", out);
    return out;
  }

  NamedParamsT<S> classifier_parameters() const {
    NamedParamsT<S> out;
    if (arch_.num_classes > 0) clf_.collect("shared.clf", out);
    return out;
  }

  /// Generator-side parameters of one bank (encoder front + decoder back).
  NamedParamsT<S> domain_parameters(int d) const {
    check_domain(d);
    NamedParamsT<S> out;
    const std::string p = "dom" + std::to_string(d);
    banks_[d].enc_front.collect(p + ".enc_front", out);
    banks_[d].dec_back.collect(p + ".dec_back", out);
    return out;
  }

  NamedParamsT<S> discriminator_parameters(int d) const {
    check_domain(d);
    NamedParamsT<S> out;
    banks_[d].disc.collect("dom" + std::to_string(d) + ".disc", out);
    return out;
  }

  NamedParamsT<S> parameters() const {
    NamedParamsT<S> out = shared_parameters();
    for (int d = 0; d < num_domains(); ++d) {
      auto dp = domain_parameters(d);
      out.insert(out.end(), dp.begin(), dp.end());
      auto cp = discriminator_parameters(d);
      out.insert(out.end(), cp.begin(), cp.end());
    }
    return out;
  }

  std::int64_t param_count_shared() const { return count(shared_parameters()); }

  /// Parameters added by one more domain (banks are structurally identical).
  std::int64_t param_count_per_domain() const {
    return count(domain_parameters(0)) + count(discriminator_parameters(0));
  }

  std::int64_t param_count_total() const { return count(parameters()); }

  const DiscTopT<S>* tied_top() const {
    return arch_.tie_discriminator_top ? &disc_top_ : nullptr;
  }

  const ClassifierHeadT<S>& classifier() const { return clf_; }
  const DomainBankEntryT<S>& bank(int d) const { return banks_.at(check_domain(d)); }
  DomainBankEntryT<S>& bank(int d) { return banks_.at(check_domain(d)); }
  std::uint64_t seed() const { return seed_; }

 private:
  int check_domain(int d) const {
    if (d < 0 || d >= num_domains())
      throw config_error("model: domain index " + std::to_string(d) + " out of range (have " +
                         std::to_string(num_domains()) + ")");
    return d;
  }

  void check_image(const TensorT<S>& x) const {
    if (x.rank() != 4) throw dim_error("model: images must be NCHW");
    if (x.dim(1) != arch_.in_channels)
      throw dim_error("model: expected " + std::to_string(arch_.in_channels) +
                      " channels, got " + std::to_string(x.dim(1)));
    if (x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0)
      throw dim_error("model: spatial dims must be multiples of 4, got " +
                      shape_str(x.shape()));
  }

  static std::int64_t count(const NamedParamsT<S>& ps) {
    std::int64_t n = 0;
    for (const auto& [name, p] : ps) n += p.numel();
    return n;
  }

  ArchConfig arch_;
  std::uint64_t seed_ = 0;
  ResStackT<S> enc_top_;   // shared encoder top
  ResStackT<S> dec_head_;  // shared decoder head
  DiscTopT<S> disc_top_;   // only used when tie_discriminator_top
  ClassifierHeadT<S> clf_;  // only used when num_classes > 0
  std::vector<DomainBankEntryT<S>> banks_;
};

using DomainBankModel = DomainBankModelT<float>;

}  // namespace domainbank
