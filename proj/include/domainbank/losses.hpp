#pragma once

#include <cstdint>

#include "domainbank/model.hpp"
#include "domainbank/ops.hpp"

// Training objective. Terms are reported raw (unweighted per-stream means,
// accumulated with +=) and combined into weighted scalars for optimization;
// LossReport::finalize recomputes the weighted total from the raw fields, so
// a report always reconciles against the optimized objective.
//
// All sampling inside the losses draws from seeds mixed with a per-stream
// tag and the domain indices. Passing the same seed therefore reproduces
// the same noise in every function that touches the same stream, which is
// what makes "discriminator phase + generator phase == total objective"
// hold exactly.

namespace domainbank {

struct LossWeights {
  double gan = 10.0;        // adversarial terms, both sides
  double vae_kl = 0.1;      // latent prior pull
  double vae_recon = 100.0;  // within-domain L1
  double cyc_kl = 0.1;      // latent prior pull on both cycle posteriors
  double cyc_recon = 100.0;  // round-trip L1

  void validate() const {
    if (gan < 0 || vae_kl < 0 || vae_recon < 0 || cyc_kl < 0 || cyc_recon < 0)
      throw config_error("loss weights must be non-negative");
  }
};

struct LossReport {
  // Raw unweighted means, accumulated across the streams of one step.
  double vae_kl = 0.0;
  double vae_recon = 0.0;
  double gan_d = 0.0;
  double gan_g = 0.0;
  double cyc_kl = 0.0;
  double cyc_recon = 0.0;
  double total = 0.0;

  void reset() { *this = LossReport{}; }

  /// Weighted sum of the raw fields.
  double finalize(const LossWeights& w) {
    total = w.gan * (gan_d + gan_g) + w.vae_kl * vae_kl + w.vae_recon * vae_recon +
            w.cyc_kl * cyc_kl + w.cyc_recon * cyc_recon;
    return total;
  }
};

/// Standard normal noise, fully determined by the seed.
template <class S>
TensorT<S> gaussian_like(const Shape& shape, std::uint64_t seed) {
  auto t = TensorT<S>::zeros(shape);
  Rng rng(seed);
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<S>(rng.gaussian());
  return t;
}

/// KL(q || N(0, I)) for a unit-variance posterior centered at mu: the
/// closed form collapses to half the squared norm, summed per sample and
/// averaged over the batch.
template <class S>
TensorT<S> kl_to_standard_normal(TapeT<S>& tape, const TensorT<S>& mu) {
  const double batch = static_cast<double>(mu.dim(0));
  auto sq = ops::square(tape, mu);
  auto s = ops::sum(tape, sq);
  return ops::mul(tape, s, 0.5 / batch);
}

/// Mean absolute difference over all elements.
template <class S>
TensorT<S> l1_distance(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw dim_error("l1: shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
  return ops::mean(tape, ops::abs(tape, ops::sub(tape, a, b)));
}

namespace lossdetail {

// Clamp keeps log() finite when the discriminator saturates; gradients
// through saturated patches are zero, same as the usual guard.
constexpr double kProbLo = 1e-7;
constexpr double kProbHi = 1.0 - 1e-7;

template <class S>
TensorT<S> mean_log(TapeT<S>& tape, const TensorT<S>& p) {
  return ops::mean(tape, ops::log(tape, ops::clamp(tape, p, kProbLo, kProbHi)));
}

template <class S>
TensorT<S> mean_log_one_minus(TapeT<S>& tape, const TensorT<S>& p) {
  return ops::mean(
      tape, ops::log(tape, ops::clamp(tape, ops::sub_from(tape, 1.0, p), kProbLo, kProbHi)));
}

}  // namespace lossdetail

/// Within-domain VAE term: encode, sample z = mu + noise, decode, score.
/// Returns the weighted scalar; raw terms are accumulated into `report`.
template <class S>
TensorT<S> vae_loss(TapeT<S>& tape, const DomainBankModelT<S>& model,
                    const ImageBatchT<S>& batch, const LossWeights& w, std::uint64_t seed,
                    LossReport* report = nullptr) {
  auto mu = model.encode_mu(tape, batch.domain, batch.pixels);
  auto noise = gaussian_like<S>(
      mu.shape(), mix_seed(seed, "vae", static_cast<std::uint64_t>(batch.domain)));
  auto z = ops::add(tape, mu, noise);
  auto rec = model.decode(tape, batch.domain, z);
  auto kl = kl_to_standard_normal(tape, mu);
  auto recon = l1_distance(tape, rec, batch.pixels);
  if (report) {
    report->vae_kl += static_cast<double>(kl.item());
    report->vae_recon += static_cast<double>(recon.item());
  }
  auto weighted = ops::add(tape, ops::mul(tape, kl, w.vae_kl), ops::mul(tape, recon, w.vae_recon));
  return weighted;
}

/// The adversarial fake for direction from->to: decode through `to` from a
/// sampled latent of `from`. Shared by both phases so they see the same
/// sample for a given seed.
template <class S>
TensorT<S> sampled_translation(TapeT<S>& tape, const DomainBankModelT<S>& model, int from,
                               int to, const TensorT<S>& x, std::uint64_t seed) {
  if (from == to) throw contract_error("sampled_translation: from == to");
  auto mu = model.encode_mu(tape, from, x);
  auto noise = gaussian_like<S>(
      mu.shape(), mix_seed(seed, "tr", static_cast<std::uint64_t>(from),
                           static_cast<std::uint64_t>(to)));
  auto z = ops::add(tape, mu, noise);
  return model.decode(tape, to, z);
}

/// Discriminator side: -E[log D(real)] - E[log(1 - D(fake))]. The fake is
/// detached here; generator parameters never see this loss.
template <class S>
TensorT<S> gan_loss_discriminator(TapeT<S>& tape, const DomainBankModelT<S>& model, int domain,
                                  const TensorT<S>& real, const TensorT<S>& fake,
                                  const LossWeights& w, LossReport* report = nullptr) {
  auto d_real = model.discriminate(tape, domain, real);
  auto d_fake = model.discriminate(tape, domain, ops::detach(tape, fake));
  auto term = ops::neg(tape, ops::add(tape, lossdetail::mean_log(tape, d_real),
                                      lossdetail::mean_log_one_minus(tape, d_fake)));
  if (report) report->gan_d += static_cast<double>(term.item());
  return ops::mul(tape, term, w.gan);
}

/// Generator side. Non-saturating by default (-E[log D(fake)]); the
/// saturating variant (+E[log(1 - D(fake))]) is kept behind a flag.
template <class S>
TensorT<S> gan_loss_generator(TapeT<S>& tape, const DomainBankModelT<S>& model, int domain,
                              const TensorT<S>& fake, const LossWeights& w,
                              bool saturating = false, LossReport* report = nullptr) {
  auto d_fake = model.discriminate(tape, domain, fake);
  TensorT<S> term;
  if (saturating)
    term = lossdetail::mean_log_one_minus(tape, d_fake);
  else
    term = ops::neg(tape, lossdetail::mean_log(tape, d_fake));
  if (report) report->gan_g += static_cast<double>(term.item());
  return ops::mul(tape, term, w.gan);
}

/// Intermediate tensors of one sampled round trip.
template <class S>
struct CycleTraceT {
  TensorT<S> mu_a;    // posterior mean of the source image
  TensorT<S> mu_b;    // posterior mean of the crossing image
  TensorT<S> ret;     // the returned image in the source domain
};

/// Round trip from -> to -> from with sampled latents on both hops, using
/// the "cyc" streams. The same seed reproduces the same trace anywhere.
template <class S>
CycleTraceT<S> sampled_cycle(TapeT<S>& tape, const DomainBankModelT<S>& model, int from,
                             int to, const TensorT<S>& x, std::uint64_t seed) {
  if (from == to) throw contract_error("sampled_cycle: from == to");
  const auto uf = static_cast<std::uint64_t>(from);
  const auto ut = static_cast<std::uint64_t>(to);
  CycleTraceT<S> tr;
  tr.mu_a = model.encode_mu(tape, from, x);
  auto z_a =
      ops::add(tape, tr.mu_a, gaussian_like<S>(tr.mu_a.shape(), mix_seed(seed, "cyc", uf, ut, 0)));
  auto xab = model.decode(tape, to, z_a);
  tr.mu_b = model.encode_mu(tape, to, xab);
  auto z_b =
      ops::add(tape, tr.mu_b, gaussian_like<S>(tr.mu_b.shape(), mix_seed(seed, "cyc", uf, ut, 1)));
  tr.ret = model.decode(tape, from, z_b);
  return tr;
}

/// Cycle term: pulls both posteriors toward the prior and scores the
/// returned image against the input. Optionally exposes the trace so
/// callers can reuse the return image without recomputing the trip.
template <class S>
TensorT<S> cycle_loss(TapeT<S>& tape, const DomainBankModelT<S>& model, int from, int to,
                      const TensorT<S>& x, const LossWeights& w, std::uint64_t seed,
                      LossReport* report = nullptr, CycleTraceT<S>* out_trace = nullptr) {
  auto tr = sampled_cycle(tape, model, from, to, x, seed);
  auto kl =
      ops::add(tape, kl_to_standard_normal(tape, tr.mu_a), kl_to_standard_normal(tape, tr.mu_b));
  auto recon = l1_distance(tape, tr.ret, x);
  if (report) {
    report->cyc_kl += static_cast<double>(kl.item());
    report->cyc_recon += static_cast<double>(recon.item());
  }
  if (out_trace) *out_trace = tr;
  return ops::add(tape, ops::mul(tape, kl, w.cyc_kl), ops::mul(tape, recon, w.cyc_recon));
}

/// Loss optimized while updating D_a and D_b (generators held fixed). The
/// fakes are built with recording off: they carry no gradient by
/// construction, which both detaches them and skips tape bookkeeping.
template <class S>
TensorT<S> discriminator_phase(TapeT<S>& tape, const DomainBankModelT<S>& model,
                               const ImageBatchT<S>& a, const ImageBatchT<S>& b,
                               const LossWeights& w, std::uint64_t seed,
                               LossReport* report = nullptr) {
  const bool was = tape.recording();
  tape.set_recording(false);
  auto fake_ab = sampled_translation(tape, model, a.domain, b.domain, a.pixels, seed);
  auto fake_ba = sampled_translation(tape, model, b.domain, a.domain, b.pixels, seed);
  tape.set_recording(was);
  auto lb = gan_loss_discriminator(tape, model, b.domain, b.pixels, fake_ab, w, report);
  auto la = gan_loss_discriminator(tape, model, a.domain, a.pixels, fake_ba, w, report);
  return ops::add(tape, la, lb);
}

/// Loss optimized while updating encoders and decoders (discriminators held
/// fixed): both VAE terms, both generator-side adversarial terms, both
/// cycles.
template <class S>
TensorT<S> generator_phase(TapeT<S>& tape, const DomainBankModelT<S>& model,
                           const ImageBatchT<S>& a, const ImageBatchT<S>& b,
                           const LossWeights& w, std::uint64_t seed, bool saturating = false,
                           LossReport* report = nullptr) {
  auto loss = vae_loss(tape, model, a, w, seed, report);
  loss = ops::add(tape, loss, vae_loss(tape, model, b, w, seed, report));
  auto fake_ab = sampled_translation(tape, model, a.domain, b.domain, a.pixels, seed);
  auto fake_ba = sampled_translation(tape, model, b.domain, a.domain, b.pixels, seed);
  loss = ops::add(tape, loss,
                  gan_loss_generator(tape, model, b.domain, fake_ab, w, saturating, report));
  loss = ops::add(tape, loss,
                  gan_loss_generator(tape, model, a.domain, fake_ba, w, saturating, report));
  loss = ops::add(tape, loss, cycle_loss(tape, model, a.domain, b.domain, a.pixels, w, seed, report));
  loss = ops::add(tape, loss, cycle_loss(tape, model, b.domain, a.domain, b.pixels, w, seed, report));
  return loss;
}

/// Everything the pair (a, b) optimizes in one step, across both phases.
/// Equals discriminator_phase + generator_phase at the same seed.
template <class S>
TensorT<S> total_objective(TapeT<S>& tape, const DomainBankModelT<S>& model,
                           const ImageBatchT<S>& a, const ImageBatchT<S>& b,
                           const LossWeights& w, std::uint64_t seed, bool saturating = false,
                           LossReport* report = nullptr) {
  auto d = discriminator_phase(tape, model, a, b, w, seed, report);
  auto g = generator_phase(tape, model, a, b, w, seed, saturating, report);
  return ops::add(tape, d, g);
}

/// Objective for teaching a newly added domain c against an established
/// domain j: c's VAE term, a generator-side adversarial term judged by the
/// frozen D_j, and the c -> j -> c cycle. Which parameters actually move is
/// the trainer's freeze mask. With `cycle_gan` on, the cycle's returned
/// image additionally has to convince D_c (whose own training is the
/// trainer's separate phase).
template <class S>
TensorT<S> incremental_objective(TapeT<S>& tape, const DomainBankModelT<S>& model,
                                 const ImageBatchT<S>& c, const ImageBatchT<S>& j,
                                 const LossWeights& w, std::uint64_t seed,
                                 bool saturating = false, LossReport* report = nullptr,
                                 bool cycle_gan = false) {
  auto loss = vae_loss(tape, model, c, w, seed, report);
  auto fake_cj = sampled_translation(tape, model, c.domain, j.domain, c.pixels, seed);
  loss = ops::add(tape, loss,
                  gan_loss_generator(tape, model, j.domain, fake_cj, w, saturating, report));
  CycleTraceT<S> tr;
  loss = ops::add(tape, loss,
                  cycle_loss(tape, model, c.domain, j.domain, c.pixels, w, seed, report, &tr));
  if (cycle_gan)
    loss = ops::add(tape, loss,
                    gan_loss_generator(tape, model, c.domain, tr.ret, w, saturating, report));
  return loss;
}

}  // namespace domainbank
