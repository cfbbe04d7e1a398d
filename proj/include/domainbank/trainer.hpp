#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "domainbank/adam.hpp"
#include "domainbank/losses.hpp"
#include "domainbank/model.hpp"

// Alternating-phase training driver. Each step serves one domain pair:
// first the pair's discriminators update against frozen generators, then
// the encoders/decoders update against frozen discriminators. Phase
// isolation is enforced by handing the optimizer only the active subset;
// everything else keeps zero effective gradient by having its grads wiped
// at the start of each phase.
//
// Every stochastic choice (pair order, sampling noise) derives from the
// trainer seed and the step counter, so a restored trainer continues
// bit-identically.

namespace domainbank {

struct TrainConfig {
  std::int64_t steps = 500;
  std::int64_t batch_size = 16;
  bool random_pairs = false;        // lexicographic round robin otherwise
  bool saturating_gan = false;
  bool incremental_cycle_gan = false;  // train the new domain's own judge
  bool unfreeze_shared = false;        // let shared stacks move when growing
  std::int64_t checkpoint_every = 0;   // 0 disables the callback
  AdamHp adam;
  LossWeights weights;

  void validate() const;
};

/// Cycles through a fixed pair list, either in order or uniformly at
/// random. State round-trips through a text string.
class PairScheduler {
 public:
  PairScheduler(std::vector<std::pair<int, int>> pairs, bool random, std::uint64_t seed);

  /// All unordered pairs (a, b), a < b, in lexicographic order.
  static std::vector<std::pair<int, int>> all_pairs(int n_domains);
  /// (new_domain, j) for every other domain j, in index order.
  static std::vector<std::pair<int, int>> pairs_with(int n_domains, int new_domain);

  std::pair<int, int> next();
  const std::vector<std::pair<int, int>>& pairs() const { return pairs_; }

  std::string state() const;
  void restore(const std::string& s);

 private:
  std::vector<std::pair<int, int>> pairs_;
  std::size_t idx_ = 0;
  bool random_;
  Rng rng_;
};

/// Explicit partition of parameter names into trainable and frozen. Every
/// model parameter must be classified; a name in neither (or both) sets is
/// a wiring bug and fails validation.
struct FreezeMask {
  std::set<std::string> trainable;
  std::set<std::string> frozen;

  bool is_trainable(const std::string& name) const { return trainable.count(name) > 0; }
  void validate_covers(const std::vector<std::string>& names) const;
};

template <class S>
FreezeMask all_trainable_mask(const DomainBankModelT<S>& model) {
  FreezeMask m;
  for (const auto& [name, p] : model.parameters()) m.trainable.insert(name);
  return m;
}

/// Mask for growing `new_domain`: its bank trains, everything established
/// stays put. The shared stacks can be released explicitly; the new
/// discriminator only matters when the trainer runs its extra phase.
template <class S>
FreezeMask incremental_mask(const DomainBankModelT<S>& model, int new_domain,
                            bool unfreeze_shared = false) {
  FreezeMask m;
  auto put = [&m](const NamedParamsT<S>& ps, bool on) {
    for (const auto& [name, p] : ps) (on ? m.trainable : m.frozen).insert(name);
  };
  put(model.shared_generator_parameters(), unfreeze_shared);
  put(model.shared_discriminator_parameters(), false);
  put(model.classifier_parameters(), false);
  for (int d = 0; d < model.num_domains(); ++d) {
    put(model.domain_parameters(d), d == new_domain);
    put(model.discriminator_parameters(d), d == new_domain);
  }
  return m;
}

/// Sets requires_grad to match the mask: frozen weights skip gradient
/// accumulation entirely (activations still carry gradients through them).
template <class S>
void apply_freeze(DomainBankModelT<S>& model, const FreezeMask& mask) {
  auto params = model.parameters();
  std::vector<std::string> names;
  names.reserve(params.size());
  for (const auto& [name, p] : params) names.push_back(name);
  mask.validate_covers(names);
  for (auto& [name, p] : params) p.set_requires_grad(mask.is_trainable(name));
}

template <class S>
using BatchFnT = std::function<ImageBatchT<S>(int domain, std::int64_t step)>;

struct StepRecord {
  std::int64_t step = 0;
  int domain_a = -1;
  int domain_b = -1;
  LossReport report;
};

std::string csv_header();
std::string csv_row(const StepRecord& rec, const std::string& name_a,
                    const std::string& name_b);

template <class S>
class TrainerT {
 public:
  /// Joint training over all pairs of the model's domains.
  TrainerT(DomainBankModelT<S>& model, const TrainConfig& cfg, std::uint64_t seed)
      : TrainerT(model, cfg, seed, -1, all_trainable_mask(model)) {
    if (model.num_domains() < 2)
      throw config_error("training needs at least two domains");
  }

  /// Incremental training: only `new_domain`'s bank (and whatever else the
  /// mask releases) moves; established domains act as fixed judges.
  TrainerT(DomainBankModelT<S>& model, const TrainConfig& cfg, std::uint64_t seed,
           int new_domain, FreezeMask mask)
      : model_(&model),
        cfg_(cfg),
        seed_(seed),
        new_domain_(new_domain),
        mask_(std::move(mask)),
        sched_(new_domain < 0 ? PairScheduler::all_pairs(model.num_domains())
                              : PairScheduler::pairs_with(model.num_domains(), new_domain),
               cfg.random_pairs, mix_seed(seed, "pairs")),
        adam_(cfg.adam) {
    cfg_.validate();
    apply_freeze(*model_, mask_);
  }

  bool incremental() const { return new_domain_ >= 0; }

  /// One optimization step. Throws divergence_error when a loss or any
  /// guarded intermediate stops being finite.
  StepRecord step(const BatchFnT<S>& next) {
    const auto [a, b] = sched_.next();
    auto batch_a = next(a, step_);
    auto batch_b = next(b, step_);
    if (batch_a.domain != a || batch_b.domain != b)
      throw contract_error("batch source returned the wrong domain");

    StepRecord rec;
    rec.step = step_;
    rec.domain_a = a;
    rec.domain_b = b;
    const std::uint64_t sseed = mix_seed(seed_, "step", static_cast<std::uint64_t>(step_));

    if (!incremental()) {
      run_phase(rec, [&](TapeT<S>& tape) {
        return discriminator_phase(tape, *model_, batch_a, batch_b, cfg_.weights, sseed,
                                   &rec.report);
      },
                discriminator_set(a, b));
      run_phase(rec, [&](TapeT<S>& tape) {
        return generator_phase(tape, *model_, batch_a, batch_b, cfg_.weights, sseed,
                               cfg_.saturating_gan, &rec.report);
      },
                generator_set(a, b));
    } else {
      if (cfg_.incremental_cycle_gan) {
        run_phase(rec, [&](TapeT<S>& tape) {
          const bool was = tape.recording();
          tape.set_recording(false);
          auto fake = sampled_cycle(tape, *model_, a, b, batch_a.pixels, sseed).ret;
          tape.set_recording(was);
          return gan_loss_discriminator(tape, *model_, a, batch_a.pixels, fake, cfg_.weights,
                                        &rec.report);
        },
                  discriminator_set(a, -1));
      }
      run_phase(rec, [&](TapeT<S>& tape) {
        return incremental_objective(tape, *model_, batch_a, batch_b, cfg_.weights, sseed,
                                     cfg_.saturating_gan, &rec.report,
                                     cfg_.incremental_cycle_gan);
      },
                generator_set(a, b));
    }

    rec.report.finalize(cfg_.weights);
    if (!std::isfinite(rec.report.total))
      throw divergence_error("nonfinite objective at step " + std::to_string(step_));
    ++step_;
    return rec;
  }

  /// Runs `steps` more steps. Appends one CSV row per step (with a header
  /// when starting from step 0) and fires the callback every
  /// checkpoint_every steps.
  void run(std::int64_t steps, const BatchFnT<S>& next, std::ostream* csv = nullptr,
           const std::function<void(std::int64_t)>& on_checkpoint = {}) {
    if (csv && step_ == 0) *csv << csv_header() << '\n';
    for (std::int64_t i = 0; i < steps; ++i) {
      auto rec = step(next);
      if (csv)
        *csv << csv_row(rec, model_->domain_name(rec.domain_a),
                        model_->domain_name(rec.domain_b))
             << '\n';
      if (on_checkpoint && cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0)
        on_checkpoint(step_);
    }
    if (csv) csv->flush();
  }

  std::int64_t step_count() const { return step_; }
  void set_step_count(std::int64_t s) { step_ = s; }
  std::string scheduler_state() const { return sched_.state(); }
  void restore_scheduler(const std::string& s) { sched_.restore(s); }
  AdamT<S>& optimizer() { return adam_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  template <class LossFn>
  void run_phase(StepRecord& rec, LossFn&& make_loss, NamedParamsT<S> update_set) {
    zero_all_grads();
    TapeT<S> tape;
    auto loss = make_loss(tape);
    if (tape.saw_nonfinite() || !std::isfinite(static_cast<double>(loss.item())))
      throw divergence_error("nonfinite loss at step " + std::to_string(rec.step));
    tape.backward(loss);
    if (!update_set.empty()) adam_.step(update_set);
  }

  void zero_all_grads() {
    for (auto& [name, p] : model_->parameters())
      if (p.requires_grad()) p.zero_grad();
  }

  NamedParamsT<S> discriminator_set(int a, int b) const {
    NamedParamsT<S> out = model_->discriminator_parameters(a);
    if (b >= 0) {
      auto db = model_->discriminator_parameters(b);
      out.insert(out.end(), db.begin(), db.end());
    }
    auto sd = model_->shared_discriminator_parameters();
    out.insert(out.end(), sd.begin(), sd.end());
    return masked(std::move(out));
  }

  NamedParamsT<S> generator_set(int a, int b) const {
    NamedParamsT<S> out = model_->shared_generator_parameters();
    auto da = model_->domain_parameters(a);
    out.insert(out.end(), da.begin(), da.end());
    auto db = model_->domain_parameters(b);
    out.insert(out.end(), db.begin(), db.end());
    return masked(std::move(out));
  }

  NamedParamsT<S> masked(NamedParamsT<S> ps) const {
    NamedParamsT<S> out;
    out.reserve(ps.size());
    for (auto& kv : ps)
      if (mask_.is_trainable(kv.first)) out.push_back(std::move(kv));
    return out;
  }

  DomainBankModelT<S>* model_;
  TrainConfig cfg_;
  std::uint64_t seed_;
  int new_domain_;
  FreezeMask mask_;
  PairScheduler sched_;
  AdamT<S> adam_;
  std::int64_t step_ = 0;
};

using Trainer = TrainerT<float>;

}  // namespace domainbank
