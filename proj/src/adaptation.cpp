#include "domainbank/adaptation.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "domainbank/losses.hpp"

namespace domainbank {

DomainBankModel build_adaptation_model(ArchConfig arch,
                                       const std::vector<std::string>& domain_names,
                                       const AdaptationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (domain_names.size() < 2)
    throw config_error("adaptation: need at least 2 domains");
  arch.tie_discriminator_top = cfg.tie_discriminator_top;
  arch.num_classes = cfg.num_classes;
  return DomainBankModel(arch, domain_names, seed);
}

std::string adaptation_csv_header() {
  return "step,pair,vae_kl,vae_recon,gan_d,gan_g,clf,total";
}

std::string adaptation_csv_row(const AdaptationRecord& rec, const std::string& source,
                               const std::string& target) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << rec.step << ',' << source << '-' << target << ',' << rec.report.vae_kl << ','
     << rec.report.vae_recon << ',' << rec.report.gan_d << ',' << rec.report.gan_g << ','
     << rec.clf << ',' << rec.total;
  return os.str();
}

AdaptationTrainer::AdaptationTrainer(DomainBankModel& model, TrainConfig cfg,
                                     AdaptationConfig acfg, std::uint64_t seed)
    : model_(&model), cfg_(cfg), acfg_(acfg), seed_(seed), adam_(cfg.adam) {
  acfg_.validate();
  cfg_.weights.cyc_kl = 0.0;  // the cycle stream is not part of this task
  cfg_.weights.cyc_recon = 0.0;
  cfg_.validate();
  const int n = model.num_domains();
  if (acfg_.source < 0 || acfg_.source >= n || acfg_.target < 0 || acfg_.target >= n)
    throw config_error("adaptation: source/target domain out of range");
  if (model.arch().num_classes != acfg_.num_classes)
    throw config_error("adaptation: model has " + std::to_string(model.arch().num_classes) +
                       " classes, config says " + std::to_string(acfg_.num_classes));
}

template <class LossFn>
double AdaptationTrainer::run_phase(LossFn&& make_loss, NamedParams update_set) {
  zero_all_grads();
  TapeT<float> tape;
  auto loss = make_loss(tape);
  if (tape.saw_nonfinite() || !std::isfinite(static_cast<double>(loss.item())))
    throw divergence_error("nonfinite loss at step " + std::to_string(step_));
  const double value = loss.item();
  tape.backward(loss);
  if (!update_set.empty()) adam_.step(update_set);
  return value;
}

void AdaptationTrainer::zero_all_grads() {
  for (auto& [name, p] : model_->parameters())
    if (p.requires_grad()) p.zero_grad();
}

AdaptationRecord AdaptationTrainer::step(const LabeledBatchFn& source,
                                         const UnlabeledBatchFn& target) {
  const int s = acfg_.source, t = acfg_.target;
  auto [batch_s, labels] = source(step_);
  auto batch_t = target(step_);
  if (batch_s.domain != s || batch_t.domain != t)
    throw contract_error("batch source returned the wrong domain");
  if (labels.size() != static_cast<std::size_t>(batch_s.pixels.dim(0)))
    throw contract_error("label count does not match the source batch");

  AdaptationRecord rec;
  rec.step = step_;
  const std::uint64_t sseed = mix_seed(seed_, "step", static_cast<std::uint64_t>(step_));

  auto disc_set = [&]() {
    NamedParams out = model_->discriminator_parameters(s);
    auto dt = model_->discriminator_parameters(t);
    out.insert(out.end(), dt.begin(), dt.end());
    auto sd = model_->shared_discriminator_parameters();
    out.insert(out.end(), sd.begin(), sd.end());
    return out;
  };
  auto gen_set = [&]() {
    NamedParams out = model_->shared_generator_parameters();
    auto da = model_->domain_parameters(s);
    out.insert(out.end(), da.begin(), da.end());
    auto db = model_->domain_parameters(t);
    out.insert(out.end(), db.begin(), db.end());
    return out;
  };

  run_phase(
      [&](TapeT<float>& tape) {
        return discriminator_phase(tape, *model_, batch_s, batch_t, cfg_.weights, sseed,
                                   &rec.report);
      },
      disc_set());
  run_phase(
      [&](TapeT<float>& tape) {
        return generator_phase(tape, *model_, batch_s, batch_t, cfg_.weights, sseed,
                               cfg_.saturating_gan, &rec.report);
      },
      gen_set());

  // Classification phase. Skipped entirely at weight 0 so such a run stays
  // bit-identical to pure translation training (an extra optimizer step,
  // even a zero-gradient one, would advance the slot counters).
  if (acfg_.clf_weight > 0) {
    auto clf_set = disc_set();
    auto cp = model_->classifier_parameters();
    clf_set.insert(clf_set.end(), cp.begin(), cp.end());
    const std::vector<int>& lab = labels;
    rec.clf = run_phase(
        [&](TapeT<float>& tape) {
          auto loss = ops::softmax_cross_entropy(
              tape, model_->classify(tape, s, batch_s.pixels), lab);
          if (acfg_.augment_translated && step_ >= acfg_.augment_after) {
            const bool was = tape.recording();
            tape.set_recording(false);
            auto fake = model_->translate(tape, s, t, batch_s.pixels);
            tape.set_recording(was);
            loss = ops::add(tape, loss,
                            ops::softmax_cross_entropy(
                                tape, model_->classify(tape, t, fake), lab));
          }
          auto w = TensorT<float>::full(loss.shape(), static_cast<float>(acfg_.clf_weight));
          return ops::mul(tape, loss, w);
        },
        std::move(clf_set));
    rec.clf /= acfg_.clf_weight;  // report the raw cross-entropy
  }

  rec.report.finalize(cfg_.weights);
  rec.total = rec.report.total + acfg_.clf_weight * rec.clf;
  if (!std::isfinite(rec.total))
    throw divergence_error("nonfinite objective at step " + std::to_string(step_));
  ++step_;
  return rec;
}

void AdaptationTrainer::run(std::int64_t steps, const LabeledBatchFn& source,
                            const UnlabeledBatchFn& target, std::ostream* csv,
                            const std::function<void(std::int64_t)>& on_checkpoint) {
  if (csv && step_ == 0) *csv << adaptation_csv_header() << '\n';
  const std::string sname = model_->domain_name(acfg_.source);
  const std::string tname = model_->domain_name(acfg_.target);
  for (std::int64_t i = 0; i < steps; ++i) {
    auto rec = step(source, target);
    if (csv) *csv << adaptation_csv_row(rec, sname, tname) << '\n';
    if (on_checkpoint && cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0)
      on_checkpoint(step_);
  }
  if (csv) csv->flush();
}

double evaluate_adaptation(const DomainBankModel& model, int domain,
                           const LabeledImageSet& test, std::int64_t batch_size) {
  test.validate();
  if (test.set.size() == 0) throw config_error("evaluate: empty test set");
  if (test.num_classes != model.arch().num_classes)
    throw config_error("evaluate: test set has " + std::to_string(test.num_classes) +
                       " classes, model has " + std::to_string(model.arch().num_classes));
  if (batch_size < 1) throw config_error("evaluate: batch_size must be positive");

  const std::int64_t n = test.set.size();
  std::int64_t correct = 0;
  for (std::int64_t at = 0; at < n; at += batch_size) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = at; i < std::min(n, at + batch_size); ++i) idx.push_back(i);
    auto batch = make_batch(test.set, idx, domain);
    TapeT<float> tape;
    tape.set_recording(false);
    auto logits = model.classify(tape, domain, batch.pixels);
    const std::int64_t k = logits.dim(1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const float* row = logits.data() + static_cast<std::int64_t>(r) * k;
      std::int64_t best = 0;
      for (std::int64_t j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
      if (best == test.labels[static_cast<std::size_t>(idx[r])]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::string ComplexityReport::table() const {
  std::ostringstream os;
  os << std::setw(4) << "n" << std::setw(14) << "bank" << std::setw(14) << "pairwise"
     << std::setw(10) << "ratio" << '\n';
  for (std::size_t i = 0; i < n.size(); ++i) {
    os << std::setw(4) << n[i] << std::setw(14) << bank[i] << std::setw(14) << pairwise[i]
       << std::setw(10) << std::fixed << std::setprecision(2) << ratio[i] << '\n';
  }
  os << "shared " << shared << ", per-domain " << per_domain << ", single translator "
     << single_translator << '\n';
  return os.str();
}

std::string ComplexityReport::csv() const {
  std::ostringstream os;
  os << "n,bank_params,pairwise_params,ratio\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < n.size(); ++i)
    os << n[i] << ',' << bank[i] << ',' << pairwise[i] << ',' << ratio[i] << '\n';
  return os.str();
}

ComplexityReport complexity_report(const ArchConfig& arch,
                                   const std::vector<std::int64_t>& n_values) {
  if (n_values.empty()) throw config_error("complexity: no n values");
  for (auto n : n_values)
    if (n < 2) throw config_error("complexity: n must be >= 2");
  arch.validate();

  // One instantiated bank yields the closed-form coefficients.
  DomainBankModel probe(arch, {"probe"}, 0);
  ComplexityReport rep;
  rep.shared = probe.param_count_shared();
  rep.per_domain = probe.param_count_per_domain();
  // A standalone pair translator is one encoder, one decoder, and one
  // discriminator; it never carries a classification head.
  auto count = [](const NamedParams& ps) {
    std::int64_t c = 0;
    for (const auto& [name, p] : ps) c += p.numel();
    return c;
  };
  rep.single_translator = count(probe.shared_generator_parameters()) +
                          count(probe.shared_discriminator_parameters()) + rep.per_domain;
  for (auto n : n_values) {
    rep.n.push_back(n);
    rep.bank.push_back(rep.shared + n * rep.per_domain);
    rep.pairwise.push_back(n * (n - 1) * rep.single_translator);
    rep.ratio.push_back(static_cast<double>(rep.pairwise.back()) /
                        static_cast<double>(rep.bank.back()));
  }
  return rep;
}

}  // namespace domainbank
