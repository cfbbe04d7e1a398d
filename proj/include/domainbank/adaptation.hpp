#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "domainbank/data.hpp"
#include "domainbank/trainer.hpp"

// Domain adaptation re-uses the translation machinery with three changes:
// the discriminators share their top feature block, a small classifier head
// reads the pooled shared features, and the cycle stream is disabled by
// zeroing its weights. Training is multi-task: translation phases exactly as
// in joint training, plus a classification phase on labeled source samples.
// Target labels never enter: the target side of the API only accepts
// unlabeled batches.

namespace domainbank {

struct AdaptationConfig {
  int source = 0;
  int target = 1;
  int num_classes = 3;
  bool tie_discriminator_top = true;
  double clf_weight = 1.0;
  // After this many steps, source samples translated into the target domain
  // (labels carried over, generator detached) join the classification batch,
  // so the exact evaluation path gets trained.
  bool augment_translated = true;
  std::int64_t augment_after = 200;

  void validate() const {
    if (source == target) throw config_error("adaptation: source == target");
    if (num_classes < 2) throw config_error("adaptation: need at least 2 classes");
    if (clf_weight < 0) throw config_error("adaptation: clf_weight must be >= 0");
    if (augment_after < 0) throw config_error("adaptation: augment_after must be >= 0");
  }
};

/// The base arch with the discriminator top tied across domains and a
/// classification head attached.
DomainBankModel build_adaptation_model(ArchConfig arch,
                                       const std::vector<std::string>& domain_names,
                                       const AdaptationConfig& cfg, std::uint64_t seed);

struct AdaptationRecord {
  std::int64_t step = 0;
  LossReport report;  // translation terms, raw
  double clf = 0.0;   // raw cross-entropy (source + augmented)
  double total = 0.0;
};

std::string adaptation_csv_header();
std::string adaptation_csv_row(const AdaptationRecord& rec, const std::string& source,
                               const std::string& target);

using LabeledBatchFn = std::function<std::pair<ImageBatch, std::vector<int>>(std::int64_t)>;
using UnlabeledBatchFn = std::function<ImageBatch(std::int64_t)>;

class AdaptationTrainer {
 public:
  /// Forces the cycle weights to zero; everything else in `cfg` applies as
  /// in joint training.
  AdaptationTrainer(DomainBankModel& model, TrainConfig cfg, AdaptationConfig acfg,
                    std::uint64_t seed);

  AdaptationRecord step(const LabeledBatchFn& source, const UnlabeledBatchFn& target);
  void run(std::int64_t steps, const LabeledBatchFn& source, const UnlabeledBatchFn& target,
           std::ostream* csv = nullptr,
           const std::function<void(std::int64_t)>& on_checkpoint = {});

  std::int64_t step_count() const { return step_; }
  void set_step_count(std::int64_t s) { step_ = s; }
  Adam& optimizer() { return adam_; }
  const TrainConfig& config() const { return cfg_; }
  const AdaptationConfig& adaptation_config() const { return acfg_; }

 private:
  template <class LossFn>
  double run_phase(LossFn&& make_loss, NamedParams update_set);
  void zero_all_grads();

  DomainBankModel* model_;
  TrainConfig cfg_;
  AdaptationConfig acfg_;
  std::uint64_t seed_;
  Adam adam_;
  std::int64_t step_ = 0;
};

/// Accuracy of the classifier on a labeled test set, evaluated through the
/// given domain's discriminator features. Deterministic; labels are only
/// compared against, never trained on.
double evaluate_adaptation(const DomainBankModel& model, int domain,
                           const LabeledImageSet& test, std::int64_t batch_size = 64);

// ---------------------------------------------------------------------------
// Parameter-count accounting: one shared stack plus n banks, versus n(n-1)
// independent single-pair translators.
// ---------------------------------------------------------------------------

struct ComplexityReport {
  std::int64_t shared = 0;
  std::int64_t per_domain = 0;
  std::int64_t single_translator = 0;  // one encoder + one decoder + one discriminator
  std::vector<std::int64_t> n;
  std::vector<std::int64_t> bank;      // shared + n * per_domain
  std::vector<std::int64_t> pairwise;  // n * (n-1) * single_translator
  std::vector<double> ratio;           // pairwise / bank

  std::string table() const;
  std::string csv() const;
};

ComplexityReport complexity_report(const ArchConfig& arch,
                                   const std::vector<std::int64_t>& n_values);

}  // namespace domainbank
