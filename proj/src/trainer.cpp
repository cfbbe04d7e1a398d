#include "domainbank/trainer.hpp"

#include <iomanip>
#include <sstream>

namespace domainbank {

void TrainConfig::validate() const {
  if (steps < 0) throw config_error("steps must be non-negative");
  if (batch_size < 1) throw config_error("batch_size must be at least 1");
  if (checkpoint_every < 0) throw config_error("checkpoint_every must be non-negative");
  weights.validate();
  if (adam.lr <= 0 || adam.beta1 < 0 || adam.beta1 >= 1 || adam.beta2 < 0 || adam.beta2 >= 1 ||
      adam.eps <= 0)
    throw config_error("optimizer hyperparameters out of range");
}

PairScheduler::PairScheduler(std::vector<std::pair<int, int>> pairs, bool random,
                             std::uint64_t seed)
    : pairs_(std::move(pairs)), random_(random), rng_(seed) {}

std::vector<std::pair<int, int>> PairScheduler::all_pairs(int n_domains) {
  std::vector<std::pair<int, int>> out;
  for (int a = 0; a < n_domains; ++a)
    for (int b = a + 1; b < n_domains; ++b) out.emplace_back(a, b);
  return out;
}

std::vector<std::pair<int, int>> PairScheduler::pairs_with(int n_domains, int new_domain) {
  if (new_domain < 0 || new_domain >= n_domains)
    throw config_error("pairs_with: domain index out of range");
  std::vector<std::pair<int, int>> out;
  for (int j = 0; j < n_domains; ++j)
    if (j != new_domain) out.emplace_back(new_domain, j);
  return out;
}

std::pair<int, int> PairScheduler::next() {
  if (pairs_.empty()) throw contract_error("pair scheduler has no pairs");
  if (random_) return pairs_[static_cast<std::size_t>(rng_.below(pairs_.size()))];
  auto p = pairs_[idx_];
  idx_ = (idx_ + 1) % pairs_.size();
  return p;
}

std::string PairScheduler::state() const {
  return std::to_string(idx_) + " " + rng_.state();
}

void PairScheduler::restore(const std::string& s) {
  std::istringstream is(s);
  std::size_t idx = 0;
  if (!(is >> idx)) throw format_error("pair scheduler: corrupt state");
  std::string rest;
  std::getline(is, rest);
  if (!pairs_.empty() && idx >= pairs_.size())
    throw format_error("pair scheduler: cursor out of range");
  idx_ = idx;
  rng_.restore(rest);
}

void FreezeMask::validate_covers(const std::vector<std::string>& names) const {
  for (const auto& n : names) {
    const bool t = trainable.count(n) > 0;
    const bool f = frozen.count(n) > 0;
    if (t == f)
      throw contract_error("freeze mask must classify '" + n +
                           "' as exactly one of trainable/frozen");
  }
}

std::string csv_header() {
  return "step,pair,vae_kl,vae_recon,gan_d,gan_g,cyc_kl,cyc_recon,total";
}

std::string csv_row(const StepRecord& rec, const std::string& name_a,
                    const std::string& name_b) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << rec.step << ',' << name_a << '-' << name_b << ',' << rec.report.vae_kl << ','
     << rec.report.vae_recon << ',' << rec.report.gan_d << ',' << rec.report.gan_g << ','
     << rec.report.cyc_kl << ',' << rec.report.cyc_recon << ',' << rec.report.total;
  return os.str();
}

}  // namespace domainbank
