#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "domainbank/kernels.hpp"
#include "domainbank/tensor.hpp"

// Adam with per-parameter slots keyed by name. Slots carry their own step
// counters; the alternating-phase training loop updates disjoint parameter
// subsets on different steps, and a shared counter would skew the bias
// correction of whichever subset sat out.

namespace domainbank {

struct AdamHp {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class S>
class AdamT {
 public:
  struct Slot {
    std::vector<S> m, v;
    std::int64_t t = 0;
  };

  AdamT() = default;
  explicit AdamT(AdamHp hp) : hp_(hp) {}

  const AdamHp& hp() const { return hp_; }
  void set_hp(AdamHp hp) { hp_ = hp; }

  /// Applies one update to every listed parameter and zeroes its gradient.
  /// Parameters it has not seen before get fresh slots.
  void step(NamedParamsT<S>& params) {
    for (auto& [name, p] : params) {
      if (!p.requires_grad() || p.grad_vec().size() != p.vec().size())
        throw contract_error("adam: parameter without gradient: " + name);
      Slot& slot = slots_[name];
      const std::size_t n = p.vec().size();
      if (slot.m.empty()) {
        slot.m.assign(n, S(0));
        slot.v.assign(n, S(0));
      } else if (slot.m.size() != n) {
        throw contract_error("adam: size change for parameter " + name);
      }
      slot.t += 1;
      const double bc1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(slot.t));
      const double bc2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(slot.t));
      const S lr_t = static_cast<S>(hp_.lr * std::sqrt(bc2) / bc1);
      kern::adam_update(p.data(), slot.m.data(), slot.v.data(), p.grad(), n, lr_t,
                        static_cast<S>(hp_.beta1), static_cast<S>(hp_.beta2),
                        static_cast<S>(hp_.eps));
      p.zero_grad();
    }
  }

  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }

 private:
  AdamHp hp_;
  std::map<std::string, Slot> slots_;
};

using Adam = AdamT<float>;

}  // namespace domainbank
