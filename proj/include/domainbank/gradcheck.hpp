#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "domainbank/tensor.hpp"

// Central-difference gradient checking. The loss function must be a pure
// deterministic function of the parameters (any internal randomness derived
// from fixed seeds), since it gets re-evaluated with elements nudged.
//
// Agreement is judged per parameter tensor with a norm ratio measured
// against the global gradient magnitude,
//   ||fd_t - analytic_t|| / (||fd_all|| + ||analytic_all|| + tiny),
// so a tensor whose true gradient happens to be exactly zero (e.g. a conv
// bias that a downstream normalization cancels) is not judged against pure
// finite-difference noise.

namespace domainbank {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  bool pass = false;
  std::vector<std::pair<std::string, double>> per_param;
};

/// F: (TapeT<S>&) -> scalar TensorT<S>. Step size per element is
/// h_rel * (|x| + 1).
template <class S, class F>
GradCheckResult gradient_check(F f, NamedParamsT<S> params, double h_rel, double tol) {
  for (auto& [name, p] : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }

  TapeT<S> tape;
  auto loss = f(tape);
  if (loss.numel() != 1) throw contract_error("gradient_check: loss must be scalar");
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params) {
    std::vector<double> g(p.grad_vec().begin(), p.grad_vec().end());
    analytic.push_back(std::move(g));
  }

  auto eval = [&]() -> double {
    TapeT<S> t;
    t.set_recording(false);
    return static_cast<double>(f(t).item());
  };

  std::vector<double> num_sq(params.size(), 0.0);
  double den_fd = 0.0, den_an = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi].second;
    const std::int64_t n = p.numel();
    for (std::int64_t i = 0; i < n; ++i) {
      const S orig = p.data()[i];
      const S h = static_cast<S>(h_rel * (std::abs(static_cast<double>(orig)) + 1.0));
      p.data()[i] = orig + h;
      const double fp = eval();
      p.data()[i] = orig - h;
      const double fm = eval();
      p.data()[i] = orig;
      const double fd = (fp - fm) / (2.0 * static_cast<double>(h));
      const double an = analytic[pi][static_cast<std::size_t>(i)];
      num_sq[pi] += (fd - an) * (fd - an);
      den_fd += fd * fd;
      den_an += an * an;
    }
  }
  const double den = std::sqrt(den_fd) + std::sqrt(den_an) + 1e-12;
  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const double rel = std::sqrt(num_sq[pi]) / den;
    res.per_param.emplace_back(params[pi].first, rel);
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_param = params[pi].first;
    }
  }
  res.pass = res.max_rel_err <= tol;
  return res;
}

/// Single-tensor convenience wrapper.
template <class S, class F>
GradCheckResult gradient_check_one(F f, TensorT<S> x, double h_rel, double tol) {
  NamedParamsT<S> params{{"x", x}};
  auto wrapped = [&f, x](TapeT<S>& tape) { return f(tape, x); };
  return gradient_check<S>(wrapped, params, h_rel, tol);
}

}  // namespace domainbank
