#pragma once

#include <cmath>
#include <string>

#include "domainbank/conv.hpp"
#include "domainbank/ops.hpp"
#include "domainbank/tensor.hpp"

// Layer modules. Each holds its parameter tensors, runs a forward pass on a
// tape, and appends (name, tensor) pairs via collect(). Weights use He
// normal initialization (std = sqrt(2 / fan_in)), biases start at zero,
// norm scales at one.

namespace domainbank {

template <class S>
void he_normal_init(TensorT<S>& w, std::int64_t fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < w.numel(); ++i)
    w.data()[i] = static_cast<S>(rng.gaussian() * std);
}

template <class S>
struct Conv2dT {
  TensorT<S> w, b;
  std::int64_t stride = 1, pad = 0;

  Conv2dT() = default;
  Conv2dT(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k, std::int64_t stride_,
          std::int64_t pad_, Rng& rng)
      : w(TensorT<S>::zeros({out_ch, in_ch, k, k}, true)),
        b(TensorT<S>::zeros({out_ch}, true)),
        stride(stride_),
        pad(pad_) {
    he_normal_init(w, in_ch * k * k, rng);
  }

  TensorT<S> forward(TapeT<S>& tape, const TensorT<S>& x) const {
    return conv2d(tape, x, w, b, stride, pad);
  }

  void collect(const std::string& prefix, NamedParamsT<S>& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
};

template <class S>
struct ConvTranspose2dT {
  TensorT<S> w, b;
  std::int64_t stride = 1, pad = 0;

  ConvTranspose2dT() = default;
  ConvTranspose2dT(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k, std::int64_t stride_,
                   std::int64_t pad_, Rng& rng)
      : w(TensorT<S>::zeros({in_ch, out_ch, k, k}, true)),
        b(TensorT<S>::zeros({out_ch}, true)),
        stride(stride_),
        pad(pad_) {
    he_normal_init(w, in_ch * k * k, rng);
  }

  TensorT<S> forward(TapeT<S>& tape, const TensorT<S>& x) const {
    return conv_transpose2d(tape, x, w, b, stride, pad);
  }

  void collect(const std::string& prefix, NamedParamsT<S>& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
};

/// Per-channel normalization over each sample's spatial extent, built from
/// differentiable primitives so its gradient needs no bespoke derivation.
template <class S>
struct InstanceNormT {
  TensorT<S> gamma, beta;
  double eps = 1e-5;

  InstanceNormT() = default;
  explicit InstanceNormT(std::int64_t channels)
      : gamma(TensorT<S>::full({channels}, S(1), true)),
        beta(TensorT<S>::zeros({channels}, true)) {}

  TensorT<S> forward(TapeT<S>& tape, const TensorT<S>& x) const {
    if (x.rank() != 4) throw dim_error("instance_norm: input must be NCHW");
    if (x.dim(1) != gamma.dim(0))
      throw dim_error("instance_norm: expected " + std::to_string(gamma.dim(0)) +
                      " channels, got " + std::to_string(x.dim(1)));
    auto mu = ops::mean_axes(tape, x, {2, 3}, true);
    auto xc = ops::sub(tape, x, mu);
    auto var = ops::mean_axes(tape, ops::square(tape, xc), {2, 3}, true);
    auto denom = ops::sqrt(tape, ops::add(tape, var, eps));
    auto xhat = ops::div(tape, xc, denom);
    const Shape cs{1, gamma.dim(0), 1, 1};
    auto g = ops::reshape(tape, gamma, cs);
    auto bb = ops::reshape(tape, beta, cs);
    return ops::add(tape, ops::mul(tape, xhat, g), bb);
  }

  void collect(const std::string& prefix, NamedParamsT<S>& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
  }
};

/// conv-norm-act-conv-norm with an additive skip. All-zero parameters make
/// the block an exact identity, which anchors its unit test.
template <class S>
struct ResBlockT {
  Conv2dT<S> conv1, conv2;
  InstanceNormT<S> n1, n2;
  double slope = 0.2;

  ResBlockT() = default;
  ResBlockT(std::int64_t channels, std::int64_t k, double slope_, Rng& rng)
      : conv1(channels, channels, k, 1, (k - 1) / 2, rng),
        conv2(channels, channels, k, 1, (k - 1) / 2, rng),
        n1(channels),
        n2(channels),
        slope(slope_) {
    if (k % 2 == 0) throw contract_error("res block kernel must be odd to preserve size");
  }

  TensorT<S> forward(TapeT<S>& tape, const TensorT<S>& x) const {
    auto h = n1.forward(tape, conv1.forward(tape, x));
    h = ops::leaky_relu(tape, h, slope);
    h = n2.forward(tape, conv2.forward(tape, h));
    return ops::add(tape, h, x);
  }

  void collect(const std::string& prefix, NamedParamsT<S>& out) const {
    conv1.collect(prefix + ".conv1", out);
    n1.collect(prefix + ".n1", out);
    conv2.collect(prefix + ".conv2", out);
    n2.collect(prefix + ".n2", out);
  }
};

/// Affine layer; weight is stored (in, out) so the forward is a plain matmul.
template <class S>
struct DenseT {
  TensorT<S> w, b;

  DenseT() = default;
  DenseT(std::int64_t in, std::int64_t out, Rng& rng)
      : w(TensorT<S>::zeros({in, out}, true)), b(TensorT<S>::zeros({out}, true)) {
    he_normal_init(w, in, rng);
  }

  TensorT<S> forward(TapeT<S>& tape, const TensorT<S>& x) const {
    auto y = ops::matmul(tape, x, w);
    auto bb = ops::reshape(tape, b, {1, b.dim(0)});
    return ops::add(tape, y, bb);
  }

  void collect(const std::string& prefix, NamedParamsT<S>& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
};

}  // namespace domainbank
