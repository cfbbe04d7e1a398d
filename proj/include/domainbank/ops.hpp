#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "domainbank/kernels.hpp"
#include "domainbank/tensor.hpp"

// Differentiable tensor operations. Every op computes the forward result,
// then (when the tape is recording) pushes a closure that scatters the
// output gradient into the inputs. Closures skip inputs whose requires_grad
// is false at backward time, so data tensors cost nothing.
//
// Binary ops broadcast between equal-rank shapes where each axis either
// matches or is 1. Ops that can produce non-finite values (div, log, sqrt,
// reciprocal) scan their output and flag the tape so training loops can
// detect divergence cheaply.

namespace domainbank::ops {

template <class S>
Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (a.size() != b.size())
    throw dim_error("broadcast: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i])
      out[i] = a[i];
    else if (a[i] == 1)
      out[i] = b[i];
    else if (b[i] == 1)
      out[i] = a[i];
    else
      throw dim_error("broadcast: incompatible " + shape_str(a) + " vs " + shape_str(b));
  }
  return out;
}

namespace detail {

inline std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::int64_t> st(in.size(), 0);
  std::int64_t acc = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    st[i] = (in[i] == 1 && out[i] != 1) ? 0 : acc;
    acc *= in[i];
  }
  return st;
}

/// Calls f(lin, ia, ib) for every element of `out` in row-major order, where
/// ia/ib are the corresponding linear offsets into the two inputs.
template <class F>
void for_each_bcast(const Shape& out, const Shape& ash, const Shape& bsh, F&& f) {
  const std::int64_t n = numel_of(out);
  if (ash == bsh) {
    for (std::int64_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const auto sa = broadcast_strides(ash, out);
  const auto sb = broadcast_strides(bsh, out);
  const std::size_t rank = out.size();
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t ia = 0, ib = 0;
  for (std::int64_t lin = 0; lin < n; ++lin) {
    f(lin, ia, ib);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      ia += sa[ax];
      ib += sb[ax];
      if (idx[ax] < out[ax]) break;
      idx[ax] = 0;
      ia -= sa[ax] * out[ax];
      ib -= sb[ax] * out[ax];
    }
  }
}

template <class S, class Tp>
void scan_nonfinite(Tp& tape, const TensorT<S>& t) {
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    if (!is_finite(t.data()[i])) {
      tape.flag_nonfinite();
      return;
    }
  }
}

// Shared skeleton for broadcasting binary ops. Fwd: (a,b)->y. Da/Db: partial
// derivative contribution given (a, b, y, gy).
template <class S, class Fwd, class Da, class Db>
TensorT<S> binary_op(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b, Fwd fwd, Da da,
                     Db db) {
  const Shape oshape = broadcast_shape<S>(a.shape(), b.shape());
  TensorT<S> out = TensorT<S>::zeros(oshape);
  const S* ap = a.data();
  const S* bp = b.data();
  S* op = out.data();
  for_each_bcast(oshape, a.shape(), b.shape(),
                 [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
                   op[i] = fwd(ap[ia], bp[ib]);
                 });
  // Copy the handles: capturing a const& parameter by value would give the
  // closure const members and hide the mutable grad() overload.
  TensorT<S> ah = a, bh = b;
  tape.push(out, [ah, bh, out, da, db]() mutable {
    const S* ap2 = ah.data();
    const S* bp2 = bh.data();
    const S* yp = out.data();
    const S* gp = out.grad();
    const bool wa = ah.requires_grad();
    const bool wb = bh.requires_grad();
    if (!wa && !wb) return;
    S* gap = wa ? ah.grad() : nullptr;
    S* gbp = wb ? bh.grad() : nullptr;
    for_each_bcast(out.shape(), ah.shape(), bh.shape(),
                   [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
                     if (wa) gap[ia] += da(ap2[ia], bp2[ib], yp[i], gp[i]);
                     if (wb) gbp[ib] += db(ap2[ia], bp2[ib], yp[i], gp[i]);
                   });
  });
  return out;
}

// Skeleton for elementwise unary ops. Fwd: x->y. Dx: (x, y, gy) -> gx term.
template <class S, class Fwd, class Dx>
TensorT<S> unary_op(TapeT<S>& tape, const TensorT<S>& x, Fwd fwd, Dx dx) {
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  const S* xp = x.data();
  S* op = out.data();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) op[i] = fwd(xp[i]);
  TensorT<S> xh = x;
  tape.push(out, [xh, out, dx]() mutable {
    if (!xh.requires_grad()) return;
    const S* xp2 = xh.data();
    const S* yp = out.data();
    const S* gp = out.grad();
    S* gxp = xh.grad();
    const std::int64_t n2 = xh.numel();
    for (std::int64_t i = 0; i < n2; ++i) gxp[i] += dx(xp2[i], yp[i], gp[i]);
  });
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Arithmetic
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> add(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b) {
  return detail::binary_op(
      tape, a, b, [](S x, S y) { return x + y; }, [](S, S, S, S g) { return g; },
      [](S, S, S, S g) { return g; });
}

template <class S>
TensorT<S> sub(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b) {
  return detail::binary_op(
      tape, a, b, [](S x, S y) { return x - y; }, [](S, S, S, S g) { return g; },
      [](S, S, S, S g) { return -g; });
}

template <class S>
TensorT<S> mul(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b) {
  return detail::binary_op(
      tape, a, b, [](S x, S y) { return x * y; }, [](S, S y, S, S g) { return g * y; },
      [](S x, S, S, S g) { return g * x; });
}

template <class S>
TensorT<S> div(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b) {
  auto out = detail::binary_op(
      tape, a, b, [](S x, S y) { return x / y; }, [](S, S y, S, S g) { return g / y; },
      [](S, S y, S v, S g) { return -g * v / y; });
  detail::scan_nonfinite(tape, out);
  return out;
}

template <class S>
TensorT<S> add(TapeT<S>& tape, const TensorT<S>& a, double s) {
  return detail::unary_op(
      tape, a, [s](S x) { return x + static_cast<S>(s); }, [](S, S, S g) { return g; });
}

template <class S>
TensorT<S> sub_from(TapeT<S>& tape, double s, const TensorT<S>& a) {
  return detail::unary_op(
      tape, a, [s](S x) { return static_cast<S>(s) - x; }, [](S, S, S g) { return -g; });
}

template <class S>
TensorT<S> mul(TapeT<S>& tape, const TensorT<S>& a, double s) {
  return detail::unary_op(
      tape, a, [s](S x) { return x * static_cast<S>(s); },
      [s](S, S, S g) { return g * static_cast<S>(s); });
}

template <class S>
TensorT<S> neg(TapeT<S>& tape, const TensorT<S>& a) {
  return mul(tape, a, -1.0);
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> exp(TapeT<S>& tape, const TensorT<S>& x) {
  return detail::unary_op(
      tape, x, [](S v) { return std::exp(v); }, [](S, S y, S g) { return g * y; });
}

template <class S>
TensorT<S> log(TapeT<S>& tape, const TensorT<S>& x) {
  auto out = detail::unary_op(
      tape, x, [](S v) { return std::log(v); }, [](S v, S, S g) { return g / v; });
  detail::scan_nonfinite(tape, out);
  return out;
}

template <class S>
TensorT<S> tanh(TapeT<S>& tape, const TensorT<S>& x) {
  return detail::unary_op(
      tape, x, [](S v) { return std::tanh(v); },
      [](S, S y, S g) { return g * (S(1) - y * y); });
}

template <class S>
TensorT<S> sqrt(TapeT<S>& tape, const TensorT<S>& x) {
  auto out = detail::unary_op(
      tape, x, [](S v) { return std::sqrt(v); },
      [](S, S y, S g) { return g / (S(2) * y); });
  detail::scan_nonfinite(tape, out);
  return out;
}

template <class S>
TensorT<S> abs(TapeT<S>& tape, const TensorT<S>& x) {
  return detail::unary_op(
      tape, x, [](S v) { return std::abs(v); },
      [](S v, S, S g) { return v > S(0) ? g : (v < S(0) ? -g : S(0)); });
}

template <class S>
TensorT<S> square(TapeT<S>& tape, const TensorT<S>& x) {
  return detail::unary_op(
      tape, x, [](S v) { return v * v; }, [](S v, S, S g) { return S(2) * v * g; });
}

template <class S>
TensorT<S> reciprocal(TapeT<S>& tape, const TensorT<S>& x) {
  auto out = detail::unary_op(
      tape, x, [](S v) { return S(1) / v; }, [](S, S y, S g) { return -g * y * y; });
  detail::scan_nonfinite(tape, out);
  return out;
}

template <class S>
TensorT<S> relu(TapeT<S>& tape, const TensorT<S>& x) {
  return detail::unary_op(
      tape, x, [](S v) { return v > S(0) ? v : S(0); },
      [](S v, S, S g) { return v > S(0) ? g : S(0); });
}

template <class S>
TensorT<S> leaky_relu(TapeT<S>& tape, const TensorT<S>& x, double slope) {
  const S sl = static_cast<S>(slope);
  return detail::unary_op(
      tape, x, [sl](S v) { return v > S(0) ? v : sl * v; },
      [sl](S v, S, S g) { return v > S(0) ? g : sl * g; });
}

template <class S>
TensorT<S> sigmoid(TapeT<S>& tape, const TensorT<S>& x) {
  return detail::unary_op(
      tape, x,
      [](S v) {
        // Split on sign for stability at large |v|.
        if (v >= S(0)) return S(1) / (S(1) + std::exp(-v));
        const S e = std::exp(v);
        return e / (S(1) + e);
      },
      [](S, S y, S g) { return g * y * (S(1) - y); });
}

template <class S>
TensorT<S> clamp(TapeT<S>& tape, const TensorT<S>& x, double lo, double hi) {
  const S l = static_cast<S>(lo);
  const S h = static_cast<S>(hi);
  if (!(l <= h)) throw contract_error("clamp: lo must not exceed hi");
  return detail::unary_op(
      tape, x, [l, h](S v) { return std::min(std::max(v, l), h); },
      [l, h](S v, S, S g) { return (v > l && v < h) ? g : S(0); });
}

// ---------------------------------------------------------------------------
// Structural
// ---------------------------------------------------------------------------

/// Copy that participates in the forward value but blocks gradient flow.
template <class S>
TensorT<S> detach(TapeT<S>& tape, const TensorT<S>& x) {
  (void)tape;
  TensorT<S> out = TensorT<S>::from_vector(x.shape(), x.vec());
  return out;
}

/// Copying reshape; element order is preserved.
template <class S>
TensorT<S> reshape(TapeT<S>& tape, const TensorT<S>& x, const Shape& shape) {
  if (numel_of(shape) != x.numel())
    throw dim_error("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  TensorT<S> out = TensorT<S>::from_vector(shape, x.vec());
  TensorT<S> xh = x;
  tape.push(out, [xh, out]() mutable {
    if (!xh.requires_grad()) return;
    kern::axpy(S(1), out.grad(), xh.grad(), static_cast<std::size_t>(xh.numel()));
  });
  return out;
}

/// C(m,n) = A(m,k) · B(k,n) for rank-2 tensors.
template <class S>
TensorT<S> matmul(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw dim_error("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = static_cast<std::size_t>(a.dim(0));
  const std::size_t k = static_cast<std::size_t>(a.dim(1));
  const std::size_t n = static_cast<std::size_t>(b.dim(1));
  TensorT<S> out = TensorT<S>::zeros({a.dim(0), b.dim(1)});
  kern::matmul(a.data(), b.data(), out.data(), m, k, n);
  TensorT<S> ah = a, bh = b;
  tape.push(out, [ah, bh, out, m, k, n]() mutable {
    const S* g = out.grad();
    if (ah.requires_grad()) {
      std::vector<S> tmp(m * k);
      kern::matmul_nt(g, bh.data(), tmp.data(), m, n, k);  // dA = G · B^T
      kern::axpy(S(1), tmp.data(), ah.grad(), tmp.size());
    }
    if (bh.requires_grad()) {
      std::vector<S> tmp(k * n);
      kern::matmul_tn(ah.data(), g, tmp.data(), m, k, n);  // dB = A^T · G
      kern::axpy(S(1), tmp.data(), bh.grad(), tmp.size());
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

/// Sum of all elements into a rank-0 tensor.
template <class S>
TensorT<S> sum(TapeT<S>& tape, const TensorT<S>& x) {
  TensorT<S> out = TensorT<S>::zeros(Shape{});
  out.data()[0] = kern::sum(x.data(), static_cast<std::size_t>(x.numel()));
  TensorT<S> xh = x;
  tape.push(out, [xh, out]() mutable {
    if (!xh.requires_grad()) return;
    const S g = out.grad()[0];
    S* gx = xh.grad();
    const std::int64_t n = xh.numel();
    for (std::int64_t i = 0; i < n; ++i) gx[i] += g;
  });
  return out;
}

/// Mean of all elements into a rank-0 tensor.
template <class S>
TensorT<S> mean(TapeT<S>& tape, const TensorT<S>& x) {
  const S inv = S(1) / static_cast<S>(x.numel());
  TensorT<S> out = TensorT<S>::zeros(Shape{});
  out.data()[0] = kern::sum(x.data(), static_cast<std::size_t>(x.numel())) * inv;
  TensorT<S> xh = x;
  tape.push(out, [xh, out, inv]() mutable {
    if (!xh.requires_grad()) return;
    const S g = out.grad()[0] * inv;
    S* gx = xh.grad();
    const std::int64_t n = xh.numel();
    for (std::int64_t i = 0; i < n; ++i) gx[i] += g;
  });
  return out;
}

namespace detail {

inline Shape reduced_shape(const Shape& in, const std::vector<int>& axes, bool keepdim) {
  std::vector<bool> cut(in.size(), false);
  for (int ax : axes) {
    if (ax < 0 || static_cast<std::size_t>(ax) >= in.size())
      throw dim_error("reduce: axis " + std::to_string(ax) + " out of range for " +
                      shape_str(in));
    if (cut[ax]) throw dim_error("reduce: duplicate axis " + std::to_string(ax));
    cut[ax] = true;
  }
  Shape out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (cut[i]) {
      if (keepdim) out.push_back(1);
    } else {
      out.push_back(in[i]);
    }
  }
  return out;
}

}  // namespace detail

/// Sum over `axes`. With keepdim the reduced axes stay as size-1 so the
/// result broadcasts against the input.
template <class S>
TensorT<S> sum_axes(TapeT<S>& tape, const TensorT<S>& x, const std::vector<int>& axes,
                    bool keepdim) {
  const Shape oshape = detail::reduced_shape(x.shape(), axes, keepdim);
  // Map through the keepdim variant so input offsets can reuse the broadcast
  // iteration (output strides are 0 exactly on reduced axes).
  const Shape kshape = detail::reduced_shape(x.shape(), axes, true);
  TensorT<S> out = TensorT<S>::zeros(oshape);
  S* op = out.data();
  const S* xp = x.data();
  detail::for_each_bcast(x.shape(), x.shape(), kshape,
                         [&](std::int64_t, std::int64_t ix, std::int64_t io) {
                           op[io] += xp[ix];
                         });
  TensorT<S> xh = x;
  tape.push(out, [xh, out, kshape]() mutable {
    if (!xh.requires_grad()) return;
    S* gx = xh.grad();
    const S* go = out.grad();
    detail::for_each_bcast(xh.shape(), xh.shape(), kshape,
                           [&](std::int64_t, std::int64_t ix, std::int64_t io) {
                             gx[ix] += go[io];
                           });
  });
  return out;
}

template <class S>
TensorT<S> mean_axes(TapeT<S>& tape, const TensorT<S>& x, const std::vector<int>& axes,
                     bool keepdim) {
  std::int64_t count = 1;
  for (int ax : axes) count *= x.shape().at(static_cast<std::size_t>(ax));
  auto s = sum_axes(tape, x, axes, keepdim);
  return mul(tape, s, 1.0 / static_cast<double>(count));
}

// ---------------------------------------------------------------------------
// Softmax family (last axis)
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> softmax(TapeT<S>& tape, const TensorT<S>& x) {
  if (x.rank() < 1) throw dim_error("softmax: needs at least rank 1");
  const std::int64_t c = x.shape().back();
  const std::int64_t rows = x.numel() / c;
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  const S* xp = x.data();
  S* op = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const S* row = xp + r * c;
    S mx = row[0];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    S denom = S(0);
    for (std::int64_t j = 0; j < c; ++j) {
      const S e = std::exp(row[j] - mx);
      op[r * c + j] = e;
      denom += e;
    }
    for (std::int64_t j = 0; j < c; ++j) op[r * c + j] /= denom;
  }
  TensorT<S> xh = x;
  tape.push(out, [xh, out, rows, c]() mutable {
    if (!xh.requires_grad()) return;
    const S* yp = out.data();
    const S* gp = out.grad();
    S* gx = xh.grad();
    for (std::int64_t r = 0; r < rows; ++r) {
      S dotv = S(0);
      for (std::int64_t j = 0; j < c; ++j) dotv += gp[r * c + j] * yp[r * c + j];
      for (std::int64_t j = 0; j < c; ++j)
        gx[r * c + j] += yp[r * c + j] * (gp[r * c + j] - dotv);
    }
  });
  return out;
}

/// Mean over rows of -log softmax(logits)[label]. Logits are (N, C).
template <class S>
TensorT<S> softmax_cross_entropy(TapeT<S>& tape, const TensorT<S>& logits,
                                 const std::vector<int>& labels) {
  if (logits.rank() != 2) throw dim_error("cross_entropy: logits must be rank 2");
  const std::int64_t n = logits.dim(0);
  const std::int64_t c = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n)
    throw dim_error("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(n) + " rows");
  for (int l : labels) {
    if (l < 0 || l >= c) throw contract_error("cross_entropy: label out of range");
  }
  // Cache softmax probabilities for the backward pass.
  TensorT<S> probs = TensorT<S>::zeros(logits.shape());
  const S* xp = logits.data();
  S* pp = probs.data();
  S loss = S(0);
  for (std::int64_t r = 0; r < n; ++r) {
    const S* row = xp + r * c;
    S mx = row[0];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    S denom = S(0);
    for (std::int64_t j = 0; j < c; ++j) {
      const S e = std::exp(row[j] - mx);
      pp[r * c + j] = e;
      denom += e;
    }
    for (std::int64_t j = 0; j < c; ++j) pp[r * c + j] /= denom;
    loss += -(row[labels[static_cast<std::size_t>(r)]] - mx - std::log(denom));
  }
  TensorT<S> out = TensorT<S>::zeros(Shape{});
  out.data()[0] = loss / static_cast<S>(n);
  TensorT<S> lh = logits;
  tape.push(out, [lh, probs, out, labels, n, c]() mutable {
    if (!lh.requires_grad()) return;
    const S g = out.grad()[0] / static_cast<S>(n);
    const S* pp2 = probs.data();
    S* gx = lh.grad();
    for (std::int64_t r = 0; r < n; ++r) {
      const int lbl = labels[static_cast<std::size_t>(r)];
      for (std::int64_t j = 0; j < c; ++j) {
        const S onehot = (j == lbl) ? S(1) : S(0);
        gx[r * c + j] += g * (pp2[r * c + j] - onehot);
      }
    }
  });
  return out;
}

}  // namespace domainbank::ops
