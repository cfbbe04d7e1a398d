#pragma once

#include <cstdint>
#include <vector>

#include "domainbank/kernels.hpp"
#include "domainbank/tensor.hpp"

// 2-D convolution and transposed convolution over NCHW tensors, lowered onto
// the matmul kernels through im2col/col2im. Weight layouts:
//   conv2d:           (out_ch, in_ch, kh, kw)
//   conv_transpose2d: (in_ch, out_ch, kh, kw)
// Flattened row-major, a transposed-conv weight (I, O*kh*kw) is exactly the
// matrix whose transpose the forward pass needs, which makes conv and
// conv_transpose exact adjoints of one another when they share geometry.
// Backward recomputes im2col instead of caching it; the cols buffer for deep
// nets would otherwise dominate memory.

namespace domainbank {

inline std::int64_t conv_out_dim(std::int64_t in, std::int64_t k, std::int64_t stride,
                                 std::int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

inline std::int64_t conv_transpose_out_dim(std::int64_t in, std::int64_t k, std::int64_t stride,
                                           std::int64_t pad) {
  return (in - 1) * stride + k - 2 * pad;
}

namespace convdetail {

/// cols (C*kh*kw, Ho*Wo) <- patches of img (C, H, W); zero padding.
template <class S>
void im2col(const S* img, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t Ho,
            std::int64_t Wo, S* cols) {
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t i = 0; i < kh; ++i) {
      for (std::int64_t j = 0; j < kw; ++j) {
        S* crow = cols + ((c * kh + i) * kw + j) * (Ho * Wo);
        for (std::int64_t y = 0; y < Ho; ++y) {
          const std::int64_t sy = y * stride - pad + i;
          if (sy < 0 || sy >= H) {
            for (std::int64_t x = 0; x < Wo; ++x) crow[y * Wo + x] = S(0);
            continue;
          }
          const S* irow = img + (c * H + sy) * W;
          for (std::int64_t x = 0; x < Wo; ++x) {
            const std::int64_t sx = x * stride - pad + j;
            crow[y * Wo + x] = (sx >= 0 && sx < W) ? irow[sx] : S(0);
          }
        }
      }
    }
  }
}

/// img (C, H, W) += scattered cols (C*kh*kw, Ho*Wo); the adjoint of im2col.
template <class S>
void col2im(const S* cols, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t Ho,
            std::int64_t Wo, S* img) {
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t i = 0; i < kh; ++i) {
      for (std::int64_t j = 0; j < kw; ++j) {
        const S* crow = cols + ((c * kh + i) * kw + j) * (Ho * Wo);
        for (std::int64_t y = 0; y < Ho; ++y) {
          const std::int64_t sy = y * stride - pad + i;
          if (sy < 0 || sy >= H) continue;
          S* irow = img + (c * H + sy) * W;
          for (std::int64_t x = 0; x < Wo; ++x) {
            const std::int64_t sx = x * stride - pad + j;
            if (sx >= 0 && sx < W) irow[sx] += crow[y * Wo + x];
          }
        }
      }
    }
  }
}

}  // namespace convdetail

template <class S>
TensorT<S> conv2d(TapeT<S>& tape, const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b,
                  std::int64_t stride, std::int64_t pad) {
  if (x.rank() != 4 || w.rank() != 4)
    throw dim_error("conv2d: x and w must be rank 4, got " + shape_str(x.shape()) + " and " +
                    shape_str(w.shape()));
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != C)
    throw dim_error("conv2d: weight expects " + std::to_string(w.dim(1)) + " channels, input has " +
                    std::to_string(C));
  if (b.rank() != 1 || b.dim(0) != O) throw dim_error("conv2d: bias must be shape (out_ch)");
  if (stride < 1 || pad < 0) throw contract_error("conv2d: stride >= 1 and pad >= 0 required");
  const std::int64_t Ho = conv_out_dim(H, kh, stride, pad);
  const std::int64_t Wo = conv_out_dim(W, kw, stride, pad);
  if (Ho < 1 || Wo < 1)
    throw dim_error("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                    " does not fit input " + shape_str(x.shape()));

  TensorT<S> out = TensorT<S>::zeros({N, O, Ho, Wo});
  const std::int64_t ckk = C * kh * kw;
  const std::int64_t hw = Ho * Wo;
  std::vector<S> cols(static_cast<std::size_t>(ckk * hw));
  for (std::int64_t n = 0; n < N; ++n) {
    convdetail::im2col(x.data() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo,
                       cols.data());
    S* y = out.data() + n * O * hw;
    kern::matmul(w.data(), cols.data(), y, static_cast<std::size_t>(O),
                 static_cast<std::size_t>(ckk), static_cast<std::size_t>(hw));
    for (std::int64_t o = 0; o < O; ++o)
      kern::add_scalar(y + o * hw, b.data()[o], y + o * hw, static_cast<std::size_t>(hw));
  }

  TensorT<S> xh = x, wh = w, bh = b;
  tape.push(out, [xh, wh, bh, out, stride, pad, N, C, H, W, O, kh, kw, Ho, Wo]() mutable {
    const std::int64_t ckk2 = C * kh * kw;
    const std::int64_t hw2 = Ho * Wo;
    std::vector<S> cols2(static_cast<std::size_t>(ckk2 * hw2));
    std::vector<S> tmp;
    const bool wx = xh.requires_grad();
    const bool ww = wh.requires_grad();
    const bool wb = bh.requires_grad();
    if (!wx && !ww && !wb) return;
    for (std::int64_t n = 0; n < N; ++n) {
      const S* gy = out.grad() + n * O * hw2;
      if (ww) {
        convdetail::im2col(xh.data() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo,
                           cols2.data());
        tmp.resize(static_cast<std::size_t>(O * ckk2));
        kern::matmul_nt(gy, cols2.data(), tmp.data(), static_cast<std::size_t>(O),
                        static_cast<std::size_t>(hw2), static_cast<std::size_t>(ckk2));
        kern::axpy(S(1), tmp.data(), wh.grad(), tmp.size());
      }
      if (wx) {
        tmp.resize(static_cast<std::size_t>(ckk2 * hw2));
        kern::matmul_tn(wh.data(), gy, tmp.data(), static_cast<std::size_t>(O),
                        static_cast<std::size_t>(ckk2), static_cast<std::size_t>(hw2));
        convdetail::col2im(tmp.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                           xh.grad() + n * C * H * W);
      }
      if (wb) {
        for (std::int64_t o = 0; o < O; ++o)
          bh.grad()[o] += kern::sum(gy + o * hw2, static_cast<std::size_t>(hw2));
      }
    }
  });
  return out;
}

template <class S>
TensorT<S> conv_transpose2d(TapeT<S>& tape, const TensorT<S>& x, const TensorT<S>& w,
                            const TensorT<S>& b, std::int64_t stride, std::int64_t pad) {
  if (x.rank() != 4 || w.rank() != 4)
    throw dim_error("conv_transpose2d: x and w must be rank 4");
  const std::int64_t N = x.dim(0), I = x.dim(1), Hi = x.dim(2), Wi = x.dim(3);
  const std::int64_t O = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(0) != I)
    throw dim_error("conv_transpose2d: weight expects " + std::to_string(w.dim(0)) +
                    " input channels, input has " + std::to_string(I));
  if (b.rank() != 1 || b.dim(0) != O)
    throw dim_error("conv_transpose2d: bias must be shape (out_ch)");
  if (stride < 1 || pad < 0)
    throw contract_error("conv_transpose2d: stride >= 1 and pad >= 0 required");
  const std::int64_t Ho = conv_transpose_out_dim(Hi, kh, stride, pad);
  const std::int64_t Wo = conv_transpose_out_dim(Wi, kw, stride, pad);
  if (Ho < 1 || Wo < 1) throw dim_error("conv_transpose2d: output would be empty");

  TensorT<S> out = TensorT<S>::zeros({N, O, Ho, Wo});
  const std::int64_t okk = O * kh * kw;
  const std::int64_t hwi = Hi * Wi;
  std::vector<S> cols(static_cast<std::size_t>(okk * hwi));
  for (std::int64_t n = 0; n < N; ++n) {
    // cols = W^T(OKK,I) · x(I,HiWi); scatter back through the conv geometry.
    kern::matmul_tn(w.data(), x.data() + n * I * hwi, cols.data(), static_cast<std::size_t>(I),
                    static_cast<std::size_t>(okk), static_cast<std::size_t>(hwi));
    S* y = out.data() + n * O * Ho * Wo;
    convdetail::col2im(cols.data(), O, Ho, Wo, kh, kw, stride, pad, Hi, Wi, y);
    for (std::int64_t o = 0; o < O; ++o)
      kern::add_scalar(y + o * Ho * Wo, b.data()[o], y + o * Ho * Wo,
                       static_cast<std::size_t>(Ho * Wo));
  }

  TensorT<S> xh = x, wh = w, bh = b;
  tape.push(out, [xh, wh, bh, out, stride, pad, N, I, Hi, Wi, O, kh, kw, Ho, Wo]() mutable {
    const bool wx = xh.requires_grad();
    const bool ww = wh.requires_grad();
    const bool wb = bh.requires_grad();
    if (!wx && !ww && !wb) return;
    const std::int64_t okk2 = O * kh * kw;
    const std::int64_t hwi2 = Hi * Wi;
    std::vector<S> gcols(static_cast<std::size_t>(okk2 * hwi2));
    std::vector<S> tmp;
    for (std::int64_t n = 0; n < N; ++n) {
      const S* gy = out.grad() + n * O * Ho * Wo;
      if (wx || ww)
        convdetail::im2col(gy, O, Ho, Wo, kh, kw, stride, pad, Hi, Wi, gcols.data());
      if (wx) {
        tmp.resize(static_cast<std::size_t>(I * hwi2));
        kern::matmul(wh.data(), gcols.data(), tmp.data(), static_cast<std::size_t>(I),
                     static_cast<std::size_t>(okk2), static_cast<std::size_t>(hwi2));
        kern::axpy(S(1), tmp.data(), xh.grad() + n * I * hwi2, tmp.size());
      }
      if (ww) {
        tmp.resize(static_cast<std::size_t>(I * okk2));
        kern::matmul_nt(xh.data() + n * I * hwi2, gcols.data(), tmp.data(),
                        static_cast<std::size_t>(I), static_cast<std::size_t>(hwi2),
                        static_cast<std::size_t>(okk2));
        kern::axpy(S(1), tmp.data(), wh.grad(), tmp.size());
      }
      if (wb) {
        for (std::int64_t o = 0; o < O; ++o)
          bh.grad()[o] += kern::sum(gy + o * Ho * Wo, static_cast<std::size_t>(Ho * Wo));
      }
    }
  });
  return out;
}

}  // namespace domainbank
