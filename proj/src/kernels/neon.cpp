#include "domainbank/kernels.hpp"

// NEON variants for aarch64 builds. Same contract as avx2.cpp: equivalence
// with the scalar reference up to reassociation, selected at runtime.

#if defined(__ARM_NEON) && defined(__aarch64__)

#include <arm_neon.h>

namespace domainbank::kern::detail {
namespace {

void v_add(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void v_sub(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void v_mul(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void v_div(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vdivq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] / b[i];
}

void v_add_scalar(const float* a, float s, float* out, std::size_t n) {
  const float32x4_t vs = vdupq_n_f32(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vaddq_f32(vld1q_f32(a + i), vs));
  for (; i < n; ++i) out[i] = a[i] + s;
}

void v_mul_scalar(const float* a, float s, float* out, std::size_t n) {
  const float32x4_t vs = vdupq_n_f32(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(vld1q_f32(a + i), vs));
  for (; i < n; ++i) out[i] = a[i] * s;
}

void v_axpy(float alpha, const float* x, float* y, std::size_t n) {
  const float32x4_t va = vdupq_n_f32(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), va, vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

float v_dot(const float* a, const float* b, std::size_t n) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = vfmaq_f32(acc, vld1q_f32(a + i), vld1q_f32(b + i));
  float r = vaddvq_f32(acc);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

float v_sum(const float* a, std::size_t n) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = vaddq_f32(acc, vld1q_f32(a + i));
  float r = vaddvq_f32(acc);
  for (; i < n; ++i) r += a[i];
  return r;
}

void v_leaky_relu(const float* x, float slope, float* out, std::size_t n) {
  const float32x4_t vs = vdupq_n_f32(slope);
  const float32x4_t zero = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t vx = vld1q_f32(x + i);
    const uint32x4_t mask = vcgtq_f32(vx, zero);
    vst1q_f32(out + i, vbslq_f32(mask, vx, vmulq_f32(vx, vs)));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void v_leaky_relu_grad(const float* x, const float* gy, float slope, float* gx, std::size_t n) {
  const float32x4_t vs = vdupq_n_f32(slope);
  const float32x4_t one = vdupq_n_f32(1.0f);
  const float32x4_t zero = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t vx = vld1q_f32(x + i);
    const float32x4_t factor = vbslq_f32(vcgtq_f32(vx, zero), one, vs);
    vst1q_f32(gx + i, vfmaq_f32(vld1q_f32(gx + i), vld1q_f32(gy + i), factor));
  }
  for (; i < n; ++i) gx[i] += gy[i] * (x[i] > 0.0f ? 1.0f : slope);
}

void v_matmul(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0f;
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = a[i * k + p];
      const float32x4_t va = vdupq_n_f32(av);
      const float* brow = b + p * n;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4)
        vst1q_f32(crow + j, vfmaq_f32(vld1q_f32(crow + j), va, vld1q_f32(brow + j)));
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void v_matmul_nt(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = v_dot(a + i * k, b + j * k, k);
  }
}

void v_matmul_tn(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < k * n; ++i) c[i] = 0.0f;
  for (std::size_t i = 0; i < m; ++i) {
    const float* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = a[i * k + p];
      const float32x4_t va = vdupq_n_f32(av);
      float* crow = c + p * n;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4)
        vst1q_f32(crow + j, vfmaq_f32(vld1q_f32(crow + j), va, vld1q_f32(brow + j)));
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void v_adam_update(float* p, float* m, float* v, const float* g, std::size_t n, float lr_t,
                   float beta1, float beta2, float eps) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    p[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps);
  }
}

}  // namespace

const Table* neon_table() {
  static const Table t = {
      &v_add,       &v_sub,       &v_mul,         &v_div,
      &v_add_scalar, &v_mul_scalar, &v_axpy,       &v_dot,
      &v_sum,       &v_leaky_relu, &v_leaky_relu_grad, &v_matmul,
      &v_matmul_nt, &v_matmul_tn,  &v_adam_update,
  };
  return &t;
}

}  // namespace domainbank::kern::detail

#else

namespace domainbank::kern::detail {
const Table* neon_table() { return nullptr; }
}  // namespace domainbank::kern::detail

#endif
