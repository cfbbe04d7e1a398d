#include "domainbank/kernels.hpp"

// Compiled with -mavx2 -mfma when the compiler supports it; runtime dispatch
// keeps this table off CPUs without the features. The k-loop ordering of the
// matmuls matches the scalar reference so results differ only by FMA
// contraction and the split accumulators in the reductions.

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace domainbank::kern::detail {
namespace {

void v_add(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void v_sub(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void v_mul(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void v_div(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_div_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] / b[i];
}

void v_add_scalar(const float* a, float s, float* out, std::size_t n) {
  const __m256 vs = _mm256_set1_ps(s);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), vs));
  for (; i < n; ++i) out[i] = a[i] + s;
}

void v_mul_scalar(const float* a, float s, float* out, std::size_t n) {
  const __m256 vs = _mm256_set1_ps(s);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), vs));
  for (; i < n; ++i) out[i] = a[i] * s;
}

void v_axpy(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

float v_dot(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

float v_sum(const float* a, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_add_ps(acc0, _mm256_loadu_ps(a + i));
    acc1 = _mm256_add_ps(acc1, _mm256_loadu_ps(a + i + 8));
  }
  for (; i + 8 <= n; i += 8) acc0 = _mm256_add_ps(acc0, _mm256_loadu_ps(a + i));
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i];
  return acc;
}

void v_leaky_relu(const float* x, float slope, float* out, std::size_t n) {
  const __m256 vs = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vx = _mm256_loadu_ps(x + i);
    const __m256 mask = _mm256_cmp_ps(vx, zero, _CMP_GT_OQ);
    _mm256_storeu_ps(out + i, _mm256_blendv_ps(_mm256_mul_ps(vx, vs), vx, mask));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void v_leaky_relu_grad(const float* x, const float* gy, float slope, float* gx, std::size_t n) {
  const __m256 vs = _mm256_set1_ps(slope);
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vx = _mm256_loadu_ps(x + i);
    const __m256 mask = _mm256_cmp_ps(vx, zero, _CMP_GT_OQ);
    const __m256 factor = _mm256_blendv_ps(vs, one, mask);
    _mm256_storeu_ps(gx + i, _mm256_fmadd_ps(_mm256_loadu_ps(gy + i), factor,
                                             _mm256_loadu_ps(gx + i)));
  }
  for (; i < n; ++i) gx[i] += gy[i] * (x[i] > 0.0f ? 1.0f : slope);
}

void v_matmul(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0f;
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const __m256 va = _mm256_set1_ps(a[i * k + p]);
      const float* brow = b + p * n;
      std::size_t j = 0;
      for (; j + 8 <= n; j += 8)
        _mm256_storeu_ps(crow + j,
                         _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), _mm256_loadu_ps(crow + j)));
      const float av = a[i * k + p];
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
      const __m256 va = _mm256_set1_ps(a[i * k + p]);
      float* crow = c + p * n;
      std::size_t j = 0;
      for (; j + 8 <= n; j += 8)
        _mm256_storeu_ps(crow + j,
                         _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), _mm256_loadu_ps(crow + j)));
      const float av = a[i * k + p];
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void v_adam_update(float* p, float* m, float* v, const float* g, std::size_t n, float lr_t,
                   float beta1, float beta2, float eps) {
  const __m256 vb1 = _mm256_set1_ps(beta1);
  const __m256 vb2 = _mm256_set1_ps(beta2);
  const __m256 vomb1 = _mm256_set1_ps(1.0f - beta1);
  const __m256 vomb2 = _mm256_set1_ps(1.0f - beta2);
  const __m256 vlr = _mm256_set1_ps(lr_t);
  const __m256 veps = _mm256_set1_ps(eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vg = _mm256_loadu_ps(g + i);
    __m256 vm = _mm256_loadu_ps(m + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    vm = _mm256_fmadd_ps(vb1, vm, _mm256_mul_ps(vomb1, vg));
    vv = _mm256_fmadd_ps(vb2, vv, _mm256_mul_ps(vomb2, _mm256_mul_ps(vg, vg)));
    _mm256_storeu_ps(m + i, vm);
    _mm256_storeu_ps(v + i, vv);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vv), veps);
    const __m256 stepv = _mm256_div_ps(_mm256_mul_ps(vlr, vm), denom);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), stepv));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    p[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps);
  }
}

}  // namespace

const Table* avx2_table() {
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
const Table* avx2_table() { return nullptr; }
}  // namespace domainbank::kern::detail

#endif
