#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

// Hot inner loops behind a runtime-dispatched table. Scalar reference
// implementations define the semantics; the AVX2/NEON variants must agree
// with them within floating-point reassociation tolerance (equivalence is
// tested). Everything here is single-threaded and deterministic for a fixed
// backend. Float has vector variants; double always takes the scalar path.

namespace domainbank::kern {

enum class Backend { scalar, avx2, neon };

const char* backend_name(Backend b);

/// Currently active backend. Resolved on first use: the DOMAINBANK_KERNELS
/// environment variable ("scalar", "avx2", "neon", "auto") wins, otherwise
/// the widest backend this CPU supports.
Backend active();

/// Force a backend. Returns false (and leaves the active backend unchanged)
/// if it is not available on this CPU/build.
bool set_backend(Backend b);

/// Backends usable on this machine, scalar first.
std::vector<Backend> available();

struct Table {
  void (*add)(const float*, const float*, float*, std::size_t);
  void (*sub)(const float*, const float*, float*, std::size_t);
  void (*mul)(const float*, const float*, float*, std::size_t);
  void (*div)(const float*, const float*, float*, std::size_t);
  void (*add_scalar)(const float*, float, float*, std::size_t);
  void (*mul_scalar)(const float*, float, float*, std::size_t);
  void (*axpy)(float, const float*, float*, std::size_t);  // y += a*x
  float (*dot)(const float*, const float*, std::size_t);
  float (*sum)(const float*, std::size_t);
  void (*leaky_relu)(const float*, float, float*, std::size_t);
  // gx += gy * (x > 0 ? 1 : slope)
  void (*leaky_relu_grad)(const float*, const float*, float, float*, std::size_t);
  // C(m,n) = A(m,k) * B(k,n), row-major, C overwritten
  void (*matmul)(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
  // C(m,n) = A(m,k) * B(n,k)^T
  void (*matmul_nt)(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
  // C(k,n) = A(m,k)^T * B(m,n)
  void (*matmul_tn)(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
  // p -= lr_t * mhat / (sqrt(vhat) + eps) with m,v updated in place;
  // lr_t carries the bias correction for the current step.
  void (*adam_update)(float*, float*, float*, const float*, std::size_t, float, float, float,
                      float);
};

const Table& table();

// Convenience wrappers (float dispatches, double is scalar).
void add(const float* a, const float* b, float* out, std::size_t n);
void sub(const float* a, const float* b, float* out, std::size_t n);
void mul(const float* a, const float* b, float* out, std::size_t n);
void div(const float* a, const float* b, float* out, std::size_t n);
void add_scalar(const float* a, float s, float* out, std::size_t n);
void mul_scalar(const float* a, float s, float* out, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
float dot(const float* a, const float* b, std::size_t n);
float sum(const float* a, std::size_t n);
void leaky_relu(const float* x, float slope, float* out, std::size_t n);
void leaky_relu_grad(const float* x, const float* gy, float slope, float* gx, std::size_t n);
void matmul(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
            std::size_t n);
void matmul_nt(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
               std::size_t n);
void matmul_tn(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
               std::size_t n);
void adam_update(float* p, float* m, float* v, const float* g, std::size_t n, float lr_t,
                 float beta1, float beta2, float eps);

void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void div(const double* a, const double* b, double* out, std::size_t n);
void add_scalar(const double* a, double s, double* out, std::size_t n);
void mul_scalar(const double* a, double s, double* out, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
void leaky_relu(const double* x, double slope, double* out, std::size_t n);
void leaky_relu_grad(const double* x, const double* gy, double slope, double* gx, std::size_t n);
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);
void adam_update(double* p, double* m, double* v, const double* g, std::size_t n, double lr_t,
                 double beta1, double beta2, double eps);

namespace detail {
const Table& scalar_table();
const Table* avx2_table();  // null when unavailable in this build
const Table* neon_table();  // null when unavailable in this build

// Scalar reference implementations, shared by the double overloads and the
// scalar float table.
template <class S>
void ref_add(const S* a, const S* b, S* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
template <class S>
void ref_sub(const S* a, const S* b, S* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
template <class S>
void ref_mul(const S* a, const S* b, S* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
template <class S>
void ref_div(const S* a, const S* b, S* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}
template <class S>
void ref_add_scalar(const S* a, S s, S* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + s;
}
template <class S>
void ref_mul_scalar(const S* a, S s, S* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}
template <class S>
void ref_axpy(S alpha, const S* x, S* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
template <class S>
S ref_dot(const S* a, const S* b, std::size_t n) {
  S acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}
template <class S>
S ref_sum(const S* a, std::size_t n) {
  S acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}
template <class S>
void ref_leaky_relu(const S* x, S slope, S* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > S(0) ? x[i] : slope * x[i];
}
template <class S>
void ref_leaky_relu_grad(const S* x, const S* gy, S slope, S* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] * (x[i] > S(0) ? S(1) : slope);
}
template <class S>
void ref_matmul(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m * n; ++i) c[i] = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const S av = a[i * k + p];
      const S* brow = b + p * n;
      S* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}
template <class S>
void ref_matmul_nt(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = ref_dot(a + i * k, b + j * k, k);
  }
}
template <class S>
void ref_matmul_tn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < k * n; ++i) c[i] = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const S av = a[i * k + p];
      const S* brow = b + i * n;
      S* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}
template <class S>
void ref_adam_update(S* p, S* m, S* v, const S* g, std::size_t n, S lr_t, S beta1, S beta2,
                     S eps) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (S(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (S(1) - beta2) * g[i] * g[i];
    p[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps);
  }
}
}  // namespace detail

}  // namespace domainbank::kern
