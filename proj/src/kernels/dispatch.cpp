#include <cstdlib>
#include <cstring>

#include "domainbank/common.hpp"
#include "domainbank/kernels.hpp"

namespace domainbank::kern {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend pick_default() {
  if (detail::avx2_table() && cpu_has_avx2()) return Backend::avx2;
  if (detail::neon_table()) return Backend::neon;
  return Backend::scalar;
}

bool backend_usable(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
      return detail::avx2_table() != nullptr && cpu_has_avx2();
    case Backend::neon:
      return detail::neon_table() != nullptr;
  }
  return false;
}

Backend resolve_initial() {
  const char* env = std::getenv("DOMAINBANK_KERNELS");
  if (env && *env && std::strcmp(env, "auto") != 0) {
    if (std::strcmp(env, "scalar") == 0 && backend_usable(Backend::scalar))
      return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0 && backend_usable(Backend::avx2)) return Backend::avx2;
    if (std::strcmp(env, "neon") == 0 && backend_usable(Backend::neon)) return Backend::neon;
    // Unknown or unavailable request falls through to auto detection.
  }
  return pick_default();
}

Backend& active_slot() {
  static Backend b = resolve_initial();
  return b;
}

}  // namespace

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
    case Backend::neon:
      return "neon";
  }
  return "?";
}

Backend active() { return active_slot(); }

bool set_backend(Backend b) {
  if (!backend_usable(b)) return false;
  active_slot() = b;
  return true;
}

std::vector<Backend> available() {
  std::vector<Backend> out{Backend::scalar};
  if (backend_usable(Backend::avx2)) out.push_back(Backend::avx2);
  if (backend_usable(Backend::neon)) out.push_back(Backend::neon);
  return out;
}

const Table& table() {
  switch (active_slot()) {
    case Backend::avx2:
      return *detail::avx2_table();
    case Backend::neon:
      return *detail::neon_table();
    case Backend::scalar:
    default:
      return detail::scalar_table();
  }
}

void add(const float* a, const float* b, float* out, std::size_t n) { table().add(a, b, out, n); }
void sub(const float* a, const float* b, float* out, std::size_t n) { table().sub(a, b, out, n); }
void mul(const float* a, const float* b, float* out, std::size_t n) { table().mul(a, b, out, n); }
void div(const float* a, const float* b, float* out, std::size_t n) { table().div(a, b, out, n); }
void add_scalar(const float* a, float s, float* out, std::size_t n) {
  table().add_scalar(a, s, out, n);
}
void mul_scalar(const float* a, float s, float* out, std::size_t n) {
  table().mul_scalar(a, s, out, n);
}
void axpy(float alpha, const float* x, float* y, std::size_t n) { table().axpy(alpha, x, y, n); }
float dot(const float* a, const float* b, std::size_t n) { return table().dot(a, b, n); }
float sum(const float* a, std::size_t n) { return table().sum(a, n); }
void leaky_relu(const float* x, float slope, float* out, std::size_t n) {
  table().leaky_relu(x, slope, out, n);
}
void leaky_relu_grad(const float* x, const float* gy, float slope, float* gx, std::size_t n) {
  table().leaky_relu_grad(x, gy, slope, gx, n);
}
void matmul(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
            std::size_t n) {
  table().matmul(a, b, c, m, k, n);
}
void matmul_nt(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
               std::size_t n) {
  table().matmul_nt(a, b, c, m, k, n);
}
void matmul_tn(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
               std::size_t n) {
  table().matmul_tn(a, b, c, m, k, n);
}
void adam_update(float* p, float* m, float* v, const float* g, std::size_t n, float lr_t,
                 float beta1, float beta2, float eps) {
  table().adam_update(p, m, v, g, n, lr_t, beta1, beta2, eps);
}

}  // namespace domainbank::kern
