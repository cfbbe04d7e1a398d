#include "domainbank/kernels.hpp"

namespace domainbank::kern {
namespace detail {

const Table& scalar_table() {
  static const Table t = {
      &ref_add<float>,
      &ref_sub<float>,
      &ref_mul<float>,
      &ref_div<float>,
      &ref_add_scalar<float>,
      &ref_mul_scalar<float>,
      &ref_axpy<float>,
      &ref_dot<float>,
      &ref_sum<float>,
      &ref_leaky_relu<float>,
      &ref_leaky_relu_grad<float>,
      &ref_matmul<float>,
      &ref_matmul_nt<float>,
      &ref_matmul_tn<float>,
      &ref_adam_update<float>,
  };
  return t;
}

}  // namespace detail

void add(const double* a, const double* b, double* out, std::size_t n) {
  detail::ref_add(a, b, out, n);
}
void sub(const double* a, const double* b, double* out, std::size_t n) {
  detail::ref_sub(a, b, out, n);
}
void mul(const double* a, const double* b, double* out, std::size_t n) {
  detail::ref_mul(a, b, out, n);
}
void div(const double* a, const double* b, double* out, std::size_t n) {
  detail::ref_div(a, b, out, n);
}
void add_scalar(const double* a, double s, double* out, std::size_t n) {
  detail::ref_add_scalar(a, s, out, n);
}
void mul_scalar(const double* a, double s, double* out, std::size_t n) {
  detail::ref_mul_scalar(a, s, out, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  detail::ref_axpy(alpha, x, y, n);
}
double dot(const double* a, const double* b, std::size_t n) { return detail::ref_dot(a, b, n); }
double sum(const double* a, std::size_t n) { return detail::ref_sum(a, n); }
void leaky_relu(const double* x, double slope, double* out, std::size_t n) {
  detail::ref_leaky_relu(x, slope, out, n);
}
void leaky_relu_grad(const double* x, const double* gy, double slope, double* gx,
                     std::size_t n) {
  detail::ref_leaky_relu_grad(x, gy, slope, gx, n);
}
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
  detail::ref_matmul(a, b, c, m, k, n);
}
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  detail::ref_matmul_nt(a, b, c, m, k, n);
}
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  detail::ref_matmul_tn(a, b, c, m, k, n);
}
void adam_update(double* p, double* m, double* v, const double* g, std::size_t n, double lr_t,
                 double beta1, double beta2, double eps) {
  detail::ref_adam_update(p, m, v, g, n, lr_t, beta1, beta2, eps);
}

}  // namespace domainbank::kern
