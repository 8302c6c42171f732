#include "ediv/simd/kernels.hpp"

#include <bit>
#include <cmath>

namespace ediv::simd {
namespace {

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s[0] += x[i] * y[i];
    s[1] += x[i + 1] * y[i + 1];
    s[2] += x[i + 2] * y[i + 2];
    s[3] += x[i + 3] * y[i + 3];
  }
  double r = (s[0] + s[2]) + (s[1] + s[3]);
  for (; i < n; ++i) r += x[i] * y[i];
  return r;
}

double sum_scalar(const double* x, std::size_t n) {
  double s[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s[0] += x[i];
    s[1] += x[i + 1];
    s[2] += x[i + 2];
    s[3] += x[i + 3];
  }
  double r = (s[0] + s[2]) + (s[1] + s[3]);
  for (; i < n; ++i) r += x[i];
  return r;
}

void mul_scalar(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void relu_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_scalar(const double* x, const double* g, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

void sgd_momentum_scalar(double* p, const double* g, double* v, std::size_t n, double lr,
                         double mu) {
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = mu * v[i] + g[i];
    p[i] = p[i] - lr * v[i];
  }
}

void adam_scalar(double* p, const double* g, double* m, double* v, std::size_t n,
                 const double* c) {
  const double lr = c[0], b1 = c[1], omb1 = c[2], b2 = c[3], omb2 = c[4];
  const double c1 = c[5], c2 = c[6], eps = c[7];
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + omb1 * g[i];
    v[i] = b2 * v[i] + omb2 * (g[i] * g[i]);
    const double mhat = m[i] * c1;
    const double vhat = v[i] * c2;
    p[i] = p[i] - (lr * mhat) / (std::sqrt(vhat) + eps);
  }
}

std::uint64_t xor_popcount_scalar(const std::uint64_t* a, const std::uint64_t* b,
                                  std::size_t n) {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < n; ++i) total += std::popcount(a[i] ^ b[i]);
  return total;
}

}  // namespace

namespace detail {
const KernelTable scalar_table{
    Isa::scalar,       axpy_scalar,         dot_scalar,  sum_scalar,
    mul_scalar,        relu_scalar,         relu_grad_scalar,
    sgd_momentum_scalar, adam_scalar,       xor_popcount_scalar,
};
}  // namespace detail

}  // namespace ediv::simd
