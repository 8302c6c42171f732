#pragma once

// Data-parallel inner loops used by the engine, optimizers and hash comparison.
//
// Every kernel has a scalar reference and (on x86-64) an AVX2 variant. The
// variant is chosen once at runtime from CPUID; EDIV_SIMD=scalar|avx2 forces a
// choice. All variants produce bit-identical results: elementwise kernels do
// the same IEEE operations per lane, and reductions use one canonical order
// (four interleaved partial sums, folded as (s0+s2)+(s1+s3), then the tail
// added left to right). Training trajectories therefore do not depend on the
// host ISA.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace ediv::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  // out[i] = x[i] * y[i]; out may alias x or y
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
  void (*relu)(const double* x, double* out, std::size_t n);
  // out[i] = x[i] > 0 ? g[i] : 0
  void (*relu_grad)(const double* x, const double* g, double* out, std::size_t n);
  // v = mu * v + g; p = p - lr * v
  void (*sgd_momentum)(double* p, const double* g, double* v, std::size_t n, double lr,
                       double mu);
  // m = b1*m + (1-b1)*g; v = b2*v + (1-b2)*g*g;
  // p = p - (lr * m*c1) / (sqrt(v*c2) + eps) with c1, c2 the bias corrections
  void (*adam)(double* p, const double* g, double* m, double* v, std::size_t n,
               const double* coeffs /* lr, b1, 1-b1, b2, 1-b2, c1, c2, eps */);
  std::uint64_t (*xor_popcount)(const std::uint64_t* a, const std::uint64_t* b,
                                std::size_t n);
};

bool isa_available(Isa isa);
// Throws std::invalid_argument if the ISA is not available on this host.
const KernelTable& table(Isa isa);
const KernelTable& active();

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}
inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }
inline void mul(std::span<const double> x, std::span<const double> y, std::span<double> out) {
  active().mul(x.data(), y.data(), out.data(), x.size());
}
inline std::uint64_t xor_popcount(std::span<const std::uint64_t> a,
                                  std::span<const std::uint64_t> b) {
  return active().xor_popcount(a.data(), b.data(), a.size());
}

namespace detail {
extern const KernelTable scalar_table;
#if defined(__x86_64__) || defined(_M_X64)
extern const KernelTable avx2_table;
#endif
}  // namespace detail

}  // namespace ediv::simd
