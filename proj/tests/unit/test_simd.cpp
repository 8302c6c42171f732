#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "doctest.h"
#include "ediv/simd/kernels.hpp"

using namespace ediv::simd;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d(0.0, 3.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Lengths around the vector width, plus offsets that break 32-byte alignment.
const std::size_t kLengths[] = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 63, 64, 65, 1023, 1024};

}  // namespace

TEST_CASE("scalar kernels compute the textbook results") {
  const auto& s = table(Isa::scalar);
  std::vector<double> x{1, 2, 3, 4, 5}, y{1, 1, 1, 1, 1};
  s.axpy(2.0, x.data(), y.data(), x.size());
  CHECK(y == std::vector<double>{3, 5, 7, 9, 11});
  CHECK(s.dot(x.data(), x.data(), 5) == 55.0);
  CHECK(s.sum(x.data(), 5) == 15.0);
  std::vector<double> r(5);
  std::vector<double> neg{-1, 0, 2, -3, 4};
  s.relu(neg.data(), r.data(), 5);
  CHECK(r == std::vector<double>{0, 0, 2, 0, 4});
  std::vector<std::uint64_t> a{0, ~0ull, 0b1011}, b{~0ull, ~0ull, 0b0001};
  CHECK(s.xor_popcount(a.data(), b.data(), 3) == 64 + 0 + 2);
}

TEST_CASE("sgd kernel: zero momentum moves each parameter by lr * g") {
  const auto& s = table(Isa::scalar);
  std::vector<double> p{1.0, -2.0}, g{0.5, 0.25}, v{0.0, 0.0};
  s.sgd_momentum(p.data(), g.data(), v.data(), 2, 0.1, 0.0);
  CHECK(p[0] == doctest::Approx(1.0 - 0.05).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(-2.0 - 0.025).epsilon(1e-15));
}

TEST_CASE("runtime dispatch picks an available ISA") {
  CHECK(isa_available(Isa::scalar));
  const auto& k = active();
  CHECK(isa_available(k.isa));
}

TEST_CASE("avx2 kernels are bit-identical to the scalar reference") {
  if (!isa_available(Isa::avx2)) {
    MESSAGE("AVX2 not available on this host; equivalence test skipped");
    return;
  }
  const auto& s = table(Isa::scalar);
  const auto& v = table(Isa::avx2);
  std::mt19937_64 rng(7);

  for (std::size_t n : kLengths) {
    for (std::size_t offset : {0, 1, 3}) {
      CAPTURE(n);
      CAPTURE(offset);
      auto xa = random_vec(rng, n + offset), ya = random_vec(rng, n + offset);
      const double* x = xa.data() + offset;
      const double* y = ya.data() + offset;

      CHECK(std::bit_cast<std::uint64_t>(s.dot(x, y, n)) ==
            std::bit_cast<std::uint64_t>(v.dot(x, y, n)));
      CHECK(std::bit_cast<std::uint64_t>(s.sum(x, n)) == std::bit_cast<std::uint64_t>(v.sum(x, n)));

      std::vector<double> y1(y, y + n), y2(y, y + n);
      s.axpy(-0.7, x, y1.data(), n);
      v.axpy(-0.7, x, y2.data(), n);
      CHECK(bit_equal(y1, y2));

      std::vector<double> o1(n), o2(n);
      s.mul(x, y, o1.data(), n);
      v.mul(x, y, o2.data(), n);
      CHECK(bit_equal(o1, o2));
      s.relu(x, o1.data(), n);
      v.relu(x, o2.data(), n);
      CHECK(bit_equal(o1, o2));
      s.relu_grad(x, y, o1.data(), n);
      v.relu_grad(x, y, o2.data(), n);
      CHECK(bit_equal(o1, o2));

      std::vector<double> p1(x, x + n), p2(x, x + n), vel1(y, y + n), vel2(y, y + n);
      s.sgd_momentum(p1.data(), y, vel1.data(), n, 0.05, 0.9);
      v.sgd_momentum(p2.data(), y, vel2.data(), n, 0.05, 0.9);
      CHECK(bit_equal(p1, p2));
      CHECK(bit_equal(vel1, vel2));

      const double coeffs[8] = {0.05, 0.9, 0.1, 0.999, 0.001, 1.0 / 0.1, 1.0 / 0.001, 1e-8};
      std::vector<double> q1(x, x + n), q2(x, x + n), m1(n, 0.1), m2(n, 0.1), s1(n, 0.2), s2(n, 0.2);
      s.adam(q1.data(), y, m1.data(), s1.data(), n, coeffs);
      v.adam(q2.data(), y, m2.data(), s2.data(), n, coeffs);
      CHECK(bit_equal(q1, q2));
      CHECK(bit_equal(m1, m2));
      CHECK(bit_equal(s1, s2));

      std::vector<std::uint64_t> ha(n + offset), hb(n + offset);
      for (auto& h : ha) h = rng();
      for (auto& h : hb) h = rng();
      CHECK(s.xor_popcount(ha.data() + offset, hb.data() + offset, n) ==
            v.xor_popcount(ha.data() + offset, hb.data() + offset, n));
    }
  }
}

TEST_CASE("relu variants agree on signed zeros and NaN") {
  if (!isa_available(Isa::avx2)) return;
  std::vector<double> x{-0.0, 0.0, std::nan(""), -1e-300, 1e-300, -5, 5, 0.0};
  std::vector<double> a(x.size()), b(x.size());
  table(Isa::scalar).relu(x.data(), a.data(), x.size());
  table(Isa::avx2).relu(x.data(), b.data(), x.size());
  CHECK(bit_equal(a, b));
}
