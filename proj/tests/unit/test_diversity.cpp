#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "ediv/diversity.hpp"

using namespace ediv::diversity;

namespace {

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t rows, std::size_t classes) {
  std::gamma_distribution<double> g(0.7, 1.0);
  std::vector<double> out(rows * classes);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += out[r * classes + c] = g(rng) + 1e-300;
    for (std::size_t c = 0; c < classes; ++c) out[r * classes + c] /= s;
  }
  return out;
}

}  // namespace

TEST_CASE("prediction set validates rows and labels") {
  CHECK_THROWS_AS(PredictionSet(1, 1, 2, {0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(PredictionSet(1, 1, 2, {1.5, -0.5}), std::invalid_argument);
  CHECK_THROWS_AS(PredictionSet(1, 1, 2, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(PredictionSet(1, 1, 2, {1.0, 0.0}, std::vector<int>{2}), std::invalid_argument);
  CHECK_NOTHROW(PredictionSet(1, 1, 2, {1.0, 0.0}, std::vector<int>{0}));
}

TEST_CASE("kl of the two-class example") {
  const PredictionSet p(2, 1, 2, {0.5, 0.5, 0.9, 0.1});
  // Hand-evaluated two-term sums in both directions.
  CHECK(kl_divergence(p, 0, 1) == doctest::Approx(0.5108256237659907).epsilon(1e-12));
  CHECK(kl_divergence(p, 1, 0) == doctest::Approx(0.3680642071684971).epsilon(1e-12));
  CHECK(kl_pairwise(p) == doctest::Approx((0.5108256237659907 + 0.3680642071684971) / 2).epsilon(1e-12));
}

TEST_CASE("identical models have zero kl and zero disagreement") {
  std::mt19937_64 rng(3);
  auto one = random_simplex(rng, 20, 5);
  std::vector<double> both(one);
  both.insert(both.end(), one.begin(), one.end());
  const PredictionSet p(2, 20, 5, both);
  CHECK(kl_pairwise(p) == 0.0);
  CHECK(pdr(p) == 0.0);
}

TEST_CASE("kl is nonnegative on random pairs") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const PredictionSet p(2, 1, 4, random_simplex(rng, 2, 4));
    CHECK(kl_divergence(p, 0, 1) >= 0.0);
  }
}

TEST_CASE("kl survives exact zeros through flooring") {
  const PredictionSet p(2, 1, 3, {1.0, 0.0, 0.0, 0.0, 1.0, 0.0});
  const double v = kl_pairwise(p);
  CHECK(std::isfinite(v));
  CHECK(v > 20.0);
}

TEST_CASE("pdr counts argmax disagreements") {
  // 4 samples, models differ only on the last.
  const PredictionSet p(2, 4, 2,
                        {0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.7, 0.3,
                         0.8, 0.2, 0.1, 0.9, 0.55, 0.45, 0.3, 0.7});
  CHECK(pdr(p) == 0.25);
  const PredictionSet all(2, 2, 2, {1, 0, 0, 1, 0, 1, 1, 0});
  CHECK(pdr(all) == 1.0);
}

TEST_CASE("argmax ties resolve to the lowest class") {
  const PredictionSet p(1, 2, 3, {0.4, 0.4, 0.2, 0.25, 0.375, 0.375});
  CHECK(p.predicted(0) == std::vector<int>{0, 1});
}

TEST_CASE("pairwise metrics are invariant to model order") {
  std::mt19937_64 rng(5);
  const std::size_t M = 4, N = 30, C = 6;
  auto probs = random_simplex(rng, M * N, C);
  const PredictionSet p(M, N, C, probs);
  std::vector<double> rev;
  for (std::size_t m = M; m-- > 0;) rev.insert(rev.end(), probs.begin() + m * N * C, probs.begin() + (m + 1) * N * C);
  const PredictionSet q(M, N, C, rev);
  CHECK(pdr(p) == doctest::Approx(pdr(q)).epsilon(1e-15));
  CHECK(kl_pairwise(p) == doctest::Approx(kl_pairwise(q)).epsilon(1e-13));
  const double d = pdr(p);
  CHECK(d >= 0.0);
  CHECK(d <= 1.0);
}

TEST_CASE("pairwise metrics need two models") {
  const PredictionSet p(1, 1, 2, {0.5, 0.5});
  CHECK_THROWS_AS(pdr(p), std::invalid_argument);
  CHECK_THROWS_AS(kl_pairwise(p), std::invalid_argument);
}

TEST_CASE("ensemble mean averages distributions") {
  const PredictionSet p(2, 1, 2, {0.8, 0.2, 0.4, 0.6}, std::vector<int>{0});
  const auto e = ensemble_mean(p);
  CHECK(e.models() == 1);
  CHECK(e.row(0, 0)[0] == doctest::Approx(0.6));
  CHECK(e.row(0, 0)[1] == doctest::Approx(0.4));
  CHECK(accuracy(e, 0) == 1.0);
}

TEST_CASE("perfect regressors decompose to zero") {
  const std::vector<double> y{1.0, -2.0, 3.5};
  std::vector<double> f;
  for (int m = 0; m < 3; ++m) f.insert(f.end(), y.begin(), y.end());
  const auto d = bias_var_covar(f, 3, y);
  CHECK(d.bias_bar == 0.0);
  CHECK(d.var_bar == 0.0);
  CHECK(*d.covar_bar == 0.0);
  CHECK(d.mse == 0.0);
}

TEST_CASE("single model: mse equals bias squared plus variance") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> f(50), y(50);
  for (auto& v : f) v = nd(rng);
  for (auto& v : y) v = nd(rng);
  const auto d = bias_var_covar(f, 1, y);
  CHECK_FALSE(d.covar_bar.has_value());
  double mse = 0.0;
  for (std::size_t k = 0; k < 50; ++k) mse += (f[k] - y[k]) * (f[k] - y[k]);
  mse /= 50;
  CHECK(std::abs(d.mse - mse) < 1e-12);
  CHECK(std::abs(d.mse - d.identity_rhs()) < 1e-10);
}

TEST_CASE("three-term identity against a brute-force oracle") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t M = 5, N = 100;
    std::vector<double> f(M * N), y(N);
    for (auto& v : y) v = 2.0 * nd(rng);
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t k = 0; k < N; ++k) f[i * N + k] = y[k] + 0.3 * i + nd(rng);

    // Oracle: raw moments, E[e_i e_j] - E[e_i] E[e_j].
    std::vector<double> Ee(M, 0.0), Eee(M * M, 0.0);
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t k = 0; k < N; ++k) Ee[i] += (f[i * N + k] - y[k]) / N;
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < M; ++j)
        for (std::size_t k = 0; k < N; ++k) Eee[i * M + j] += (f[i * N + k] - y[k]) * (f[j * N + k] - y[k]) / N;
    double bias = 0, var = 0, cov = 0;
    for (std::size_t i = 0; i < M; ++i) {
      bias += Ee[i] / M;
      var += (Eee[i * M + i] - Ee[i] * Ee[i]) / M;
      for (std::size_t j = 0; j < M; ++j)
        if (j != i) cov += (Eee[i * M + j] - Ee[i] * Ee[j]) / (M * (M - 1));
    }
    double mse = 0;
    for (std::size_t k = 0; k < N; ++k) {
      double fb = 0;
      for (std::size_t i = 0; i < M; ++i) fb += f[i * N + k] / M;
      mse += (fb - y[k]) * (fb - y[k]) / N;
    }

    const auto d = bias_var_covar(f, M, y);
    CHECK(std::abs(d.bias_bar - bias) < 1e-10);
    CHECK(std::abs(d.var_bar - var) < 1e-9);
    CHECK(std::abs(*d.covar_bar - cov) < 1e-9);
    CHECK(std::abs(d.mse - mse) < 1e-10);
    CHECK(std::abs(d.mse - d.identity_rhs()) < 1e-10);
    const double rhs = bias * bias + var / M + (1.0 - 1.0 / M) * cov;
    CHECK(std::abs(mse - rhs) < 1e-9);
  }
}

TEST_CASE("bias_var_covar rejects bad shapes") {
  const std::vector<double> y{1.0, 2.0};
  CHECK_THROWS_AS(bias_var_covar(std::vector<double>{1.0, 2.0, 3.0}, 2, y), std::invalid_argument);
  CHECK_THROWS_AS(bias_var_covar(std::vector<double>{}, 0, y), std::invalid_argument);
}
