#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ediv::diversity {

inline constexpr double kProbabilityFloor = 1e-12;

/// Output distributions of M models over N samples and C classes, stored
/// model-major: probs[(m * N + n) * C + c]. Every row is nonnegative and sums
/// to 1 within 1e-9; the constructor enforces this.
class PredictionSet {
 public:
  PredictionSet(std::size_t models, std::size_t samples, std::size_t classes,
                std::vector<double> probs, std::optional<std::vector<int>> labels = std::nullopt);

  std::size_t models() const { return models_; }
  std::size_t samples() const { return samples_; }
  std::size_t classes() const { return classes_; }
  std::span<const double> row(std::size_t model, std::size_t sample) const;
  const std::vector<double>& probs() const { return probs_; }
  const std::optional<std::vector<int>>& labels() const { return labels_; }

  /// Argmax per sample for one model; ties go to the lowest class index.
  std::vector<int> predicted(std::size_t model) const;

 private:
  std::size_t models_, samples_, classes_;
  std::vector<double> probs_;
  std::optional<std::vector<int>> labels_;
};

/// Mean KL(f_a || f_b) in nats over samples, after flooring both rows at
/// kProbabilityFloor and renormalizing.
double kl_divergence(const PredictionSet& p, std::size_t a, std::size_t b);

/// Mean of kl_divergence over all ordered pairs a != b. Requires M >= 2.
double kl_pairwise(const PredictionSet& p);

/// Fraction of samples on which the argmax labels of models a and b differ.
double disagreement(const PredictionSet& p, std::size_t a, std::size_t b);

/// Mean of disagreement over all unordered pairs. Requires M >= 2.
double pdr(const PredictionSet& p);

/// Fraction of samples whose argmax matches the label. Requires labels.
double accuracy(const PredictionSet& p, std::size_t model);

/// Equal-weight average of all model distributions, a 1 x N x C set.
PredictionSet ensemble_mean(const PredictionSet& p);

/// Ensemble error terms for scalar regressors. Expectations are empirical
/// means over samples of the residuals f_i(x_n) - y_n, so that
///   mse == bias_bar^2 + var_bar / M + (1 - 1/M) * covar_bar
/// holds up to rounding. covar_bar is absent when M == 1, where the identity
/// reduces to mse == bias_bar^2 + var_bar.
struct Decomposition {
  std::size_t models = 0;
  double bias_bar = 0.0;
  double var_bar = 0.0;
  std::optional<double> covar_bar;
  double mse = 0.0;

  double identity_rhs() const;
};

/// predictions is M x N row-major; targets has length N.
Decomposition bias_var_covar(std::span<const double> predictions, std::size_t models,
                             std::span<const double> targets);

}  // namespace ediv::diversity
