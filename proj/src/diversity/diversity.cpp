#include "ediv/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ediv::diversity {
namespace {

void require_pairs(const PredictionSet& p, const char* what) {
  if (p.models() < 2)
    throw std::invalid_argument(std::string(what) + ": need at least 2 models, got " +
                                std::to_string(p.models()));
}

void require_model(const PredictionSet& p, std::size_t m) {
  if (m >= p.models()) throw std::out_of_range("prediction set: model index out of range");
}

std::vector<double> floored(std::span<const double> row) {
  std::vector<double> out(row.begin(), row.end());
  double total = 0.0;
  for (double& v : out) {
    v = std::max(v, kProbabilityFloor);
    total += v;
  }
  for (double& v : out) v /= total;
  return out;
}

}  // namespace

PredictionSet::PredictionSet(std::size_t models, std::size_t samples, std::size_t classes,
                             std::vector<double> probs, std::optional<std::vector<int>> labels)
    : models_(models), samples_(samples), classes_(classes), probs_(std::move(probs)),
      labels_(std::move(labels)) {
  if (models == 0 || samples == 0 || classes == 0)
    throw std::invalid_argument("prediction set: models, samples and classes must be positive");
  if (probs_.size() != models * samples * classes)
    throw std::invalid_argument("prediction set: expected " + std::to_string(models * samples * classes) +
                                " values, got " + std::to_string(probs_.size()));
  for (std::size_t m = 0; m < models; ++m) {
    for (std::size_t n = 0; n < samples; ++n) {
      double total = 0.0;
      for (double v : row(m, n)) {
        if (!(v >= 0.0) || !std::isfinite(v))
          throw std::invalid_argument("prediction set: model " + std::to_string(m) + " sample " +
                                      std::to_string(n) + " has a negative or non-finite probability");
        total += v;
      }
      if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("prediction set: model " + std::to_string(m) + " sample " +
                                    std::to_string(n) + " sums to " + std::to_string(total));
    }
  }
  if (labels_) {
    if (labels_->size() != samples)
      throw std::invalid_argument("prediction set: label count does not match sample count");
    for (int l : *labels_)
      if (l < 0 || static_cast<std::size_t>(l) >= classes)
        throw std::invalid_argument("prediction set: label " + std::to_string(l) + " out of range");
  }
}

std::span<const double> PredictionSet::row(std::size_t model, std::size_t sample) const {
  return std::span<const double>(probs_).subspan((model * samples_ + sample) * classes_, classes_);
}

std::vector<int> PredictionSet::predicted(std::size_t model) const {
  require_model(*this, model);
  std::vector<int> out(samples_);
  for (std::size_t n = 0; n < samples_; ++n) {
    const auto r = row(model, n);
    out[n] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

double kl_divergence(const PredictionSet& p, std::size_t a, std::size_t b) {
  require_model(p, a);
  require_model(p, b);
  if (a == b) return 0.0;
  double total = 0.0;
  for (std::size_t n = 0; n < p.samples(); ++n) {
    const auto fa = floored(p.row(a, n));
    const auto fb = floored(p.row(b, n));
    double kl = 0.0;
    for (std::size_t c = 0; c < fa.size(); ++c) {
      if (!(fb[c] > 0.0)) throw std::domain_error("kl: zero probability in the denominator");
      kl += fa[c] * std::log(fa[c] / fb[c]);
    }
    total += kl;
  }
  return total / static_cast<double>(p.samples());
}

double kl_pairwise(const PredictionSet& p) {
  require_pairs(p, "kl_pairwise");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < p.models(); ++a)
    for (std::size_t b = 0; b < p.models(); ++b)
      if (a != b) {
        total += kl_divergence(p, a, b);
        ++pairs;
      }
  return total / static_cast<double>(pairs);
}

double disagreement(const PredictionSet& p, std::size_t a, std::size_t b) {
  const auto la = p.predicted(a), lb = p.predicted(b);
  std::size_t differ = 0;
  for (std::size_t n = 0; n < la.size(); ++n) differ += la[n] != lb[n];
  return static_cast<double>(differ) / static_cast<double>(la.size());
}

double pdr(const PredictionSet& p) {
  require_pairs(p, "pdr");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < p.models(); ++a)
    for (std::size_t b = a + 1; b < p.models(); ++b) {
      total += disagreement(p, a, b);
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

double accuracy(const PredictionSet& p, std::size_t model) {
  if (!p.labels()) throw std::invalid_argument("accuracy: prediction set has no labels");
  const auto pred = p.predicted(model);
  std::size_t hits = 0;
  for (std::size_t n = 0; n < pred.size(); ++n) hits += pred[n] == (*p.labels())[n];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

PredictionSet ensemble_mean(const PredictionSet& p) {
  const std::size_t row = p.samples() * p.classes();
  std::vector<double> mean(row, 0.0);
  for (std::size_t m = 0; m < p.models(); ++m)
    for (std::size_t i = 0; i < row; ++i) mean[i] += p.probs()[m * row + i];
  for (double& v : mean) v /= static_cast<double>(p.models());
  return PredictionSet(1, p.samples(), p.classes(), std::move(mean), p.labels());
}

double Decomposition::identity_rhs() const {
  const double m = static_cast<double>(models);
  const double bias2 = bias_bar * bias_bar;
  if (!covar_bar) return bias2 + var_bar;
  return bias2 + var_bar / m + (1.0 - 1.0 / m) * *covar_bar;
}

Decomposition bias_var_covar(std::span<const double> predictions, std::size_t models,
                             std::span<const double> targets) {
  if (models == 0 || targets.empty())
    throw std::invalid_argument("bias_var_covar: need at least one model and one sample");
  const std::size_t n = targets.size();
  if (predictions.size() != models * n)
    throw std::invalid_argument("bias_var_covar: predictions must be models x samples");

  // Residual centred per model: d[i][k] = e_i(x_k) - E[e_i].
  std::vector<double> mean_err(models, 0.0);
  std::vector<double> d(models * n);
  for (std::size_t i = 0; i < models; ++i) {
    for (std::size_t k = 0; k < n; ++k) mean_err[i] += predictions[i * n + k] - targets[k];
    mean_err[i] /= static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) d[i * n + k] = predictions[i * n + k] - targets[k] - mean_err[i];
  }

  Decomposition out;
  out.models = models;
  for (double b : mean_err) out.bias_bar += b;
  out.bias_bar /= static_cast<double>(models);

  for (std::size_t i = 0; i < models; ++i) {
    double v = 0.0;
    for (std::size_t k = 0; k < n; ++k) v += d[i * n + k] * d[i * n + k];
    out.var_bar += v / static_cast<double>(n);
  }
  out.var_bar /= static_cast<double>(models);

  if (models >= 2) {
    double c = 0.0;
    for (std::size_t i = 0; i < models; ++i)
      for (std::size_t j = 0; j < models; ++j) {
        if (i == j) continue;
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += d[i * n + k] * d[j * n + k];
        c += s / static_cast<double>(n);
      }
    out.covar_bar = c / static_cast<double>(models * (models - 1));
  }

  for (std::size_t k = 0; k < n; ++k) {
    double f = 0.0;
    for (std::size_t i = 0; i < models; ++i) f += predictions[i * n + k];
    const double e = f / static_cast<double>(models) - targets[k];
    out.mse += e * e;
  }
  out.mse /= static_cast<double>(n);
  return out;
}

}  // namespace ediv::diversity
