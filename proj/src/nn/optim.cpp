#include "ediv/nn/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ediv/simd/kernels.hpp"

namespace ediv {

SgdMomentum::SgdMomentum(const Network& net) {
  for (const auto& p : net.params()) velocity_.emplace_back(p.value.size(), 0.0);
}

void SgdMomentum::step(Network& net, const std::vector<Tensor>& grads, double lr,
                       double momentum) {
  if (!(lr > 0.0)) throw std::invalid_argument("sgd: learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("sgd: momentum must lie in [0, 1)");
  auto& params = net.params();
  if (grads.size() != params.size() || velocity_.size() != params.size())
    throw std::invalid_argument("sgd: gradient list does not match the network parameters");

  const auto& kt = simd::active();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (grads[i].size() != p.value.size())
      throw std::invalid_argument("sgd: gradient for '" + p.name + "' has the wrong size");
    std::vector<double>& vel = velocity_[i];
    kt.sgd_momentum(p.value.data().data(), grads[i].data().data(), vel.data(), vel.size(), lr,
                    momentum);
    if (p.mask) {
      kt.mul(p.value.data().data(), p.mask->data().data(), p.value.data().data(), vel.size());
      kt.mul(vel.data(), p.mask->data().data(), vel.data(), vel.size());
    }
    if (!p.value.all_finite())
      throw std::overflow_error("sgd: parameter '" + p.name + "' became non-finite");
  }
}

Adam::Adam(std::size_t size, double beta1, double beta2, double eps)
    : m_(size, 0.0), v_(size, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::invalid_argument("adam: parameter/gradient size does not match optimizer state");
  if (!(lr >= 0.0)) throw std::invalid_argument("adam: learning rate must be non-negative");
  ++t_;
  const double c1 = 1.0 / (1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const double c2 = 1.0 / (1.0 - std::pow(beta2_, static_cast<double>(t_)));
  const double coeffs[8] = {lr, beta1_, 1.0 - beta1_, beta2_, 1.0 - beta2_, c1, c2, eps_};
  simd::active().adam(params.data(), grads.data(), m_.data(), v_.data(), params.size(), coeffs);
  for (double p : params)
    if (!std::isfinite(p)) throw std::overflow_error("adam: parameter became non-finite");
}

}  // namespace ediv
