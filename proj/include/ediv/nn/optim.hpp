#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ediv/nn/network.hpp"

namespace ediv {

/// SGD with heavy-ball momentum over a Network's parameters. Masked entries
/// of both the parameter and its velocity are zeroed after every step, so a
/// pruned weight can never come back.
class SgdMomentum {
 public:
  explicit SgdMomentum(const Network& net);

  // lr > 0, momentum in [0, 1). Throws std::overflow_error if any parameter
  // becomes non-finite.
  void step(Network& net, const std::vector<Tensor>& grads, double lr, double momentum);

 private:
  std::vector<std::vector<double>> velocity_;
};

/// Adam over a flat parameter vector.
class Adam {
 public:
  explicit Adam(std::size_t size, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(std::span<double> params, std::span<const double> grads, double lr);
  std::size_t steps() const { return t_; }

 private:
  std::vector<double> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

}  // namespace ediv
