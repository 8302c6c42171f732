#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "ediv/lens.hpp"

namespace ediv::lens {
namespace {

constexpr std::size_t kChunk = 32;

void check_single(const Network& net, const Tensor& x) {
  const Shape& in = net.input_shape();
  if (x.rank() != 4 || x.dim(0) != 1 || x.dim(1) != in[0] || x.dim(2) != in[1] || x.dim(3) != in[2])
    throw std::invalid_argument("saliency: expected a single image of shape (1, " + std::to_string(in[0]) + ", " +
                                std::to_string(in[1]) + ", " + std::to_string(in[2]) + "), got " +
                                shape_str(x.shape()));
}

// d logit[n, cls] / d x[n] for every sample n of the batch.
Tensor input_gradients(const Network& net, const Tensor& batch, int cls) {
  Trace t = forward_trace(net, batch, {.input_grad = true, .param_grad = false});
  const Tensor& logits = t.graph.value(t.output);
  Tensor seed(logits.shape(), 0.0);
  for (std::size_t n = 0; n < logits.dim(0); ++n) seed[n * logits.dim(1) + static_cast<std::size_t>(cls)] = 1.0;
  t.graph.backward(t.output, seed);
  return t.graph.grad(t.input);
}

image::RasterImage reduce(const std::vector<double>& grad, std::size_t C, std::size_t H, std::size_t W) {
  image::RasterImage out(W, H, 1, image::Range::unit);
  const std::size_t P = H * W;
  std::vector<double> heat(P, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < P; ++p) heat[p] = std::max(heat[p], std::abs(grad[c * P + p]));
  const double mx = *std::max_element(heat.begin(), heat.end());
  if (mx > 0.0)
    for (double& v : heat) v /= mx;
  out.pixels = std::move(heat);
  return out;
}

int predicted_class(const Network& net, const Tensor& x) {
  return ops::argmax_rows(forward(net, x))[0];
}

}  // namespace

void SaliencyConfig::validate() const {
  if (samples < 1) throw std::invalid_argument("saliency: sample count must be >= 1");
  if (!(sigma >= 0.0)) throw std::invalid_argument("saliency: sigma must be >= 0");
}

image::RasterImage saliency(const Network& net, const Tensor& x) {
  check_single(net, x);
  const Tensor g = input_gradients(net, x, predicted_class(net, x));
  return reduce(g.values(), x.dim(1), x.dim(2), x.dim(3));
}

image::RasterImage smoothgrad(const Network& net, const Tensor& x, const SaliencyConfig& cfg) {
  cfg.validate();
  check_single(net, x);
  const int cls = predicted_class(net, x);
  const auto [lo, hi] = std::minmax_element(x.values().begin(), x.values().end());
  const double sd = cfg.sigma * (*hi - *lo);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t per = x.size();
  std::vector<double> mean(per, 0.0);
  std::size_t k = 0;
  const auto total = static_cast<std::size_t>(cfg.samples);
  for (std::size_t start = 0; start < total; start += kChunk) {
    const std::size_t n = std::min(kChunk, total - start);
    Tensor batch({n, x.dim(1), x.dim(2), x.dim(3)});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < per; ++j) batch[i * per + j] = sd > 0.0 ? x[j] + sd * noise(rng) : x[j];
    const Tensor g = input_gradients(net, batch, cls);
    // Running mean: with identical gradients every update adds exactly zero.
    for (std::size_t i = 0; i < n; ++i) {
      ++k;
      const double inv = 1.0 / static_cast<double>(k);
      for (std::size_t j = 0; j < per; ++j) mean[j] += (g[i * per + j] - mean[j]) * inv;
    }
  }
  return reduce(mean, x.dim(1), x.dim(2), x.dim(3));
}

}  // namespace ediv::lens
