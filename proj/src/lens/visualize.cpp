#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "ediv/lens.hpp"
#include "ediv/nn/optim.hpp"

namespace ediv::lens {
namespace {

std::int64_t reflect(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

ops::SamplingMap identity_map(std::size_t h, std::size_t w) {
  ops::SamplingMap m{h, w, h, w, {}, {}};
  m.index.resize(h * w);
  m.weight.resize(h * w);
  for (std::size_t q = 0; q < h * w; ++q) {
    const auto i = static_cast<std::uint32_t>(q);
    m.index[q] = {i, i, i, i};
    m.weight[q] = {1.0, 0.0, 0.0, 0.0};
  }
  return m;
}

void check_objective(const Network& net, const VizObjective& obj) {
  if (obj.layer >= net.layers().size())
    throw std::invalid_argument("visualize: layer " + std::to_string(obj.layer) + " does not exist (network has " +
                                std::to_string(net.layers().size()) + " layers)");
  const Shape& s = net.layer_output_shape(obj.layer);
  if (s.size() != 3)
    throw std::invalid_argument("visualize: layer " + std::to_string(obj.layer) + " (" +
                                layer_name(net.layers()[obj.layer].kind) + ") has no spatial channels");
  if (obj.channel >= s[0])
    throw std::invalid_argument("visualize: channel " + std::to_string(obj.channel) + " out of range for layer " +
                                std::to_string(obj.layer) + " with " + std::to_string(s[0]) + " channels");
}

}  // namespace

void VizConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("viz: steps must be >= 1");
  if (!(lr >= 0.0)) throw std::invalid_argument("viz: lr must be >= 0");
  if (jitter1 < 0 || jitter2 < 0) throw std::invalid_argument("viz: jitter must be >= 0");
  if (!(scale_min > 0.0 && scale_min <= 1.0 && scale_max >= 1.0))
    throw std::invalid_argument("viz: scale range must bracket 1.0");
  if (!(rotate_deg >= 0.0)) throw std::invalid_argument("viz: rotation range must be >= 0");
}

ops::SamplingMap augmentation_map(std::size_t h, std::size_t w, const VizConfig& cfg, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> j1(-cfg.jitter1, cfg.jitter1), j2(-cfg.jitter2, cfg.jitter2);
  std::uniform_real_distribution<double> sc(cfg.scale_min, cfg.scale_max);
  std::uniform_real_distribution<double> rot(-cfg.rotate_deg, cfg.rotate_deg);
  const double t1x = j1(rng), t1y = j1(rng);
  const double s = sc(rng);
  const double theta = rot(rng) * std::numbers::pi / 180.0;
  const double t2x = j2(rng), t2y = j2(rng);

  // Output q reads source p = R(-theta)(q - c - t2) / s + c - t1.
  const double cx = (static_cast<double>(w) - 1.0) / 2.0, cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  ops::SamplingMap m{h, w, h, w, {}, {}};
  m.index.resize(h * w);
  m.weight.resize(h * w);
  const auto H = static_cast<std::int64_t>(h), W = static_cast<std::int64_t>(w);
  for (std::size_t qy = 0; qy < h; ++qy)
    for (std::size_t qx = 0; qx < w; ++qx) {
      const double dx = static_cast<double>(qx) - cx - t2x, dy = static_cast<double>(qy) - cy - t2y;
      const double px = (ct * dx + st * dy) / s + cx - t1x;
      const double py = (-st * dx + ct * dy) / s + cy - t1y;
      const double fx = std::floor(px), fy = std::floor(py);
      const double ax = px - fx, ay = py - fy;
      const auto x0 = static_cast<std::int64_t>(fx), y0 = static_cast<std::int64_t>(fy);
      const auto at = [&](std::int64_t y, std::int64_t x) {
        return static_cast<std::uint32_t>(reflect(y, H) * W + reflect(x, W));
      };
      const std::size_t q = qy * w + qx;
      m.index[q] = {at(y0, x0), at(y0, x0 + 1), at(y0 + 1, x0), at(y0 + 1, x0 + 1)};
      m.weight[q] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
    }
  return m;
}

double objective_value(const Network& net, const VizObjective& obj, const Tensor& image) {
  check_objective(net, obj);
  Trace t = forward_trace(net, image, {.input_grad = false, .param_grad = false, .stop_after = obj.layer});
  return t.graph.value(ops::channel_mean(t.graph, t.layer_outputs[obj.layer], obj.channel))[0];
}

VizResult visualize(const Network& net, const VizObjective& obj, const VizConfig& cfg, const ColorMatrix& color) {
  cfg.validate();
  check_objective(net, obj);
  const Shape& in = net.input_shape();
  const std::size_t C = in[0], H = in[1], W = in[2];
  if (color.n != C) throw std::invalid_argument("visualize: color matrix does not match input channels");

  // Seeded by (seed, layer, channel) only, so every network sharing a config
  // starts a given channel from the same image and augmentation sequence.
  std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(obj.layer), static_cast<std::uint64_t>(obj.channel)};
  std::mt19937_64 rng(seq);
  SpectrumImage spec = fourier_param_init(H, W, C, rng());
  const std::size_t K = spec.coefficients();
  std::vector<double> params(2 * K);
  std::copy(spec.re.begin(), spec.re.end(), params.begin());
  std::copy(spec.im.begin(), spec.im.end(), params.begin() + K);
  Adam adam(params.size());
  const double direction = obj.sign == Sign::maximize ? -1.0 : 1.0;
  const ops::SamplingMap identity = identity_map(H, W);

  VizResult result;
  result.initial = objective_value(net, obj, decode(spec, color));
  for (int step = 0; step < cfg.steps; ++step) {
    const Tensor x = decode(spec, color);
    const ops::SamplingMap map = cfg.augment ? augmentation_map(H, W, cfg, rng) : identity;
    Graph aug;
    const Var xv = aug.leaf(x, true);
    const Var av = ops::resample(aug, xv, map);

    Trace t = forward_trace(net, aug.value(av), {.input_grad = true, .param_grad = false, .stop_after = obj.layer});
    const Var h = ops::channel_mean(t.graph, t.layer_outputs[obj.layer], obj.channel);
    const double value = t.graph.value(h)[0];
    if (!std::isfinite(value))
      throw std::runtime_error("visualize: objective became non-finite at step " + std::to_string(step) +
                               " (layer " + std::to_string(obj.layer) + ", channel " + std::to_string(obj.channel) +
                               ")");
    t.graph.backward(h, Tensor({1}, direction));
    aug.backward(av, t.graph.grad(t.input));
    const auto g = decode_adjoint(spec, color, x, aug.grad(xv));
    adam.step(params, g, cfg.lr);
    std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(K), spec.re.begin());
    std::copy(params.begin() + static_cast<std::ptrdiff_t>(K), params.end(), spec.im.begin());
  }
  result.image = decode(spec, color);
  result.final = objective_value(net, obj, result.image);
  result.improved = obj.sign == Sign::maximize ? result.final > result.initial : result.final < result.initial;
  return result;
}

}  // namespace ediv::lens
