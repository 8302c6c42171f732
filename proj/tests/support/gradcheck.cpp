#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ediv/nn/network.hpp"
#include "ediv/nn/ops.hpp"

namespace ediv::testing {
namespace {

struct Instance {
  Network net;
  Tensor x;
  std::vector<int> labels;
};

Instance draw(std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return static_cast<std::uint32_t>(std::uniform_int_distribution<int>(lo, hi)(rng)); };
  for (;;) {
    const std::uint32_t c = pick(1, 3), h = pick(4, 7), w = pick(4, 7);
    const std::uint32_t c1 = pick(2, 4), k1 = pick(0, 1) ? 3 : 1;
    std::vector<LayerSpec> layers{LayerSpec::conv(c, c1, k1, k1 == 3 ? pick(0, 1) : 0),
                                  LayerSpec::simple(LayerKind::relu)};
    Shape cur = Network({c, h, w}, layers).layer_output_shape(1);
    if (pick(0, 1) && cur[1] >= 2 && cur[2] >= 2) {
      layers.push_back(LayerSpec::simple(LayerKind::maxpool2x2));
      cur = {cur[0], cur[1] / 2, cur[2] / 2};
    }
    std::uint32_t feat = static_cast<std::uint32_t>(cur[0]);
    if (pick(0, 1)) {
      const std::uint32_t c2 = pick(2, 5);
      layers.push_back(LayerSpec::conv_same(feat, c2, 3));
      layers.push_back(LayerSpec::simple(LayerKind::relu));
      feat = c2;
    }
    const std::uint32_t classes = pick(2, 4);
    if (pick(0, 1)) {
      layers.push_back(LayerSpec::simple(LayerKind::global_avg_pool));
    } else {
      layers.push_back(LayerSpec::simple(LayerKind::flatten));
      Network probe({c, h, w}, layers);
      feat = static_cast<std::uint32_t>(probe.layer_output_shape(layers.size() - 1)[0]);
    }
    layers.push_back(LayerSpec::fc(feat, classes));
    Network net({c, h, w}, layers);
    if (net.param_count() > 2000) continue;
    std::normal_distribution<double> d(0.0, 0.7);
    for (auto& p : net.params())
      for (double& v : p.value.values()) v = d(rng);
    Tensor x({2, c, h, w});
    for (double& v : x.values()) v = d(rng);
    std::vector<int> labels{static_cast<int>(pick(0, classes - 1)), static_cast<int>(pick(0, classes - 1))};
    return {std::move(net), std::move(x), std::move(labels)};
  }
}

// Smallest distance of any ReLU input to 0 and of any pooling winner to the runner-up.
double kink_margin(const Instance& inst) {
  Trace t = forward_trace(inst.net, inst.x, {.input_grad = false, .param_grad = false});
  double margin = INFINITY;
  for (std::size_t i = 0; i < inst.net.layers().size(); ++i) {
    const LayerKind kind = inst.net.layers()[i].kind;
    const Tensor& in = i == 0 ? inst.x : t.graph.value(t.layer_outputs[i - 1]);
    if (kind == LayerKind::relu) {
      for (double v : in.values()) margin = std::min(margin, std::abs(v));
    } else if (kind == LayerKind::maxpool2x2) {
      const std::size_t planes = in.dim(0) * in.dim(1), H = in.dim(2), W = in.dim(3);
      for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t oy = 0; oy < H / 2; ++oy)
          for (std::size_t ox = 0; ox < W / 2; ++ox) {
            const std::size_t b = p * H * W + 2 * oy * W + 2 * ox;
            double v[4] = {in[b], in[b + 1], in[b + W], in[b + W + 1]};
            std::sort(v, v + 4);
            margin = std::min(margin, v[3] - v[2]);
          }
    }
  }
  return margin;
}

double loss(const Network& net, const Tensor& x, const std::vector<int>& labels) {
  Trace t = forward_trace(net, x, {.input_grad = false, .param_grad = false});
  Var l = ops::cross_entropy(t.graph, t.output, labels);
  return t.graph.value(l)[0];
}

double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-3});
}

}  // namespace

GradcheckResult gradcheck_random_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 1);
  GradcheckResult result;
  Instance inst;
  do {
    inst = draw(rng);
    ++result.attempts;
  } while (kink_margin(inst) < 1e-3);

  Trace t = forward_trace(inst.net, inst.x, {.input_grad = true, .param_grad = true});
  t.output = ops::cross_entropy(t.graph, t.output, inst.labels);
  Gradients g = backward(t, Tensor({1}, 1.0));

  const double h = 1e-4;
  result.param_count = inst.net.param_count();
  for (std::size_t pi = 0; pi < inst.net.params().size(); ++pi) {
    Tensor& value = inst.net.params()[pi].value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value[i];
      value[i] = orig + h;
      const double up = loss(inst.net, inst.x, inst.labels);
      value[i] = orig - h;
      const double down = loss(inst.net, inst.x, inst.labels);
      value[i] = orig;
      result.max_rel_error = std::max(result.max_rel_error, rel_error(g.params[pi][i], (up - down) / (2 * h)));
      ++result.params_checked;
    }
  }
  for (std::size_t i = 0; i < inst.x.size(); ++i) {
    const double orig = inst.x[i];
    inst.x[i] = orig + h;
    const double up = loss(inst.net, inst.x, inst.labels);
    inst.x[i] = orig - h;
    const double down = loss(inst.net, inst.x, inst.labels);
    inst.x[i] = orig;
    result.max_rel_error = std::max(result.max_rel_error, rel_error(g.input[i], (up - down) / (2 * h)));
    ++result.params_checked;
  }
  return result;
}

}  // namespace ediv::testing
