#include "ediv/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "ediv/nn/ops.hpp"
#include "ediv/simd/kernels.hpp"

namespace ediv {

const char* layer_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2x2: return "maxpool2x2";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::linear: return "linear";
  }
  return "?";
}

namespace {

std::string layer_label(std::size_t i, const LayerSpec& spec) {
  return "layer " + std::to_string(i) + " (" + layer_name(spec.kind) + ")";
}

[[noreturn]] void layer_error(std::size_t i, const LayerSpec& spec, const std::string& what) {
  throw std::invalid_argument(layer_label(i, spec) + ": " + what);
}

std::string param_name(std::size_t i, const LayerSpec& spec, const char* role) {
  const char* prefix = spec.kind == LayerKind::conv2d ? "conv" : "linear";
  return std::string(prefix) + std::to_string(i) + "." + role;
}

}  // namespace

Network::Network(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (input_shape_.size() != 3)
    throw std::invalid_argument("network input shape must be (C, H, W), got " +
                                shape_str(input_shape_));
  shape_size(input_shape_);
  if (layers_.empty()) throw std::invalid_argument("network needs at least one layer");

  Shape cur = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& L = layers_[i];
    switch (L.kind) {
      case LayerKind::conv2d: {
        if (L.in == 0 || L.out == 0 || L.kernel == 0)
          layer_error(i, L, "channels and kernel size must be positive");
        if (cur.size() != 3) layer_error(i, L, "expects an image input, got " + shape_str(cur));
        if (cur[0] != L.in)
          layer_error(i, L, "expects " + std::to_string(L.in) + " input channels, got " +
                                std::to_string(cur[0]));
        if (cur[1] + 2 * L.pad < L.kernel || cur[2] + 2 * L.pad < L.kernel)
          layer_error(i, L, "kernel larger than padded input " + shape_str(cur));
        cur = {L.out, cur[1] + 2 * L.pad - L.kernel + 1, cur[2] + 2 * L.pad - L.kernel + 1};
        params_.push_back({param_name(i, L, "weight"), i, true,
                           Tensor({L.out, L.in, L.kernel, L.kernel}), std::nullopt});
        params_.push_back({param_name(i, L, "bias"), i, false, Tensor({L.out}), std::nullopt});
        break;
      }
      case LayerKind::relu: break;
      case LayerKind::maxpool2x2:
        if (cur.size() != 3 || cur[1] < 2 || cur[2] < 2)
          layer_error(i, L, "needs an image of at least 2x2, got " + shape_str(cur));
        cur = {cur[0], cur[1] / 2, cur[2] / 2};
        break;
      case LayerKind::global_avg_pool:
        if (cur.size() != 3) layer_error(i, L, "expects an image input, got " + shape_str(cur));
        cur = {cur[0]};
        break;
      case LayerKind::flatten: cur = {shape_size(cur)}; break;
      case LayerKind::linear:
        if (L.in == 0 || L.out == 0) layer_error(i, L, "feature sizes must be positive");
        if (cur.size() != 1 || cur[0] != L.in)
          layer_error(i, L, "expects " + std::to_string(L.in) + " features, got " + shape_str(cur));
        cur = {L.out};
        params_.push_back({param_name(i, L, "weight"), i, true, Tensor({L.out, L.in}), std::nullopt});
        params_.push_back({param_name(i, L, "bias"), i, false, Tensor({L.out}), std::nullopt});
        break;
      default: layer_error(i, L, "unknown layer kind");
    }
    out_shapes_.push_back(cur);
  }
}

Parameter& Network::param(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("network has no parameter '" + name + "'");
}

const Parameter& Network::param(const std::string& name) const {
  return const_cast<Network*>(this)->param(name);
}

std::size_t Network::num_classes() const {
  const Shape& s = out_shapes_.back();
  return s.size() == 1 ? s[0] : shape_size(s);
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::optional<std::size_t> Network::last_conv_layer() const {
  for (std::size_t i = layers_.size(); i-- > 0;)
    if (layers_[i].kind == LayerKind::conv2d) return i;
  return std::nullopt;
}

void Network::init_he(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& p : params_) {
    if (!p.prunable) {
      p.value.fill(0.0);
      continue;
    }
    const LayerSpec& L = layers_[p.layer];
    const double fan_in = L.kind == LayerKind::conv2d
                              ? static_cast<double>(L.in) * L.kernel * L.kernel
                              : static_cast<double>(L.in);
    const double gain = L.kind == LayerKind::conv2d ? 2.0 : 1.0;
    std::normal_distribution<double> dist(0.0, std::sqrt(gain / fan_in));
    for (double& v : p.value.values()) v = dist(rng);
  }
  apply_masks();
}

void Network::install_mask(const std::string& name, Tensor mask) {
  Parameter& p = param(name);
  if (mask.shape() != p.value.shape())
    throw std::invalid_argument("mask for '" + name + "' has shape " + shape_str(mask.shape()) +
                                ", parameter has " + shape_str(p.value.shape()));
  for (double v : mask.values())
    if (v != 0.0 && v != 1.0)
      throw std::invalid_argument("mask for '" + name + "' must contain only 0 and 1");
  p.mask = std::move(mask);
}

bool Network::has_masks() const {
  for (const auto& p : params_)
    if (p.mask) return true;
  return false;
}

void Network::apply_masks() {
  for (auto& p : params_)
    if (p.mask) simd::mul(p.value.data(), p.mask->data(), p.value.data());
}

bool operator==(const Network& a, const Network& b) {
  if (a.input_shape_ != b.input_shape_ || a.layers_ != b.layers_ ||
      a.params_.size() != b.params_.size())
    return false;
  for (std::size_t i = 0; i < a.params_.size(); ++i) {
    const auto& p = a.params_[i];
    const auto& q = b.params_[i];
    if (p.name != q.name || !(p.value == q.value) || p.mask.has_value() != q.mask.has_value())
      return false;
    if (p.mask && !(*p.mask == *q.mask)) return false;
  }
  return true;
}

Network desk_network(std::size_t channels, std::size_t height, std::size_t width,
                     std::size_t classes) {
  const auto c = static_cast<std::uint32_t>(channels);
  const auto k = static_cast<std::uint32_t>(classes);
  return Network({channels, height, width},
                 {LayerSpec::conv_same(c, 8, 3), LayerSpec::simple(LayerKind::relu),
                  LayerSpec::simple(LayerKind::maxpool2x2), LayerSpec::conv_same(8, 16, 3),
                  LayerSpec::simple(LayerKind::relu), LayerSpec::simple(LayerKind::maxpool2x2),
                  LayerSpec::conv_same(16, 32, 3), LayerSpec::simple(LayerKind::relu),
                  LayerSpec::simple(LayerKind::global_avg_pool), LayerSpec::fc(32, k)});
}

Trace forward_trace(const Network& net, const Tensor& x, TraceOptions options) {
  const Shape& in = net.input_shape();
  if (x.rank() != 4 || x.dim(1) != in[0] || x.dim(2) != in[1] || x.dim(3) != in[2])
    throw std::invalid_argument("input shape " + shape_str(x.shape()) +
                                " does not match network input (N, " + std::to_string(in[0]) +
                                ", " + std::to_string(in[1]) + ", " + std::to_string(in[2]) + ")");
  const std::size_t last =
      options.stop_after ? *options.stop_after : net.layers().size() - 1;
  if (last >= net.layers().size())
    throw std::out_of_range("stop_after layer " + std::to_string(last) + " does not exist");

  Trace t;
  t.input = t.graph.leaf(x, options.input_grad);
  for (const auto& p : net.params()) t.params.push_back(t.graph.leaf(p.value, options.param_grad));

  Var cur = t.input;
  std::size_t pi = 0;
  for (std::size_t i = 0; i <= last; ++i) {
    const LayerSpec& L = net.layers()[i];
    try {
      switch (L.kind) {
        case LayerKind::conv2d:
          cur = ops::conv2d(t.graph, cur, t.params[pi], t.params[pi + 1], L.pad);
          pi += 2;
          break;
        case LayerKind::relu: cur = ops::relu(t.graph, cur); break;
        case LayerKind::maxpool2x2: cur = ops::maxpool2x2(t.graph, cur); break;
        case LayerKind::global_avg_pool: cur = ops::global_avg_pool(t.graph, cur); break;
        case LayerKind::flatten: cur = ops::flatten(t.graph, cur); break;
        case LayerKind::linear:
          cur = ops::linear(t.graph, cur, t.params[pi], t.params[pi + 1]);
          pi += 2;
          break;
      }
    } catch (const std::invalid_argument& e) {
      layer_error(i, L, e.what());
    }
    t.layer_outputs.push_back(cur);
  }
  t.output = cur;
  return t;
}

Tensor forward(const Network& net, const Tensor& x) {
  Trace t = forward_trace(net, x, {.input_grad = false, .param_grad = false});
  return t.graph.value(t.output);
}

Tensor predict_proba(const Network& net, const Tensor& x, std::size_t batch) {
  const std::size_t N = x.dim(0);
  const std::size_t per = x.size() / N;
  const std::size_t K = net.num_classes();
  Tensor out({N, K});
  for (std::size_t start = 0; start < N; start += batch) {
    const std::size_t n = std::min(batch, N - start);
    Shape s = x.shape();
    s[0] = n;
    std::vector<double> chunk(x.values().begin() + start * per,
                              x.values().begin() + (start + n) * per);
    Tensor probs = ops::softmax(forward(net, Tensor(s, std::move(chunk))));
    std::copy(probs.values().begin(), probs.values().end(), out.values().begin() + start * K);
  }
  return out;
}

Gradients backward(Trace& trace, const Tensor& seed) {
  trace.graph.backward(trace.output, seed);
  Gradients g;
  g.params.reserve(trace.params.size());
  for (Var p : trace.params) g.params.push_back(trace.graph.grad(p));
  g.input = trace.graph.grad(trace.input);
  return g;
}

}  // namespace ediv
