#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ediv/nn/graph.hpp"
#include "ediv/nn/tensor.hpp"

namespace ediv {

enum class LayerKind : std::uint8_t {
  conv2d = 1,
  relu = 2,
  maxpool2x2 = 3,
  global_avg_pool = 4,
  flatten = 5,
  linear = 6,
};

const char* layer_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::uint32_t in = 0;
  std::uint32_t out = 0;
  std::uint32_t kernel = 0;
  std::uint32_t pad = 0;

  static LayerSpec conv(std::uint32_t in, std::uint32_t out, std::uint32_t kernel,
                        std::uint32_t pad) {
    return {LayerKind::conv2d, in, out, kernel, pad};
  }
  static LayerSpec conv_same(std::uint32_t in, std::uint32_t out, std::uint32_t kernel) {
    return conv(in, out, kernel, kernel / 2);
  }
  static LayerSpec fc(std::uint32_t in, std::uint32_t out) { return {LayerKind::linear, in, out, 0, 0}; }
  static LayerSpec simple(LayerKind kind) { return {kind, 0, 0, 0, 0}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Parameter {
  std::string name;
  std::size_t layer = 0;
  bool prunable = false;  // conv and linear weights; never biases
  Tensor value;
  std::optional<Tensor> mask;  // 1 keeps, 0 prunes; same shape as value
};

/// Ordered stack of layers over a fixed (C, H, W) input with named parameters
/// and optional per-parameter binary masks.
class Network {
 public:
  Network() = default;
  // Parameters start at zero. Throws std::invalid_argument on inconsistent
  // layer dimensions.
  Network(Shape input_shape, std::vector<LayerSpec> layers);

  const Shape& input_shape() const { return input_shape_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;
  std::size_t num_classes() const;
  std::size_t param_count() const;

  // Per-sample output shape of layer i.
  const Shape& layer_output_shape(std::size_t i) const { return out_shapes_.at(i); }
  std::optional<std::size_t> last_conv_layer() const;

  // He-normal weights, zero biases.
  void init_he(std::uint64_t seed);

  void install_mask(const std::string& name, Tensor mask);
  bool has_masks() const;
  // Zeroes every masked parameter entry.
  void apply_masks();

  friend bool operator==(const Network& a, const Network& b);

 private:
  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> out_shapes_;
  std::vector<Parameter> params_;
};

// conv(C->8)/relu/pool, conv(8->16)/relu/pool, conv(16->32)/relu, gap, linear(32->classes)
Network desk_network(std::size_t channels, std::size_t height, std::size_t width,
                     std::size_t classes);

struct TraceOptions {
  bool input_grad = false;
  bool param_grad = true;
  // Stop after recording this layer instead of running to the logits.
  std::optional<std::size_t> stop_after;
};

struct Trace {
  Graph graph;
  Var input;
  std::vector<Var> params;  // aligned with Network::params()
  std::vector<Var> layer_outputs;
  Var output;
};

struct Gradients {
  std::vector<Tensor> params;  // aligned with Network::params()
  Tensor input;
};

// x is (N, C, H, W) with (C, H, W) == net.input_shape(). Errors name the layer.
Trace forward_trace(const Network& net, const Tensor& x, TraceOptions options = {});
Tensor forward(const Network& net, const Tensor& x);
// Softmax of the logits, evaluated in chunks of at most `batch` samples.
Tensor predict_proba(const Network& net, const Tensor& x, std::size_t batch = 256);
Gradients backward(Trace& trace, const Tensor& seed);

}  // namespace ediv
