#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ediv/nn/graph.hpp"

// Differentiable operations recorded on a Graph. Images are (N, C, H, W),
// feature vectors (N, F). Every op throws std::invalid_argument on a shape
// contract violation.
namespace ediv::ops {

// Stride-1 convolution. x (N,C,H,W), w (O,C,K,K), b (O) -> (N,O,H+2p-K+1,W+2p-K+1).
Var conv2d(Graph& g, Var x, Var w, Var b, std::size_t pad);
Var relu(Graph& g, Var x);
// 2x2 window, stride 2; odd trailing rows/cols are dropped. Ties pick the first maximum.
Var maxpool2x2(Graph& g, Var x);
// (N,C,H,W) -> (N,C)
Var global_avg_pool(Graph& g, Var x);
// (N, ...) -> (N, prod(...))
Var flatten(Graph& g, Var x);
// x (N,I), w (O,I), b (O) -> (N,O)
Var linear(Graph& g, Var x, Var w, Var b);
// Mean negative log-likelihood of softmax(logits) over the batch -> shape (1).
Var cross_entropy(Graph& g, Var logits, std::span<const int> labels);
Var sum(Graph& g, Var x);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var x, double factor);
// Mean of channel c over batch and spatial positions of (N,C,H,W) -> shape (1).
Var channel_mean(Graph& g, Var x, std::size_t channel);

/// Bilinear sampling plan over an H x W plane: every output pixel reads four
/// source pixels with fixed weights.
struct SamplingMap {
  std::size_t in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  std::vector<std::array<std::uint32_t, 4>> index;
  std::vector<std::array<double, 4>> weight;
};
// Applies the same plan to every (n, c) plane.
Var resample(Graph& g, Var x, const SamplingMap& map);

// Row-wise softmax of (N,K) logits; not recorded.
Tensor softmax(const Tensor& logits);
// Index of the row maximum; ties resolve to the lowest index.
std::vector<int> argmax_rows(const Tensor& m);

}  // namespace ediv::ops
