#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ediv/nn/tensor.hpp"

namespace ediv::data {

/// Labelled images (N, C, H, W) with values in [0, 1].
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  /// Copies samples [start, start + count) in the given order.
  Tensor batch(const std::vector<std::size_t>& order, std::size_t start, std::size_t count) const;
  std::vector<int> batch_labels(const std::vector<std::size_t>& order, std::size_t start, std::size_t count) const;
  /// The first `count` samples.
  Dataset head(std::size_t count) const;
};

struct Split {
  Dataset train;
  Dataset val;
};

/// Ten classes: five shapes (disc, square, triangle, cross, ring) drawn in two
/// hue families, with random position, size, rotation, shading and noise.
/// Class k = shape k / 2, hue family k % 2. Counts must be multiples of 10.
struct SyntheticSpec {
  std::size_t train = 2000;
  std::size_t val = 500;
  std::size_t size = 32;
  std::uint64_t seed = 1;
};

inline constexpr std::size_t kSyntheticClasses = 10;

Split synthetic(const SyntheticSpec& spec);

/// Reads an IDX3 ubyte image file and an IDX1 ubyte label file. Throws
/// std::runtime_error on a malformed header or inconsistent counts.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Splits off the last `val` samples as the validation set.
Split split_tail(const Dataset& all, std::size_t val);

}  // namespace ediv::data
