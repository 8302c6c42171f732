#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace ediv::npy {

/// Dense row-major float64 array.
struct Array {
  std::vector<std::size_t> shape;
  std::vector<double> data;
};

/// NPY version 1.0 file with dtype '<f8', C order.
void write(const std::filesystem::path& path, const std::vector<std::size_t>& shape, std::span<const double> data);

/// Reads NPY 1.x/2.x files holding '<f8', '<f4', '<i8', '<i4' or '|u1' data in
/// C order; values are widened to double. Throws std::runtime_error otherwise.
Array read(const std::filesystem::path& path);

/// Prediction CSV: one row per (model, sample) as `model,sample,p_0,...,p_{C-1}`,
/// with an optional header row starting with "model". Every (model, sample)
/// pair in the dense index range must appear exactly once. Returns (M, N, C).
Array read_prediction_csv(const std::filesystem::path& path);

/// One integer label per line, or `sample,label` rows with an optional header.
std::vector<int> read_label_csv(const std::filesystem::path& path);

/// Writes the (M, N, C) prediction CSV layout accepted by read_prediction_csv.
void write_prediction_csv(const std::filesystem::path& path, const Array& predictions);

}  // namespace ediv::npy
