#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "ediv/image.hpp"
#include "ediv/nn/network.hpp"
#include "ediv/nn/ops.hpp"

namespace ediv::lens {

/// Half spectrum of a real C x H x W signal: bins (u, v) for u < H, v <= W/2,
/// stored as separate real and imaginary planes, index (c * H + u) * (W/2+1) + v.
/// scale holds the per-bin frequency weight 1 / max(|f|, 1 / max(H, W)).
struct SpectrumImage {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<double> re, im;
  std::vector<double> scale;  // (H, W/2+1)

  std::size_t bins() const { return height * (width / 2 + 1); }
  std::size_t coefficients() const { return channels * bins(); }
};

/// Zero spectrum with the frequency scale table filled. Requires H, W >= 8.
SpectrumImage zero_spectrum(std::size_t height, std::size_t width, std::size_t channels);

/// Coefficients drawn i.i.d. from N(0, std^2).
SpectrumImage fourier_param_init(std::size_t height, std::size_t width, std::size_t channels, std::uint64_t seed,
                                 double std = 0.01);

/// Square lower-triangular matrix mixing decorrelated channels into colors.
struct ColorMatrix {
  std::size_t n = 0;
  std::vector<double> m;  // row-major n x n

  static ColorMatrix identity(std::size_t n);
  /// Lower Cholesky factor of a symmetric positive-definite covariance.
  /// Throws std::invalid_argument if the matrix is not positive definite.
  static ColorMatrix cholesky(std::size_t n, const std::vector<double>& covariance);
};

/// Channel covariance (population) of (N, C, H, W) images.
std::vector<double> channel_covariance(const Tensor& images);

/// Spatial signal of the spectrum, before color mixing: (C, H, W) row-major.
std::vector<double> spectrum_to_spatial(const SpectrumImage& s);
/// Inverse of spectrum_to_spatial for real input.
void spatial_to_spectrum(const std::vector<double>& spatial, SpectrumImage& s);

/// Applies the color matrix per pixel to a (C, H, W) signal.
std::vector<double> mix_colors(const std::vector<double>& spatial, const ColorMatrix& color, std::size_t pixels);

/// Full decode to a (1, C, H, W) image in [0, 1]: spectrum, color mix, sigmoid.
Tensor decode(const SpectrumImage& s, const ColorMatrix& color);
/// Inverse of decode for an image strictly inside (0, 1).
SpectrumImage encode(const Tensor& image, const ColorMatrix& color);

/// Gradient of a scalar loss with respect to spectrum coefficients, given its
/// gradient with respect to the decoded image. Returned as [re..., im...].
std::vector<double> decode_adjoint(const SpectrumImage& s, const ColorMatrix& color, const Tensor& image,
                                   const Tensor& image_grad);

enum class Sign { maximize, minimize };

struct VizObjective {
  std::size_t layer = 0;
  std::size_t channel = 0;
  Sign sign = Sign::maximize;
};

struct VizConfig {
  int steps = 256;
  double lr = 0.05;
  int jitter1 = 8;
  double scale_min = 0.95, scale_max = 1.05;
  double rotate_deg = 5.0;
  int jitter2 = 4;
  std::uint64_t seed = 0;
  bool augment = true;

  void validate() const;
};

struct VizResult {
  Tensor image;            // (1, C, H, W) in [0, 1]
  double initial = 0.0;    // channel mean at the initial decode, unaugmented
  double final = 0.0;      // channel mean at the returned image, unaugmented
  bool improved = false;   // final beats initial in the requested direction
};

/// Affine jitter / scale / rotate / jitter resampling with reflect padding.
ops::SamplingMap augmentation_map(std::size_t height, std::size_t width, const VizConfig& cfg, std::mt19937_64& rng);

/// Channel mean of the objective's layer output for a (1, C, H, W) image.
double objective_value(const Network& net, const VizObjective& obj, const Tensor& image);

/// Adam on the spectrum coefficients. Throws std::runtime_error naming the
/// step if the objective becomes non-finite.
VizResult visualize(const Network& net, const VizObjective& obj, const VizConfig& cfg, const ColorMatrix& color);

struct SaliencyConfig {
  int samples = 25;
  double sigma = 0.10;  // fraction of the input's value range
  std::uint64_t seed = 0;

  void validate() const;
};

/// Channel-reduced |dY_c/dx| for the predicted class c of a single image
/// (1, C, H, W), normalized to [0, 1] by its maximum. H x W, 1 channel.
image::RasterImage saliency(const Network& net, const Tensor& x);

/// Mean input gradient over noisy copies x + N(0, sigma^2), class fixed by the
/// clean prediction, reduced and normalized as in saliency.
image::RasterImage smoothgrad(const Network& net, const Tensor& x, const SaliencyConfig& cfg);

/// Tensor (1, C, H, W) in [0, 1] to a unit-range raster.
image::RasterImage to_raster(const Tensor& image);

/// Raster to a (1, channels, H, W) tensor in [0, 1]. Gray input is replicated
/// into RGB; RGB input is reduced with the grayscale weights when channels == 1.
Tensor from_raster(const image::RasterImage& img, std::size_t channels);

}  // namespace ediv::lens
