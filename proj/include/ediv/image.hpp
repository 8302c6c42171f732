#pragma once

#include <cstddef>
#include <vector>

namespace ediv::image {

/// Nominal value range of a raster's samples.
enum class Range { byte, unit };  // [0, 255] or [0, 1]

/// Interleaved row-major raster: pixels[(y * width + x) * channels + c].
struct RasterImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  Range range = Range::byte;
  std::vector<double> pixels;

  RasterImage() = default;
  RasterImage(std::size_t w, std::size_t h, std::size_t c, Range r = Range::byte, double fill = 0.0);

  double& at(std::size_t x, std::size_t y, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
  double at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }

  /// Throws std::invalid_argument unless dimensions are positive, channels is
  /// 1 or 3, the buffer size matches and every sample lies in the range.
  void validate() const;

  bool operator==(const RasterImage&) const = default;
};

/// 0.299 R + 0.587 G + 0.114 B; single-channel input is returned unchanged.
RasterImage grayscale(const RasterImage& img);

/// Exact area-average resampling. Each output pixel is the coverage-weighted
/// mean of the source pixels under its footprint; a constant window yields
/// exactly that constant.
RasterImage resize(const RasterImage& img, std::size_t width, std::size_t height);

/// Hexcone HSV of one pixel with r, g, b in [0, 1]. hue6 is the hue in
/// sextant units [0, 6); it is 0 for achromatic pixels.
struct Hsv {
  double hue6;
  double saturation;
  double value;
};
Hsv hsv_pixel(double r, double g, double b);

/// Hexcone HSV with all three components in [0, 1]. Requires 3 channels.
RasterImage rgb_to_hsv(const RasterImage& img);

/// Rounds to the nearest integer in [0, 255] after mapping to byte range.
RasterImage quantize_u8(const RasterImage& img);

/// Maps a [0, 1] raster to [0, 255] by scaling.
RasterImage to_byte_range(const RasterImage& img);

/// Contact sheet: images placed row-major on a grid of `columns` cells of the
/// largest image size, separated by `pad` pixels of `background`. Output is
/// byte range with 3 channels if any input has 3, else 1; gray inputs are
/// replicated into RGB. Requires at least one image.
RasterImage tile(const std::vector<RasterImage>& images, std::size_t columns, std::size_t pad = 2,
                 double background = 255.0);

}  // namespace ediv::image
