#include "ediv/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ediv::image {
namespace {

double range_max(Range r) { return r == Range::byte ? 255.0 : 1.0; }

// Integer overlap of source cell i and destination cell j on a common grid of
// src*dst units: source cell i spans [i*dst, (i+1)*dst), destination cell j
// spans [j*src, (j+1)*src).
struct Footprint {
  std::size_t first;
  std::vector<std::size_t> weights;
};

std::vector<Footprint> footprints(std::size_t src, std::size_t dst) {
  std::vector<Footprint> out(dst);
  for (std::size_t j = 0; j < dst; ++j) {
    const std::size_t lo = j * src, hi = (j + 1) * src;
    const std::size_t first = lo / dst;
    const std::size_t last = (hi - 1) / dst;
    out[j].first = first;
    for (std::size_t i = first; i <= last; ++i) {
      const std::size_t a = std::max(lo, i * dst), b = std::min(hi, (i + 1) * dst);
      out[j].weights.push_back(b - a);
    }
  }
  return out;
}

}  // namespace

RasterImage::RasterImage(std::size_t w, std::size_t h, std::size_t c, Range r, double fill)
    : width(w), height(h), channels(c), range(r), pixels(w * h * c, fill) {
  validate();
}

void RasterImage::validate() const {
  if (width == 0 || height == 0) throw std::invalid_argument("raster: dimensions must be positive");
  if (channels != 1 && channels != 3)
    throw std::invalid_argument("raster: channels must be 1 or 3, got " + std::to_string(channels));
  if (pixels.size() != width * height * channels)
    throw std::invalid_argument("raster: pixel buffer does not match dimensions");
  const double hi = range_max(range);
  for (double v : pixels)
    if (!(v >= 0.0 && v <= hi)) throw std::invalid_argument("raster: sample outside declared range");
}

RasterImage grayscale(const RasterImage& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw std::invalid_argument("grayscale: expected 1 or 3 channels");
  RasterImage out(img.width, img.height, 1, img.range);
  for (std::size_t i = 0; i < img.width * img.height; ++i) {
    const double* p = &img.pixels[i * 3];
    // Integer weights keep byte-valued sums exact; clamp guards the last ulp.
    out.pixels[i] = std::clamp((299.0 * p[0] + 587.0 * p[1] + 114.0 * p[2]) / 1000.0, 0.0, range_max(img.range));
  }
  return out;
}

RasterImage resize(const RasterImage& img, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw std::invalid_argument("resize: target dimensions must be positive");
  if (width == img.width && height == img.height) return img;
  const auto fx = footprints(img.width, width);
  const auto fy = footprints(img.height, height);
  RasterImage out(width, height, img.channels, img.range);
  const double hi = range_max(img.range);
  for (std::size_t oy = 0; oy < height; ++oy) {
    for (std::size_t ox = 0; ox < width; ++ox) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double ref = img.at(fx[ox].first, fy[oy].first, c);
        double acc = 0.0;
        std::size_t total = 0;
        for (std::size_t dy = 0; dy < fy[oy].weights.size(); ++dy) {
          for (std::size_t dx = 0; dx < fx[ox].weights.size(); ++dx) {
            const std::size_t w = fy[oy].weights[dy] * fx[ox].weights[dx];
            acc += static_cast<double>(w) * (img.at(fx[ox].first + dx, fy[oy].first + dy, c) - ref);
            total += w;
          }
        }
        out.at(ox, oy, c) = std::clamp(ref + acc / static_cast<double>(total), 0.0, hi);
      }
    }
  }
  return out;
}

Hsv hsv_pixel(double r, double g, double b) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double delta = mx - mn;
  double h6 = 0.0;
  if (delta > 0.0) {
    if (mx == r)
      h6 = (g - b) / delta;
    else if (mx == g)
      h6 = 2.0 + (b - r) / delta;
    else
      h6 = 4.0 + (r - g) / delta;
    if (h6 < 0.0) h6 += 6.0;
    if (h6 >= 6.0) h6 = 0.0;
  }
  return {h6, mx > 0.0 ? delta / mx : 0.0, mx};
}

RasterImage rgb_to_hsv(const RasterImage& img) {
  if (img.channels != 3) throw std::invalid_argument("rgb_to_hsv: expected 3 channels");
  const double scale = range_max(img.range);
  RasterImage out(img.width, img.height, 3, Range::unit);
  for (std::size_t i = 0; i < img.width * img.height; ++i) {
    const Hsv hsv = hsv_pixel(img.pixels[i * 3] / scale, img.pixels[i * 3 + 1] / scale, img.pixels[i * 3 + 2] / scale);
    out.pixels[i * 3] = std::clamp(hsv.hue6 / 6.0, 0.0, 1.0);
    out.pixels[i * 3 + 1] = hsv.saturation;
    out.pixels[i * 3 + 2] = hsv.value;
  }
  return out;
}

RasterImage to_byte_range(const RasterImage& img) {
  if (img.range == Range::byte) return img;
  RasterImage out = img;
  out.range = Range::byte;
  for (double& v : out.pixels) v = std::clamp(v * 255.0, 0.0, 255.0);
  return out;
}

RasterImage quantize_u8(const RasterImage& img) {
  RasterImage out = to_byte_range(img);
  for (double& v : out.pixels) v = std::clamp(std::round(v), 0.0, 255.0);
  return out;
}

RasterImage tile(const std::vector<RasterImage>& images, std::size_t columns, std::size_t pad, double background) {
  if (images.empty()) throw std::invalid_argument("tile: no images");
  if (columns == 0) throw std::invalid_argument("tile: columns must be >= 1");
  std::size_t cw = 0, ch = 0, channels = 1;
  for (const auto& img : images) {
    img.validate();
    cw = std::max(cw, img.width);
    ch = std::max(ch, img.height);
    if (img.channels == 3) channels = 3;
  }
  columns = std::min(columns, images.size());
  const std::size_t rows = (images.size() + columns - 1) / columns;
  RasterImage out(columns * cw + (columns + 1) * pad, rows * ch + (rows + 1) * pad, channels, Range::byte, background);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const RasterImage src = images[i].range == Range::byte ? images[i] : to_byte_range(images[i]);
    const std::size_t ox = pad + (i % columns) * (cw + pad), oy = pad + (i / columns) * (ch + pad);
    for (std::size_t y = 0; y < src.height; ++y)
      for (std::size_t x = 0; x < src.width; ++x)
        for (std::size_t c = 0; c < channels; ++c)
          out.at(ox + x, oy + y, c) = src.at(x, y, src.channels == 1 ? 0 : c);
  }
  return out;
}

}  // namespace ediv::image
