#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "ediv/lens.hpp"

namespace ediv::lens {
namespace {

struct Twiddle {
  std::vector<double> c, s;  // cos/sin(2 pi k / n), k < n
  explicit Twiddle(std::size_t n) : c(n), s(n) {
    for (std::size_t k = 0; k < n; ++k) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      c[k] = std::cos(a);
      s[k] = std::sin(a);
    }
  }
};

// Frequencies in cycles per pixel, laid out as numpy's fftfreq / rfftfreq.
double fftfreq(std::size_t k, std::size_t n) {
  const auto ki = static_cast<double>(k), ni = static_cast<double>(n);
  return k <= (n - 1) / 2 ? ki / ni : (ki - ni) / ni;
}

// Multiplicity of half-spectrum column v in the full spectrum.
double column_weight(std::size_t v, std::size_t width) {
  return (v == 0 || (width % 2 == 0 && v == width / 2)) ? 1.0 : 2.0;
}

// Unnormalized forward real DFT of each (H, W) plane of `spatial`.
void rfft2(const std::vector<double>& spatial, std::size_t C, std::size_t H, std::size_t W, std::vector<double>& re,
           std::vector<double>& im) {
  const std::size_t V = W / 2 + 1;
  const Twiddle tw(W), th(H);
  re.assign(C * H * V, 0.0);
  im.assign(C * H * V, 0.0);
  std::vector<double> br(H * V), bi(H * V);
  for (std::size_t c = 0; c < C; ++c) {
    const double* z = &spatial[c * H * W];
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t v = 0; v < V; ++v) {
        double r = 0.0, i = 0.0;
        for (std::size_t x = 0; x < W; ++x) {
          const std::size_t k = (v * x) % W;
          r += z[y * W + x] * tw.c[k];
          i -= z[y * W + x] * tw.s[k];
        }
        br[y * V + v] = r;
        bi[y * V + v] = i;
      }
    for (std::size_t u = 0; u < H; ++u)
      for (std::size_t v = 0; v < V; ++v) {
        double r = 0.0, i = 0.0;
        for (std::size_t y = 0; y < H; ++y) {
          const std::size_t k = (u * y) % H;
          r += br[y * V + v] * th.c[k] + bi[y * V + v] * th.s[k];
          i += bi[y * V + v] * th.c[k] - br[y * V + v] * th.s[k];
        }
        re[(c * H + u) * V + v] = r;
        im[(c * H + u) * V + v] = i;
      }
  }
}

double sigmoid(double y) { return 1.0 / (1.0 + std::exp(-y)); }

}  // namespace

SpectrumImage zero_spectrum(std::size_t height, std::size_t width, std::size_t channels) {
  if (height < 8 || width < 8) throw std::invalid_argument("spectrum: image sides must be >= 8");
  if (channels == 0) throw std::invalid_argument("spectrum: channels must be positive");
  SpectrumImage s;
  s.channels = channels;
  s.height = height;
  s.width = width;
  const std::size_t V = width / 2 + 1;
  s.re.assign(channels * height * V, 0.0);
  s.im.assign(channels * height * V, 0.0);
  s.scale.resize(height * V);
  const double floor = 1.0 / static_cast<double>(std::max(height, width));
  for (std::size_t u = 0; u < height; ++u)
    for (std::size_t v = 0; v < V; ++v) {
      const double fy = fftfreq(u, height), fx = static_cast<double>(v) / static_cast<double>(width);
      s.scale[u * V + v] = 1.0 / std::max(std::sqrt(fx * fx + fy * fy), floor);
    }
  return s;
}

SpectrumImage fourier_param_init(std::size_t height, std::size_t width, std::size_t channels, std::uint64_t seed,
                                 double std) {
  SpectrumImage s = zero_spectrum(height, width, channels);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, std);
  for (double& v : s.re) v = n(rng);
  for (double& v : s.im) v = n(rng);
  return s;
}

ColorMatrix ColorMatrix::identity(std::size_t n) {
  ColorMatrix m{n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) m.m[i * n + i] = 1.0;
  return m;
}

ColorMatrix ColorMatrix::cholesky(std::size_t n, const std::vector<double>& cov) {
  if (n == 0 || cov.size() != n * n) throw std::invalid_argument("color matrix: covariance must be n x n");
  ColorMatrix L{n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      if (std::abs(cov[i * n + j] - cov[j * n + i]) > 1e-12 * (1.0 + std::abs(cov[i * n + j])))
        throw std::invalid_argument("color matrix: covariance is not symmetric");
      double s = cov[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= L.m[i * n + k] * L.m[j * n + k];
      if (i == j) {
        if (!(s > 0.0)) throw std::invalid_argument("color matrix: covariance is not positive definite");
        L.m[i * n + i] = std::sqrt(s);
      } else {
        L.m[i * n + j] = s / L.m[j * n + j];
      }
    }
  }
  return L;
}

std::vector<double> channel_covariance(const Tensor& images) {
  if (images.rank() != 4) throw std::invalid_argument("channel_covariance: expected (N, C, H, W)");
  const std::size_t N = images.dim(0), C = images.dim(1), P = images.dim(2) * images.dim(3);
  std::vector<double> mean(C, 0.0), cov(C * C, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) mean[c] += images[(n * C + c) * P + p];
  for (double& m : mean) m /= static_cast<double>(N * P);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t a = 0; a < C; ++a)
        for (std::size_t b = 0; b <= a; ++b)
          cov[a * C + b] += (images[(n * C + a) * P + p] - mean[a]) * (images[(n * C + b) * P + p] - mean[b]);
  for (std::size_t a = 0; a < C; ++a)
    for (std::size_t b = 0; b <= a; ++b) {
      cov[a * C + b] /= static_cast<double>(N * P);
      cov[b * C + a] = cov[a * C + b];
    }
  return cov;
}

std::vector<double> spectrum_to_spatial(const SpectrumImage& s) {
  const std::size_t C = s.channels, H = s.height, W = s.width, V = W / 2 + 1;
  const Twiddle tw(W), th(H);
  const double norm = 1.0 / std::sqrt(static_cast<double>(H * W));
  std::vector<double> out(C * H * W);
  std::vector<double> ar(H * V), ai(H * V);
  for (std::size_t c = 0; c < C; ++c) {
    // A[y, v] = sum_u T[u, v] e^{+2 pi i u y / H}
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t v = 0; v < V; ++v) {
        double r = 0.0, i = 0.0;
        for (std::size_t u = 0; u < H; ++u) {
          const std::size_t b = (c * H + u) * V + v;
          const double tr = s.re[b] * s.scale[u * V + v], ti = s.im[b] * s.scale[u * V + v];
          const std::size_t k = (u * y) % H;
          r += tr * th.c[k] - ti * th.s[k];
          i += tr * th.s[k] + ti * th.c[k];
        }
        ar[y * V + v] = r;
        ai[y * V + v] = i;
      }
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double acc = 0.0;
        for (std::size_t v = 0; v < V; ++v) {
          const std::size_t k = (v * x) % W;
          acc += column_weight(v, W) * (ar[y * V + v] * tw.c[k] - ai[y * V + v] * tw.s[k]);
        }
        out[(c * H + y) * W + x] = norm * acc;
      }
  }
  return out;
}

void spatial_to_spectrum(const std::vector<double>& spatial, SpectrumImage& s) {
  const std::size_t C = s.channels, H = s.height, W = s.width, V = W / 2 + 1;
  if (spatial.size() != C * H * W) throw std::invalid_argument("spatial_to_spectrum: size mismatch");
  rfft2(spatial, C, H, W, s.re, s.im);
  const double norm = 1.0 / std::sqrt(static_cast<double>(H * W));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t b = 0; b < H * V; ++b) {
      s.re[c * H * V + b] *= norm / s.scale[b];
      s.im[c * H * V + b] *= norm / s.scale[b];
    }
}

std::vector<double> mix_colors(const std::vector<double>& spatial, const ColorMatrix& color, std::size_t pixels) {
  const std::size_t C = color.n;
  if (spatial.size() != C * pixels) throw std::invalid_argument("mix_colors: channel count mismatch");
  std::vector<double> out(spatial.size(), 0.0);
  for (std::size_t a = 0; a < C; ++a)
    for (std::size_t b = 0; b < C; ++b) {
      const double m = color.m[a * C + b];
      if (m == 0.0) continue;
      for (std::size_t p = 0; p < pixels; ++p) out[a * pixels + p] += m * spatial[b * pixels + p];
    }
  return out;
}

Tensor decode(const SpectrumImage& s, const ColorMatrix& color) {
  if (color.n != s.channels) throw std::invalid_argument("decode: color matrix does not match channel count");
  const std::size_t P = s.height * s.width;
  auto y = mix_colors(spectrum_to_spatial(s), color, P);
  for (double& v : y) v = sigmoid(v);
  return Tensor({1, s.channels, s.height, s.width}, std::move(y));
}

SpectrumImage encode(const Tensor& image, const ColorMatrix& color) {
  if (image.rank() != 4 || image.dim(0) != 1) throw std::invalid_argument("encode: expected (1, C, H, W)");
  const std::size_t C = image.dim(1), H = image.dim(2), W = image.dim(3), P = H * W;
  if (color.n != C) throw std::invalid_argument("encode: color matrix does not match channel count");
  std::vector<double> y(image.values());
  for (double& v : y) {
    if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("encode: image values must lie strictly inside (0, 1)");
    v = std::log(v / (1.0 - v));
  }
  // Forward substitution with the lower-triangular color matrix.
  std::vector<double> z(C * P);
  for (std::size_t a = 0; a < C; ++a)
    for (std::size_t p = 0; p < P; ++p) {
      double acc = y[a * P + p];
      for (std::size_t b = 0; b < a; ++b) acc -= color.m[a * C + b] * z[b * P + p];
      z[a * P + p] = acc / color.m[a * C + a];
    }
  SpectrumImage s = zero_spectrum(H, W, C);
  spatial_to_spectrum(z, s);
  return s;
}

std::vector<double> decode_adjoint(const SpectrumImage& s, const ColorMatrix& color, const Tensor& image,
                                   const Tensor& image_grad) {
  const std::size_t C = s.channels, H = s.height, W = s.width, V = W / 2 + 1, P = H * W;
  if (image.size() != C * P || image_grad.size() != C * P)
    throw std::invalid_argument("decode_adjoint: image does not match spectrum");
  // Through the sigmoid, then the transpose of the color matrix.
  std::vector<double> dy(C * P);
  for (std::size_t i = 0; i < C * P; ++i) dy[i] = image_grad[i] * image[i] * (1.0 - image[i]);
  std::vector<double> dz(C * P, 0.0);
  for (std::size_t a = 0; a < C; ++a)
    for (std::size_t b = 0; b < C; ++b) {
      const double m = color.m[a * C + b];
      if (m == 0.0) continue;
      for (std::size_t p = 0; p < P; ++p) dz[b * P + p] += m * dy[a * P + p];
    }
  std::vector<double> fr, fi;
  rfft2(dz, C, H, W, fr, fi);
  const double norm = 1.0 / std::sqrt(static_cast<double>(P));
  std::vector<double> out(2 * C * H * V);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t u = 0; u < H; ++u)
      for (std::size_t v = 0; v < V; ++v) {
        const std::size_t b = (c * H + u) * V + v;
        const double k = column_weight(v, W) * s.scale[u * V + v] * norm;
        out[b] = k * fr[b];
        out[C * H * V + b] = k * fi[b];
      }
  return out;
}

image::RasterImage to_raster(const Tensor& img) {
  if (img.rank() != 4 || img.dim(0) != 1) throw std::invalid_argument("to_raster: expected (1, C, H, W)");
  const std::size_t C = img.dim(1), H = img.dim(2), W = img.dim(3);
  image::RasterImage out(W, H, C, image::Range::unit);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) out.at(x, y, c) = std::clamp(img.at(0, c, y, x), 0.0, 1.0);
  return out;
}

Tensor from_raster(const image::RasterImage& img, std::size_t channels) {
  img.validate();
  if (channels != 1 && channels != 3) throw std::invalid_argument("from_raster: channels must be 1 or 3");
  image::RasterImage src = img.range == image::Range::byte ? img : image::to_byte_range(img);
  if (channels == 1 && src.channels == 3) src = image::grayscale(src);
  Tensor out({1, channels, img.height, img.width});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        out.at(0, c, y, x) = src.at(x, y, src.channels == 1 ? 0 : c) / 255.0;
  return out;
}

}  // namespace ediv::lens
