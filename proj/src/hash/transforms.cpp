#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ediv/hash.hpp"

namespace ediv::hash {
namespace {

// basis[k * n + j] = s_k cos(pi (2j + 1) k / 2n)
std::vector<double> dct_basis(std::size_t n) {
  std::vector<double> basis(n * n);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      basis[k * n + j] = (k == 0 ? s0 : sk) *
                         std::cos(std::numbers::pi * static_cast<double>((2 * j + 1) * k) / static_cast<double>(2 * n));
  return basis;
}

// Forward 1D transform of x[0], x[stride], ... into out[...]. AC terms are
// computed on x - x[0], which is exact zero for constant input.
void dct1(const std::vector<double>& basis, std::size_t n, const double* x, std::size_t stride, double* out,
          std::size_t out_stride) {
  const double x0 = x[0];
  double dc = 0.0;
  for (std::size_t j = 0; j < n; ++j) dc += x[j * stride];
  out[0] = basis[0] * dc;
  for (std::size_t k = 1; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += basis[k * n + j] * (x[j * stride] - x0);
    out[k * out_stride] = acc;
  }
}

void idct1(const std::vector<double>& basis, std::size_t n, const double* x, std::size_t stride, double* out,
           std::size_t out_stride) {
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += basis[k * n + j] * x[k * stride];
    out[j * out_stride] = acc;
  }
}

void check_block(const Block& b, const char* what) {
  if (b.n < 2) throw std::invalid_argument(std::string(what) + ": block side must be >= 2");
  if (b.v.size() != b.n * b.n) throw std::invalid_argument(std::string(what) + ": block buffer size mismatch");
}

template <class F>
Block separable(const Block& b, F transform) {
  const std::size_t n = b.n;
  const auto basis = dct_basis(n);
  Block rows{n, std::vector<double>(n * n)};
  for (std::size_t r = 0; r < n; ++r) transform(basis, n, &b.v[r * n], 1, &rows.v[r * n], 1);
  Block out{n, std::vector<double>(n * n)};
  for (std::size_t c = 0; c < n; ++c) transform(basis, n, &rows.v[c], n, &out.v[c], n);
  return out;
}

}  // namespace

Block dct2(const Block& b) {
  check_block(b, "dct2");
  return separable(b, dct1);
}

Block idct2(const Block& b) {
  check_block(b, "idct2");
  return separable(b, idct1);
}

HaarBands haar_dwt2(const image::RasterImage& gray, int levels) {
  if (gray.channels != 1) throw std::invalid_argument("haar_dwt2: expected a single-channel image");
  if (levels < 1) throw std::invalid_argument("haar_dwt2: levels must be >= 1");
  const std::size_t div = std::size_t{1} << levels;
  if (gray.width % div != 0 || gray.height % div != 0)
    throw std::invalid_argument("haar_dwt2: " + std::to_string(gray.width) + "x" + std::to_string(gray.height) +
                                " is not divisible by 2^" + std::to_string(levels));
  HaarBands out;
  std::size_t w = gray.width, h = gray.height;
  std::vector<double> a = gray.pixels;
  for (int level = 0; level < levels; ++level) {
    const std::size_t hw = w / 2, hh = h / 2;
    HaarBands::Detail d{hw, hh, std::vector<double>(hw * hh), std::vector<double>(hw * hh),
                        std::vector<double>(hw * hh)};
    std::vector<double> next(hw * hh);
    for (std::size_t y = 0; y < hh; ++y) {
      for (std::size_t x = 0; x < hw; ++x) {
        const double p00 = a[(2 * y) * w + 2 * x], p01 = a[(2 * y) * w + 2 * x + 1];
        const double p10 = a[(2 * y + 1) * w + 2 * x], p11 = a[(2 * y + 1) * w + 2 * x + 1];
        const std::size_t i = y * hw + x;
        next[i] = ((p00 + p01) + (p10 + p11)) / 2.0;
        d.h[i] = ((p00 + p01) - (p10 + p11)) / 2.0;
        d.v[i] = ((p00 - p01) + (p10 - p11)) / 2.0;
        d.d[i] = ((p00 - p01) - (p10 - p11)) / 2.0;
      }
    }
    out.details.push_back(std::move(d));
    a = std::move(next);
    w = hw;
    h = hh;
  }
  out.width = w;
  out.height = h;
  out.approx = std::move(a);
  return out;
}

}  // namespace ediv::hash
