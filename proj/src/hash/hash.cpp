#include <algorithm>
#include <array>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "ediv/hash.hpp"
#include "ediv/simd/kernels.hpp"

namespace ediv::hash {
namespace {

using image::RasterImage;

std::uint64_t pack(const std::vector<bool>& bits) {
  std::uint64_t out = 0;
  for (bool b : bits) out = (out << 1) | (b ? 1u : 0u);
  return out;
}

std::uint64_t threshold(const std::vector<double>& values, double t) {
  std::vector<bool> bits(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) bits[i] = values[i] > t;
  return pack(bits);
}

}  // namespace

const char* algo_name(Algo a) {
  switch (a) {
    case Algo::ahash: return "ahash";
    case Algo::phash: return "phash";
    case Algo::dhash: return "dhash";
    case Algo::whash: return "whash";
    case Algo::colorhash: return "colorhash";
  }
  return "?";
}

Algo parse_algo(std::string_view tag) {
  for (Algo a : kAllAlgos)
    if (tag == algo_name(a)) return a;
  throw std::invalid_argument("unknown hash algorithm '" + std::string(tag) +
                              "' (expected ahash, phash, dhash, whash or colorhash)");
}

std::string PerceptualHash::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(bits));
  return buf;
}

PerceptualHash PerceptualHash::from_hex(Algo algo, std::string_view hex) {
  if (hex.size() != 16) throw std::invalid_argument("hash hex must have 16 digits, got '" + std::string(hex) + "'");
  std::uint64_t v = 0;
  for (char ch : hex) {
    int d;
    if (ch >= '0' && ch <= '9')
      d = ch - '0';
    else if (ch >= 'a' && ch <= 'f')
      d = ch - 'a' + 10;
    else if (ch >= 'A' && ch <= 'F')
      d = ch - 'A' + 10;
    else
      throw std::invalid_argument("hash hex has a non-hex digit: '" + std::string(hex) + "'");
    v = (v << 4) | static_cast<std::uint64_t>(d);
  }
  return {algo, v};
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty sample");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + mid);
  return lo + (hi - lo) / 2.0;
}

PerceptualHash ahash(const RasterImage& img) {
  const auto small = image::resize(image::grayscale(img), 8, 8);
  const auto& p = small.pixels;
  // Offsetting by p[0] keeps the mean of a constant grid exactly that constant.
  double acc = 0.0;
  for (double v : p) acc += v - p[0];
  return {Algo::ahash, threshold(p, p[0] + acc / 64.0)};
}

PerceptualHash phash(const RasterImage& img) {
  const auto small = image::resize(image::grayscale(img), 32, 32);
  const Block coeffs = dct2(Block{32, small.pixels});
  std::vector<double> low(64);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c) low[r * 8 + c] = coeffs.at(r, c);
  return {Algo::phash, threshold(low, median(low))};
}

PerceptualHash dhash(const RasterImage& img) {
  const auto small = image::resize(image::grayscale(img), 9, 8);
  std::vector<bool> bits;
  bits.reserve(64);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) bits.push_back(small.at(x + 1, y) > small.at(x, y));
  return {Algo::dhash, pack(bits)};
}

PerceptualHash whash(const RasterImage& img) {
  const auto small = image::resize(image::grayscale(img), 64, 64);
  const auto bands = haar_dwt2(small, 3);
  return {Algo::whash, threshold(bands.approx, median(bands.approx))};
}

PerceptualHash colorhash(const RasterImage& img) {
  if (img.channels != 3)
    throw std::invalid_argument("colorhash needs a 3-channel image; use ahash for grayscale input");
  const double scale = img.range == image::Range::byte ? 255.0 : 1.0;
  std::array<std::uint64_t, 8> counts{};  // black, gray, hue bins 0..5
  const std::size_t total = img.width * img.height;
  for (std::size_t i = 0; i < total; ++i) {
    const auto hsv = image::hsv_pixel(img.pixels[i * 3] / scale, img.pixels[i * 3 + 1] / scale,
                                      img.pixels[i * 3 + 2] / scale);
    if (hsv.value < 0.25)
      ++counts[0];
    else if (hsv.saturation < 0.10)
      ++counts[1];
    else
      ++counts[2 + std::min<std::size_t>(static_cast<std::size_t>(hsv.hue6), 5)];
  }
  std::uint64_t out = 0;
  for (std::uint64_t c : counts) out = (out << 8) | (c * 255 / total);
  return {Algo::colorhash, out};
}

PerceptualHash compute(Algo algo, const RasterImage& img) {
  switch (algo) {
    case Algo::ahash: return ahash(img);
    case Algo::phash: return phash(img);
    case Algo::dhash: return dhash(img);
    case Algo::whash: return whash(img);
    case Algo::colorhash: return colorhash(img);
  }
  throw std::invalid_argument("unknown hash algorithm");
}

int hamming_bits(std::uint64_t a, std::uint64_t b) {
  return static_cast<int>(simd::xor_popcount(std::span<const std::uint64_t>(&a, 1), std::span<const std::uint64_t>(&b, 1)));
}

int hamming(const PerceptualHash& a, const PerceptualHash& b) {
  if (a.algo != b.algo)
    throw std::invalid_argument(std::string("cannot compare ") + algo_name(a.algo) + " with " + algo_name(b.algo));
  return hamming_bits(a.bits, b.bits);
}

}  // namespace ediv::hash
