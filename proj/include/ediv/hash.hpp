#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ediv/image.hpp"

namespace ediv::hash {

// ---- transforms -----------------------------------------------------------

/// Square row-major block of side n.
struct Block {
  std::size_t n = 0;
  std::vector<double> v;
  double& at(std::size_t r, std::size_t c) { return v[r * n + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * n + c]; }
};

/// Orthonormal 2D DCT-II. A constant block yields exactly zero AC terms.
Block dct2(const Block& b);
/// Inverse of dct2 (orthonormal DCT-III).
Block idct2(const Block& b);

/// Orthonormal 2D Haar analysis. Level k halves the approximation band;
/// details[k] holds the (horizontal, vertical, diagonal) bands of level k+1.
struct HaarBands {
  std::size_t width = 0, height = 0;  // of the final approximation band
  std::vector<double> approx;
  struct Detail {
    std::size_t width, height;
    std::vector<double> h, v, d;
  };
  std::vector<Detail> details;
};

/// Requires a single-channel image whose sides are divisible by 2^levels.
HaarBands haar_dwt2(const image::RasterImage& gray, int levels);

// ---- hashes ---------------------------------------------------------------

enum class Algo { ahash, phash, dhash, whash, colorhash };

const char* algo_name(Algo a);
/// Throws std::invalid_argument for an unknown tag.
Algo parse_algo(std::string_view tag);
inline constexpr Algo kAllAlgos[] = {Algo::ahash, Algo::phash, Algo::dhash, Algo::whash, Algo::colorhash};
inline constexpr Algo kGrayAlgos[] = {Algo::ahash, Algo::phash, Algo::dhash, Algo::whash};

/// 64 bits, first bit of the row-major bit sequence in the MSB.
struct PerceptualHash {
  Algo algo;
  std::uint64_t bits;

  /// 16 lowercase hex digits.
  std::string hex() const;
  static PerceptualHash from_hex(Algo algo, std::string_view hex);
  bool operator==(const PerceptualHash&) const = default;
};

PerceptualHash ahash(const image::RasterImage& img);
PerceptualHash phash(const image::RasterImage& img);
PerceptualHash dhash(const image::RasterImage& img);
PerceptualHash whash(const image::RasterImage& img);
/// Bytes from MSB: black, gray, hue bins 0..5, each floor(fraction * 255).
PerceptualHash colorhash(const image::RasterImage& img);

PerceptualHash compute(Algo algo, const image::RasterImage& img);

/// Throws std::invalid_argument when the tags differ.
int hamming(const PerceptualHash& a, const PerceptualHash& b);
/// Tag-free distance for hashes parsed from bare hex strings.
int hamming_bits(std::uint64_t a, std::uint64_t b);

/// Median of a sample; the mean of the two middle values for even sizes.
double median(std::vector<double> values);

}  // namespace ediv::hash
