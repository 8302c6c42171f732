#include "ediv/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace ediv::data {
namespace {

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double h6 = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(h6) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// Shape membership in local coordinates scaled to unit radius.
bool inside(int shape, double u, double v) {
  switch (shape) {
    case 0: return u * u + v * v <= 1.0;
    case 1: return std::max(std::abs(u), std::abs(v)) <= 0.8;
    case 2: return v >= -0.5 && std::sqrt(3.0) * std::abs(u) - v <= 1.0;
    case 3: return (std::abs(u) <= 0.3 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.3 && std::abs(u) <= 1.0);
    default: {
      const double r = std::sqrt(u * u + v * v);
      return r >= 0.55 && r <= 1.0;
    }
  }
}

void render(double* out, std::size_t S, int label, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const int shape = label / 2, family = label % 2;
  const double hue = family == 0 ? U(rng) * 50.0 / 360.0 : (180.0 + U(rng) * 60.0) / 360.0;
  const auto fg = hsv_to_rgb(hue, 0.6 + 0.4 * U(rng), 0.6 + 0.4 * U(rng));
  const auto bg = hsv_to_rgb(U(rng), 0.3 * U(rng), 0.1 + 0.4 * U(rng));
  const double side = static_cast<double>(S);
  const double radius = side * (0.22 + 0.13 * U(rng));
  const double cx = side / 2 + (U(rng) - 0.5) * (side - 2 * radius) * 0.8;
  const double cy = side / 2 + (U(rng) - 0.5) * (side - 2 * radius) * 0.8;
  const double theta = U(rng) * 2.0 * std::numbers::pi;
  const double ct = std::cos(theta), st = std::sin(theta);
  std::normal_distribution<double> noise(0.0, 0.04);
  const std::size_t P = S * S;
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x) {
      // 2x2 supersampling for soft edges.
      int hits = 0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double px = static_cast<double>(x) + 0.25 + 0.5 * sx - cx;
          const double py = static_cast<double>(y) + 0.25 + 0.5 * sy - cy;
          hits += inside(shape, (ct * px + st * py) / radius, (-st * px + ct * py) / radius);
        }
      const double a = hits / 4.0;
      for (std::size_t c = 0; c < 3; ++c)
        out[c * P + y * S + x] = std::clamp(a * fg[c] + (1 - a) * bg[c] + noise(rng), 0.0, 1.0);
    }
}

Dataset make(std::size_t count, std::size_t S, std::uint64_t seed, std::uint64_t stream) {
  if (count % kSyntheticClasses != 0)
    throw std::invalid_argument("synthetic: sample counts must be multiples of 10, got " + std::to_string(count));
  Dataset d;
  d.classes = kSyntheticClasses;
  d.images = Tensor({count, 3, S, S});
  d.labels.resize(count);
  std::seed_seq order_seq{seed, stream, std::uint64_t{0}};
  std::mt19937_64 order_rng(order_seq);
  for (std::size_t i = 0; i < count; ++i) d.labels[i] = static_cast<int>(i % kSyntheticClasses);
  std::shuffle(d.labels.begin(), d.labels.end(), order_rng);
  for (std::size_t i = 0; i < count; ++i) {
    std::seed_seq seq{seed, stream, static_cast<std::uint64_t>(i + 1)};
    std::mt19937_64 rng(seq);
    render(d.images.data().data() + i * 3 * S * S, S, d.labels[i], rng);
  }
  return d;
}

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("idx " + path.string() + ": truncated header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

std::vector<std::uint32_t> read_idx_header(std::istream& in, const std::filesystem::path& path, unsigned dims) {
  const std::uint32_t magic = read_be32(in, path);
  if ((magic >> 16) != 0 || ((magic >> 8) & 0xff) != 0x08)
    throw std::runtime_error("idx " + path.string() + ": expected unsigned-byte IDX magic");
  if ((magic & 0xff) != dims)
    throw std::runtime_error("idx " + path.string() + ": expected " + std::to_string(dims) + " dimensions, found " +
                             std::to_string(magic & 0xff));
  std::vector<std::uint32_t> shape(dims);
  for (auto& s : shape) {
    s = read_be32(in, path);
    if (s == 0) throw std::runtime_error("idx " + path.string() + ": zero-sized dimension");
  }
  return shape;
}

}  // namespace

Tensor Dataset::batch(const std::vector<std::size_t>& order, std::size_t start, std::size_t count) const {
  Shape s = images.shape();
  const std::size_t per = images.size() / s[0];
  s[0] = count;
  Tensor out(s);
  for (std::size_t i = 0; i < count; ++i)
    std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(order[start + i] * per), per,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  return out;
}

std::vector<int> Dataset::batch_labels(const std::vector<std::size_t>& order, std::size_t start,
                                       std::size_t count) const {
  std::vector<int> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = labels[order[start + i]];
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  count = std::min(count, size());
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  return {batch(order, 0, count), batch_labels(order, 0, count), classes};
}

Split synthetic(const SyntheticSpec& spec) {
  if (spec.size < 8) throw std::invalid_argument("synthetic: image size must be >= 8");
  return {make(spec.train, spec.size, spec.seed, 1), make(spec.val, spec.size, spec.seed, 2)};
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  std::ifstream fi(images, std::ios::binary), fl(labels, std::ios::binary);
  if (!fi) throw std::runtime_error("idx: cannot open " + images.string());
  if (!fl) throw std::runtime_error("idx: cannot open " + labels.string());
  const auto ishape = read_idx_header(fi, images, 3);
  const auto lshape = read_idx_header(fl, labels, 1);
  if (ishape[0] != lshape[0])
    throw std::runtime_error("idx: " + std::to_string(ishape[0]) + " images but " + std::to_string(lshape[0]) +
                             " labels");
  const std::size_t N = ishape[0], H = ishape[1], W = ishape[2];
  std::vector<unsigned char> pix(N * H * W), lab(N);
  if (!fi.read(reinterpret_cast<char*>(pix.data()), static_cast<std::streamsize>(pix.size())))
    throw std::runtime_error("idx " + images.string() + ": truncated pixel data");
  if (!fl.read(reinterpret_cast<char*>(lab.data()), static_cast<std::streamsize>(lab.size())))
    throw std::runtime_error("idx " + labels.string() + ": truncated label data");
  Dataset d;
  d.images = Tensor({N, 1, H, W});
  for (std::size_t i = 0; i < pix.size(); ++i) d.images[i] = pix[i] / 255.0;
  d.labels.assign(lab.begin(), lab.end());
  d.classes = static_cast<std::size_t>(*std::max_element(lab.begin(), lab.end())) + 1;
  return d;
}

Split split_tail(const Dataset& all, std::size_t val) {
  if (val == 0 || val >= all.size()) throw std::invalid_argument("split: validation size must be in (0, N)");
  const std::size_t train = all.size() - val;
  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Split s;
  s.train = {all.batch(order, 0, train), all.batch_labels(order, 0, train), all.classes};
  s.val = {all.batch(order, train, val), all.batch_labels(order, train, val), all.classes};
  return s;
}

}  // namespace ediv::data
