// Acceptance harness: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Exit status is 0 only when every criterion passes.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ediv/diversity.hpp"
#include "ediv/forge.hpp"
#include "ediv/hash.hpp"
#include "ediv/lens.hpp"
#include "ediv/nn/checkpoint.hpp"
#include "ediv/parallel.hpp"
#include "ediv/pipeline.hpp"
#include "ediv/schedules.hpp"
#include "gradcheck.hpp"
#include "images.hpp"

using namespace ediv;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr double kGradRelTol = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr double kScheduleTol = 1e-12;
constexpr double kIdentityTol = 1e-10;
constexpr double kRoundtripTol = 1e-8;
constexpr double kVizImprovedFraction = 0.90;
constexpr double kNoiseMeanCenter = 32.0, kNoiseMeanSlack = 3.0;
constexpr double kNoisyMedianMax = 6.0;
constexpr double kRunSeconds = 30.0 * 60.0;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed sub-checks; the first few are reported.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (failures_++ < 3) notes_ += (notes_.empty() ? "" : "; ") + what;
  }
  bool ok() const { return failures_ == 0; }
  std::string failures() const {
    return std::to_string(failures_) + " failed check(s): " + notes_;
  }

 private:
  int failures_ = 0;
  std::string notes_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream o;
  o.precision(precision);
  o << v;
  return o.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Outcome finish(const Checks& c, std::string detail) {
  if (!c.ok()) detail += "; " + c.failures();
  return {c.ok(), std::move(detail)};
}

// ---- 1 -------------------------------------------------------------------

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t entries = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = testing::gradcheck_random_instance(seed);
    worst = std::max(worst, r.max_rel_error);
    entries += r.params_checked;
  }
  const double secs = seconds_since(t0);
  return {worst < kGradRelTol && secs < kGradSeconds,
          "100 nets, " + std::to_string(entries) + " entries, max rel err " + fmt(worst) + " (< " + fmt(kGradRelTol) +
              "), " + fmt(secs, 3) + " s (< " + fmt(kGradSeconds) + ")"};
}

// ---- 2 -------------------------------------------------------------------

Outcome antirandom() {
  Checks c;
  std::mt19937_64 rng(2024);
  auto dim = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  for (int pair = 0; pair < 1000; ++pair) {
    std::vector<std::pair<std::string, Shape>> shapes;
    const std::size_t tensors = dim(1, 4);
    std::size_t n = 0;
    for (std::size_t t = 0; t < tensors; ++t) {
      Shape s;
      const std::size_t rank = dim(1, 4);
      for (std::size_t r = 0; r < rank; ++r) s.push_back(dim(1, 6));
      s[0] *= 2;  // even element count per tensor
      std::size_t count = 1;
      for (auto d : s) count *= d;
      n += count;
      shapes.emplace_back("t" + std::to_string(t), s);
    }
    const auto [a, b] = forge::antirandom_pair(shapes, static_cast<std::uint64_t>(pair));
    for (std::size_t t = 0; t < tensors; ++t) {
      const auto& ma = a.entries[t].mask.values();
      const auto& mb = b.entries[t].mask.values();
      std::size_t ones = 0;
      bool complement = ma.size() == mb.size();
      for (std::size_t i = 0; complement && i < ma.size(); ++i) {
        complement = (ma[i] == 0.0 || ma[i] == 1.0) && mb[i] == 1.0 - ma[i];
        ones += ma[i] == 1.0;
      }
      c.expect(complement, "pair " + std::to_string(pair) + " tensor " + std::to_string(t) + " not a complement");
      c.expect(2 * ones == ma.size(), "pair " + std::to_string(pair) + " tensor " + std::to_string(t) + " not 50%");
    }
    c.expect(forge::cartesian_distance(a, b) == std::sqrt(static_cast<double>(n)),
             "pair " + std::to_string(pair) + " distance != sqrt(n)");
  }

  // Exhaustive: every bitstring against its complement, and the complement as
  // the unique farthest point from it.
  std::size_t strings = 0;
  for (std::size_t len = 1; len <= 12; ++len) {
    const std::uint32_t count = 1u << len;
    std::vector<std::vector<double>> all(count, std::vector<double>(len));
    for (std::uint32_t m = 0; m < count; ++m)
      for (std::size_t i = 0; i < len; ++i) all[m][i] = (m >> i) & 1u;
    const double root = std::sqrt(static_cast<double>(len));
    for (std::uint32_t m = 0; m < count; ++m) {
      ++strings;
      const std::uint32_t comp = ~m & (count - 1);
      c.expect(forge::cartesian_distance(all[m], all[comp]) == root, "len " + std::to_string(len) + " complement");
      if (len > 8) continue;  // the quadratic scan is redundant above this size
      for (std::uint32_t o = 0; o < count; ++o) {
        const double d = forge::cartesian_distance(all[m], all[o]);
        const double oracle = std::sqrt(static_cast<double>(std::popcount(m ^ o)));
        c.expect(d == oracle, "len " + std::to_string(len) + " popcount oracle");
        c.expect(o == comp ? d == root : d < root, "len " + std::to_string(len) + " farthest point");
      }
    }
  }
  return finish(c, "1000 pairs complement, 50% per tensor, sqrt(n); " + std::to_string(strings) +
                       " exhaustive bitstrings (len <= 12)");
}

// ---- 3 -------------------------------------------------------------------

double cosine_ref(double a0, double a1, double t, double t_max) {
  return a1 + 0.5 * (a0 - a1) * (1.0 + std::cos(std::numbers::pi * t / t_max));
}

Outcome schedule_endpoints() {
  Checks c;
  std::size_t points = 0;
  auto near = [&](double got, double want, const std::string& what) {
    ++points;
    c.expect(std::abs(got - want) <= kScheduleTol, what + ": " + fmt(got, 17) + " vs " + fmt(want, 17));
  };

  for (std::int64_t t_max : {1, 2, 9, 100, 781}) {
    const schedules::CosineAnneal s{0.05, 1e-5, t_max};
    const std::string tag = "cosine T=" + std::to_string(t_max);
    near(schedules::cosine(s, 0), 0.05, tag + " start");
    near(schedules::cosine(s, t_max), 1e-5, tag + " end");
    if (t_max % 2 == 0) near(schedules::cosine(s, t_max / 2), (0.05 + 1e-5) / 2, tag + " mid");
    for (std::int64_t t = 0; t <= t_max; t += std::max<std::int64_t>(1, t_max / 7))
      near(schedules::cosine(s, t), cosine_ref(0.05, 1e-5, t, t_max), tag + " t=" + std::to_string(t));
  }

  for (std::int64_t total : {2, 3, 10, 100, 1250}) {
    const schedules::OneCycle s{1e-5, 0.1, 0.85, 0.95, total, 0.5};
    const std::int64_t k = s.split();
    const std::string tag = "one-cycle T=" + std::to_string(total);
    auto both = [&](std::int64_t t, double lr, double mu, const std::string& where) {
      const auto v = schedules::one_cycle(s, t);
      near(v.lr, lr, tag + " lr " + where);
      near(v.momentum, mu, tag + " momentum " + where);
    };
    both(0, 1e-5, 0.95, "start");
    both(k, 0.1, 0.85, "split");
    both(total, 1e-5, 0.95, "end");
    if (k % 2 == 0) both(k / 2, (1e-5 + 0.1) / 2, 0.9, "phase-1 mid");
    if ((total - k) % 2 == 0) both(k + (total - k) / 2, (1e-5 + 0.1) / 2, 0.9, "phase-2 mid");
    for (std::int64_t t = 0; t <= total; ++t) {
      const bool up = t <= k;
      const double lr = up ? cosine_ref(1e-5, 0.1, t, k) : cosine_ref(0.1, 1e-5, t - k, total - k);
      const double mu = up ? cosine_ref(0.95, 0.85, t, k) : cosine_ref(0.85, 0.95, t - k, total - k);
      if (t % std::max<std::int64_t>(1, total / 5) == 0) both(t, lr, mu, "t=" + std::to_string(t));
    }
  }

  for (auto [total, cycles] : std::vector<std::pair<std::int64_t, std::int64_t>>{
           {80, 2}, {100, 3}, {7, 7}, {1250, 2}, {101, 4}, {9, 2}}) {
    const schedules::SnapshotSchedule s{total, cycles, 0.1, 1e-5};
    const std::int64_t len = (total + cycles - 1) / cycles;
    const std::string tag = "snapshot T=" + std::to_string(total) + " M=" + std::to_string(cycles);
    c.expect(s.cycle_length() == len, tag + " cycle length");
    auto closed = [&](std::int64_t t) {
      const std::int64_t r = (t - 1) % len;
      return len == 1 ? 0.1 : cosine_ref(0.1, 1e-5, static_cast<double>(r), static_cast<double>(len - 1));
    };
    near(schedules::snapshot_lr(s, 1), 0.1, tag + " start");
    if (len > 1) near(schedules::snapshot_lr(s, len), 1e-5, tag + " first cycle end");
    if (len + 1 <= total) near(schedules::snapshot_lr(s, len + 1), 0.1, tag + " reset at ceil(T/M)+1");
    for (std::int64_t b = len; b < total; b += len) {
      near(schedules::snapshot_lr(s, b + 1), 0.1, tag + " boundary " + std::to_string(b + 1));
      if (len > 1) near(schedules::snapshot_lr(s, b), 1e-5, tag + " boundary " + std::to_string(b));
    }
    if (len % 2 == 1 && len > 1) near(schedules::snapshot_lr(s, (len + 1) / 2), (0.1 + 1e-5) / 2, tag + " mid");
    near(schedules::snapshot_lr(s, total), closed(total), tag + " end");
    for (std::int64_t t = 1; t <= total; ++t) near(schedules::snapshot_lr(s, t), closed(t), tag);
  }
  return finish(c, std::to_string(points) + " schedule points within " + fmt(kScheduleTol));
}

// ---- 4 -------------------------------------------------------------------

std::vector<double> random_rows(std::mt19937_64& rng, std::size_t rows, std::size_t classes) {
  std::gamma_distribution<double> g(0.5, 1.0);
  std::vector<double> p(rows * classes);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0;
    for (std::size_t k = 0; k < classes; ++k) sum += p[r * classes + k] = g(rng) + 1e-300;
    for (std::size_t k = 0; k < classes; ++k) p[r * classes + k] /= sum;
  }
  return p;
}

Outcome metric_identities() {
  Checks c;
  std::mt19937_64 rng(77);
  auto size = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };

  double min_kl = INFINITY, max_self = 0.0;
  for (int pair = 0; pair < 1000; ++pair) {
    const std::size_t n = size(1, 50), k = size(2, 10);
    auto a = random_rows(rng, n, k), b = random_rows(rng, n, k);
    std::vector<double> probs = a;
    probs.insert(probs.end(), b.begin(), b.end());
    probs.insert(probs.end(), a.begin(), a.end());
    const diversity::PredictionSet set(3, n, k, probs);
    const double kl = diversity::kl_divergence(set, 0, 1);
    min_kl = std::min(min_kl, kl);
    max_self = std::max(max_self, std::abs(diversity::kl_divergence(set, 0, 2)));
    const double pdr = diversity::pdr(set);
    c.expect(pdr >= 0.0 && pdr <= 1.0, "pdr out of [0, 1]");
  }
  c.expect(max_self == 0.0, "kl(f, f) = " + fmt(max_self));
  c.expect(min_kl >= 0.0, "negative kl " + fmt(min_kl));

  // Constructed patterns: model j flips the argmax on the samples whose index
  // has bit j set, so the pairwise disagreement counts are known exactly.
  for (std::size_t n : {1u, 7u, 64u, 500u}) {
    for (std::size_t models : {2u, 3u, 5u}) {
      std::vector<double> probs;
      for (std::size_t m = 0; m < models; ++m)
        for (std::size_t s = 0; s < n; ++s) {
          const bool flip = m > 0 && ((s * 2654435761u) >> (m - 1)) & 1u;
          const std::vector<double> row = flip ? std::vector<double>{0.2, 0.7, 0.1} : std::vector<double>{0.6, 0.3, 0.1};
          probs.insert(probs.end(), row.begin(), row.end());
        }
      const diversity::PredictionSet set(models, n, 3, probs);
      double expect = 0.0;
      std::size_t pairs = 0;
      for (std::size_t i = 0; i < models; ++i)
        for (std::size_t j = i + 1; j < models; ++j, ++pairs) {
          std::size_t differ = 0;
          for (std::size_t s = 0; s < n; ++s) {
            const bool fi = i > 0 && ((s * 2654435761u) >> (i - 1)) & 1u;
            const bool fj = j > 0 && ((s * 2654435761u) >> (j - 1)) & 1u;
            differ += fi != fj;
          }
          const double exact = static_cast<double>(differ) / static_cast<double>(n);
          c.expect(diversity::disagreement(set, i, j) == exact, "disagreement pattern");
          expect += exact;
        }
      c.expect(std::abs(diversity::pdr(set) - expect / static_cast<double>(pairs)) < 1e-15, "pdr pattern");
    }
  }
  const diversity::PredictionSet opposite(2, 2, 2, {1, 0, 0, 1, 0, 1, 1, 0});
  c.expect(diversity::pdr(opposite) == 1.0, "total disagreement");

  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = size(1, 10), n = size(1, 500);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> f(m * n), y(n);
    for (auto& v : y) v = 3.0 * nd(rng);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t s = 0; s < n; ++s) f[i * n + s] = y[s] + 0.5 * nd(rng) + 0.2 * static_cast<double>(i);
    const auto d = diversity::bias_var_covar(f, m, y);
    worst = std::max(worst, std::abs(d.mse - d.identity_rhs()));
  }
  c.expect(worst < kIdentityTol, "identity residual " + fmt(worst));
  return finish(c, "kl(f,f) max " + fmt(max_self) + ", min kl " + fmt(min_kl) + " over 1000 pairs; pdr patterns exact; "
                       "bvc residual " + fmt(worst) + " (< " + fmt(kIdentityTol) + ")");
}

// ---- 5 -------------------------------------------------------------------

Outcome hash_suite() {
  Checks c;
  using hash::Algo;
  const image::RasterImage mid(37, 29, 3, image::Range::byte, 128);
  const image::RasterImage black(16, 16, 3, image::Range::byte, 0);
  image::RasterImage red(16, 16, 3, image::Range::byte, 0);
  for (std::size_t i = 0; i < red.pixels.size(); i += 3) red.pixels[i] = 255;

  c.expect(hash::ahash(mid).bits == 0, "constant ahash");
  c.expect(hash::dhash(mid).bits == 0, "constant dhash");
  c.expect(hash::whash(mid).bits == 0, "constant whash");
  c.expect(hash::phash(mid).bits == 0x8000000000000000ull, "constant phash");
  c.expect(std::popcount(hash::phash(mid).bits) == 1, "constant phash popcount");
  c.expect(hash::colorhash(black).bits == 0xff00000000000000ull, "black colorhash");
  c.expect(hash::colorhash(mid).bits == 0x00ff000000000000ull, "gray colorhash");
  c.expect(hash::colorhash(red).bits == 0x0000ff0000000000ull, "red colorhash");

  // Self-distance and determinism across two independent evaluations.
  std::vector<std::string> first, second;
  for (int pass = 0; pass < 2; ++pass)
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto img = testing::noise_image(500 + s, 48, 3);
      for (Algo a : hash::kAllAlgos) {
        const auto h = hash::compute(a, img);
        c.expect(hash::hamming(h, hash::compute(a, img)) == 0, "self distance");
        (pass == 0 ? first : second).push_back(h.hex());
      }
    }
  c.expect(first == second, "hashes differ between runs");

  std::string detail = "constants ok; noise mean";
  for (Algo a : hash::kGrayAlgos) {
    double total = 0;
    const int pairs = 200;
    for (int s = 0; s < pairs; ++s)
      total += hash::hamming(hash::compute(a, testing::noise_image(2 * s)), hash::compute(a, testing::noise_image(2 * s + 1)));
    const double mean = total / pairs;
    std::vector<double> noisy;
    for (std::uint64_t s = 0; s < 100; ++s) {
      const auto img = testing::natural_image(s);
      noisy.push_back(hash::hamming(hash::compute(a, img), hash::compute(a, testing::add_gaussian_noise(img, 0.01, 1000 + s))));
    }
    const double med = hash::median(noisy);
    c.expect(std::abs(mean - kNoiseMeanCenter) <= kNoiseMeanSlack, std::string(hash::algo_name(a)) + " noise mean " + fmt(mean));
    c.expect(med <= kNoisyMedianMax, std::string(hash::algo_name(a)) + " noisy median " + fmt(med));
    detail += std::string(" ") + hash::algo_name(a) + "=" + fmt(mean) + "/med " + fmt(med);
  }
  return finish(c, detail);
}

// ---- 6 -------------------------------------------------------------------

struct VizCount {
  std::size_t layer = 0, improved = 0, channels = 0;
};

// Maximizes every final-conv channel of the run's parent with the config's
// visualization settings; colors decorrelated with the run's training data.
VizCount parent_viz(const fs::path& run_dir, const pipeline::ExperimentConfig& cfg) {
  const Network parent = load_checkpoint(run_dir / "checkpoints" / "parent.ediv");
  const auto split = pipeline::load_dataset(cfg.dataset);
  const auto color = lens::ColorMatrix::cholesky(split.train.images.shape()[1], lens::channel_covariance(split.train.images));
  VizCount v;
  v.layer = *parent.last_conv_layer();
  v.channels = parent.layer_output_shape(v.layer)[0];
  std::vector<char> improved(v.channels, 0);
  parallel_for(v.channels, resolve_workers(), [&](std::size_t ch) {
    lens::VizConfig vc = cfg.viz.config;
    vc.seed = cfg.viz.config.seed + ch;
    improved[ch] = lens::visualize(parent, {v.layer, ch, lens::Sign::maximize}, vc, color).improved;
  });
  v.improved = static_cast<std::size_t>(std::count(improved.begin(), improved.end(), 1));
  return v;
}

// Pass/fail uses the first run's parent only; `context` parents are reported
// beside it.
Outcome interpretability(const fs::path& run_dir, const pipeline::ExperimentConfig& cfg,
                         const std::vector<std::pair<fs::path, pipeline::ExperimentConfig>>& context) {
  Checks c;
  const Network parent = load_checkpoint(run_dir / "checkpoints" / "parent.ediv");
  const auto split = pipeline::load_dataset(cfg.dataset);

  std::vector<std::size_t> order(split.val.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t identical = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    const Tensor x = split.val.batch(order, i, 1);
    const auto plain = lens::saliency(parent, x);
    const auto smooth = lens::smoothgrad(parent, x, {1, 0.0, 99 + i});
    const bool same = plain.pixels.size() == smooth.pixels.size() &&
                      std::memcmp(plain.pixels.data(), smooth.pixels.data(), plain.pixels.size() * sizeof(double)) == 0;
    identical += same;
  }
  c.expect(identical == 16, "smoothgrad differs from saliency on " + std::to_string(16 - identical) + " images");

  const auto cov = lens::channel_covariance(split.train.images);
  const auto color = lens::ColorMatrix::cholesky(3, cov);
  // Image space: decode(encode(x)) == x for x strictly inside (0, 1). Spectrum
  // space: encode(decode(s)) == s once s holds only coefficients a real
  // signal can carry.
  const std::size_t side = split.val.images.shape()[2];
  double roundtrip = 0.0;
  auto worst = [&](const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) roundtrip = std::max(roundtrip, std::abs(a[i] - b[i]));
  };
  for (std::size_t i = 0; i < 8; ++i) {
    Tensor x = split.val.batch(order, i, 1);
    for (double& v : x.values()) v = 0.01 + 0.98 * v;
    worst(lens::decode(lens::encode(x, color), color).values(), x.values());
    const auto canonical = lens::encode(lens::decode(lens::fourier_param_init(side, side, 3, i, 0.05), color), color);
    const auto again = lens::encode(lens::decode(canonical, color), color);
    worst(again.re, canonical.re);
    worst(again.im, canonical.im);
  }
  c.expect(roundtrip < kRoundtripTol, "roundtrip error " + fmt(roundtrip));

  const VizCount v = parent_viz(run_dir, cfg);
  const double fraction = static_cast<double>(v.improved) / static_cast<double>(v.channels);
  c.expect(fraction >= kVizImprovedFraction, "viz improved fraction " + fmt(fraction));
  std::string others;
  for (const auto& [dir, other_cfg] : context) {
    const VizCount o = parent_viz(dir, other_cfg);
    others += (others.empty() ? "; other parents (not scored): " : ", ") + dir.filename().string() + " " +
              std::to_string(o.improved) + "/" + std::to_string(o.channels);
  }
  return finish(c, "smoothgrad==saliency on " + std::to_string(identical) + "/16; roundtrip " + fmt(roundtrip) +
                       "; viz improved " + std::to_string(v.improved) + "/" + std::to_string(v.channels) + " of layer " +
                       std::to_string(v.layer) + " (>= " + fmt(kVizImprovedFraction) + ")" + others);
}

// ---- 7 and 8 ---------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

struct TimedRun {
  fs::path dir;
  double seconds = 0.0;
  bool ok = false;
};

TimedRun cli_run(const fs::path& ediv, const fs::path& config, const fs::path& out) {
  fs::remove_all(out);
  const std::string cmd = "EDIV_WORKERS=1 " + quote(ediv) + " pipeline run " + quote(config) + " --workers 1 --output " +
                          quote(out) + " > " + quote(out.string() + ".log") + " 2>&1";
  std::cerr << "[acceptance] " << cmd << "\n";
  const auto t0 = Clock::now();
  const int status = std::system(cmd.c_str());
  return {out, seconds_since(t0), status == 0 && fs::exists(out / "report.json")};
}

TimedRun library_run(pipeline::ExperimentConfig cfg, std::uint64_t seed, const fs::path& out) {
  fs::remove_all(out);
  cfg.reseed(seed);
  cfg.output = out;
  std::cerr << "[acceptance] pipeline seed " << seed << " -> " << out << "\n";
  const auto t0 = Clock::now();
  pipeline::run_experiment(cfg, [](const std::string& m) { std::cerr << "  " << m << "\n"; });
  return {out, seconds_since(t0), true};
}

Outcome end_to_end(const std::vector<TimedRun>& runs) {
  Checks c;
  std::map<std::string, std::pair<double, double>> sums;  // algo -> (snapshot, prune_tune)
  std::vector<std::string> order;
  double slowest = 0.0;
  for (const auto& r : runs) {
    c.expect(r.ok, "run failed: " + r.dir.string());
    if (!r.ok) continue;
    slowest = std::max(slowest, r.seconds);
    const auto report = nlohmann::ordered_json::parse(slurp(r.dir / "report.json"));
    const nlohmann::ordered_json* snap = nullptr;
    const nlohmann::ordered_json* prune = nullptr;
    for (const auto& m : report["methods"]) (m["method"] == "snapshot" ? snap : prune) = &m;
    c.expect(snap && prune, "report lacks a method");
    if (!snap || !prune) continue;
    c.expect(report["visualization"]["channels"] == 32, "expected 32 visualized channels");
    for (const auto& [algo, v] : (*snap)["visualization"].items()) {
      if (!sums.count(algo)) order.push_back(algo);
      sums[algo].first += v["mean"].get<double>() / static_cast<double>(runs.size());
      sums[algo].second += (*prune)["visualization"][algo]["mean"].get<double>() / static_cast<double>(runs.size());
    }
  }
  c.expect(order.size() == 5, "expected 5 hash algorithms, got " + std::to_string(order.size()));
  std::size_t wins = 0;
  std::string detail;
  for (const auto& algo : order) {
    const auto [s, p] = sums[algo];
    wins += p >= s;
    detail += algo + " " + fmt(p) + (p >= s ? ">=" : "<") + fmt(s) + ", ";
  }
  c.expect(2 * wins > order.size(), "prune-tune >= snapshot on only " + std::to_string(wins) + " algorithms");
  c.expect(slowest <= kRunSeconds, "slowest run " + fmt(slowest) + " s");
  return finish(c, std::to_string(runs.size()) + " seeds, prune-tune vs snapshot mean hash distance: " + detail +
                       std::to_string(wins) + "/" + std::to_string(order.size()) + " favour prune-tune; slowest run " +
                       fmt(slowest, 4) + " s (<= " + fmt(kRunSeconds) + ")");
}

Outcome determinism(const TimedRun& a, const TimedRun& b) {
  if (!a.ok || !b.ok) return {false, "pipeline run failed, see " + a.dir.string() + ".log"};
  const std::string ra = slurp(a.dir / "report.json"), rb = slurp(b.dir / "report.json");
  const bool same = ra == rb && !ra.empty();
  return {same, std::string(same ? "report.json byte-identical" : "report.json differs") + " across two single-threaded "
                    "CLI runs (" + std::to_string(ra.size()) + " bytes)"};
}

Outcome guarded(const std::function<Outcome()>& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ediv acceptance suite"};
  fs::path config, ediv_cli, work = fs::temp_directory_path() / "ediv_acceptance";
  std::uint64_t seeds = 3;
  std::vector<int> known;
  app.add_option("--config", config, "experiment config for the end-to-end criteria")->required()->check(CLI::ExistingFile);
  app.add_option("--ediv", ediv_cli, "path to the ediv executable")->required()->check(CLI::ExistingFile);
  app.add_option("--work", work, "scratch directory for runs");
  app.add_option("--seeds", seeds, "seeds for the end-to-end criterion; the config seed counts as seed 1")->check(CLI::Range(1, 100));
  app.add_option("--known-failure", known, "criterion numbers whose FAIL does not affect the exit status")
      ->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);
  tune_allocator();
  fs::create_directories(work);

  std::vector<std::pair<std::string, Outcome>> results(8);
  auto record = [&](int index, const std::string& name, const Outcome& o) {
    results[static_cast<std::size_t>(index - 1)] = {name, o};
    std::cerr << "[acceptance] " << name << " done: " << (o.pass ? "PASS" : "FAIL") << "\n";
  };
  record(1, "gradient-oracle", guarded(gradient_oracle));
  record(2, "antirandom", guarded(antirandom));
  record(3, "schedule-endpoints", guarded(schedule_endpoints));
  record(4, "metric-identities", guarded(metric_identities));
  record(5, "hash-suite", guarded(hash_suite));

  // The config's own seed runs through the CLI twice: the pair checks
  // determinism, the first run counts towards the end-to-end criterion and
  // provides the scored parent. Further seeds are 2..N via reseed.
  const auto base = pipeline::load_config(config);
  std::vector<TimedRun> e2e{cli_run(ediv_cli, config, work / "seed_1"), cli_run(ediv_cli, config, work / "seed_1_again")};
  record(8, "determinism", guarded([&] { return determinism(e2e[0], e2e[1]); }));
  e2e.pop_back();
  std::vector<std::pair<fs::path, pipeline::ExperimentConfig>> context;
  record(7, "end-to-end", guarded([&] {
           for (std::uint64_t s = 2; s <= seeds; ++s) {
             auto cfg = base;
             cfg.reseed(s);
             e2e.push_back(library_run(base, s, work / ("seed_" + std::to_string(s))));
             context.emplace_back(e2e.back().dir, cfg);
           }
           return end_to_end(e2e);
         }));
  record(6, "interpretability", guarded([&] { return interpretability(work / "seed_1", base, context); }));

  bool ok = true;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& [name, o] = results[i];
    const bool declared = std::find(known.begin(), known.end(), static_cast<int>(i + 1)) != known.end();
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << name << ": " << o.detail
              << (declared ? (o.pass ? " (declared known failure, now passing)" : " (declared known failure)") : "")
              << "\n";
    ok = ok && (o.pass || declared);
  }
  return ok ? 0 : 1;
}
