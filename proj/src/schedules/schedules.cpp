#include "ediv/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ediv::schedules {
namespace {

void check_range(std::int64_t t, std::int64_t lo, std::int64_t hi, const char* what) {
  if (t < lo || t > hi)
    throw std::out_of_range(std::string(what) + ": iteration " + std::to_string(t) +
                            " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

}  // namespace

double cosine(const CosineAnneal& s, std::int64_t t) {
  if (s.t_max < 1) throw std::invalid_argument("cosine: t_max must be >= 1");
  check_range(t, 0, s.t_max, "cosine");
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(s.t_max);
  return s.alpha1 + 0.5 * (s.alpha0 - s.alpha1) * (1.0 + std::cos(phase));
}

std::int64_t OneCycle::split() const {
  const auto raw = static_cast<std::int64_t>(std::llround(split_fraction * static_cast<double>(t_total)));
  return std::clamp<std::int64_t>(raw, 1, t_total - 1);
}

LrMomentum one_cycle(const OneCycle& s, std::int64_t t) {
  if (s.t_total < 2) throw std::invalid_argument("one_cycle: t_total must be >= 2");
  if (!(s.eta_min < s.eta_max)) throw std::invalid_argument("one_cycle: need eta_min < eta_max");
  if (!(s.mu_min < s.mu_max)) throw std::invalid_argument("one_cycle: need mu_min < mu_max");
  if (!(s.split_fraction > 0.0 && s.split_fraction < 1.0))
    throw std::invalid_argument("one_cycle: split fraction must lie in (0, 1)");
  check_range(t, 0, s.t_total, "one_cycle");
  const std::int64_t k = s.split();
  if (t <= k) {
    return {cosine({s.eta_min, s.eta_max, k}, t), cosine({s.mu_max, s.mu_min, k}, t)};
  }
  const std::int64_t rest = s.t_total - k;
  return {cosine({s.eta_max, s.eta_min, rest}, t - k), cosine({s.mu_min, s.mu_max, rest}, t - k)};
}

std::int64_t SnapshotSchedule::cycle_length() const {
  if (cycles < 1 || total < cycles)
    throw std::invalid_argument("snapshot: need total >= cycles >= 1");
  return (total + cycles - 1) / cycles;
}

double snapshot_lr(const SnapshotSchedule& s, std::int64_t t) {
  const std::int64_t len = s.cycle_length();
  check_range(t, 1, s.total, "snapshot_lr");
  // A one-iteration cycle has no room to decay.
  if (len == 1) return s.peak;
  return cosine({s.peak, s.floor, len - 1}, (t - 1) % len);
}

}  // namespace ediv::schedules
