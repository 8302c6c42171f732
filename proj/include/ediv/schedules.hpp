#pragma once

#include <cstdint>

// Closed-form learning-rate / momentum schedules. All functions are pure and
// throw std::out_of_range for an iteration outside the schedule's domain and
// std::invalid_argument for an inconsistent descriptor.
namespace ediv::schedules {

/// Cosine annealing from alpha0 (t = 0) to alpha1 (t = t_max).
struct CosineAnneal {
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  std::int64_t t_max = 1;
};

double cosine(const CosineAnneal& s, std::int64_t t);

/// Two-phase one-cycle policy. Phase 1 (t in [0, split]) anneals the learning
/// rate eta_min -> eta_max and momentum mu_max -> mu_min; phase 2 reverses both.
/// split = round(split_fraction * t_total), clamped to [1, t_total - 1].
struct OneCycle {
  double eta_min = 1e-5;
  double eta_max = 0.1;
  double mu_min = 0.85;
  double mu_max = 0.95;
  std::int64_t t_total = 2;
  double split_fraction = 0.5;

  std::int64_t split() const;
};

struct LrMomentum {
  double lr;
  double momentum;
};

LrMomentum one_cycle(const OneCycle& s, std::int64_t t);

/// Cyclic cosine schedule over `total` iterations split into `cycles` cycles of
/// length ceil(total / cycles). Iterations are 1-based: the first iteration of
/// each cycle runs at `peak`, the last at `floor`.
struct SnapshotSchedule {
  std::int64_t total = 1;
  std::int64_t cycles = 1;
  double peak = 0.1;
  double floor = 1e-5;

  std::int64_t cycle_length() const;
};

double snapshot_lr(const SnapshotSchedule& s, std::int64_t t);

}  // namespace ediv::schedules
