#include "ediv/forge.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ediv/nn/checkpoint.hpp"
#include "ediv/nn/ops.hpp"
#include "ediv/nn/optim.hpp"
#include "ediv/parallel.hpp"
#include "ediv/schedules.hpp"

namespace ediv::forge {
namespace {

using Schedule = std::function<schedules::LrMomentum(std::int64_t iteration)>;

std::int64_t iterations_per_epoch(const data::Dataset& d, std::size_t batch) {
  if (batch == 0) throw std::invalid_argument("batch size must be positive");
  if (d.size() == 0) throw std::invalid_argument("training set is empty");
  return static_cast<std::int64_t>((d.size() + batch - 1) / batch);
}

// Runs `epochs` epochs of mini-batch SGD. `iteration` counts mini-batch steps
// across calls; the schedule sees its value before the step.
void run_epochs(Network& net, SgdMomentum& opt, const data::Dataset& d, int epochs, std::size_t batch,
                std::uint64_t seed, std::int64_t& iteration, const Schedule& schedule, const std::string& who,
                const Logger& log) {
  const std::size_t N = d.size();
  std::vector<std::size_t> order(N);
  for (int e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{seed, static_cast<std::uint64_t>(iteration)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    double lr = 0.0;
    for (std::size_t start = 0; start < N; start += batch) {
      const std::size_t n = std::min(batch, N - start);
      const Tensor x = d.batch(order, start, n);
      const auto labels = d.batch_labels(order, start, n);
      Trace t = forward_trace(net, x);
      const Var loss = ops::cross_entropy(t.graph, t.output, labels);
      const double value = t.graph.value(loss)[0];
      if (!std::isfinite(value))
        throw DivergenceError(who + ": training diverged, loss is non-finite at epoch " + std::to_string(e + 1) +
                              " iteration " + std::to_string(iteration));
      const auto pred = ops::argmax_rows(t.graph.value(t.output));
      for (std::size_t i = 0; i < n; ++i) correct += pred[i] == labels[i];
      loss_sum += value * static_cast<double>(n);
      t.graph.backward(loss, Tensor({1}, 1.0));
      std::vector<Tensor> grads;
      grads.reserve(t.params.size());
      for (Var p : t.params) grads.push_back(t.graph.grad(p));
      const auto s = schedule(iteration);
      lr = s.lr;
      try {
        opt.step(net, grads, s.lr, s.momentum);
      } catch (const std::overflow_error& err) {
        throw DivergenceError(who + ": training diverged at epoch " + std::to_string(e + 1) + " iteration " +
                              std::to_string(iteration) + " (" + err.what() + ")");
      }
      ++iteration;
    }
    if (log) {
      std::ostringstream line;
      line << who << " epoch " << (e + 1) << "/" << epochs << " loss " << loss_sum / static_cast<double>(N)
           << " train-acc " << static_cast<double>(correct) / static_cast<double>(N) << " lr " << lr;
      log(line.str());
    }
  }
}

nlohmann::ordered_json mask_summary(const PruneMask& m) {
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) {
    std::size_t ones = 0;
    for (double v : e.mask.values()) ones += v == 1.0;
    tensors.push_back({{"name", e.name}, {"size", e.mask.size()}, {"kept", ones}});
  }
  return {{"target_sparsity", m.sparsity},
          {"kept", m.ones()},
          {"total", m.total()},
          {"sparsity", 1.0 - static_cast<double>(m.ones()) / static_cast<double>(m.total())},
          {"tensors", tensors}};
}

}  // namespace

std::size_t PruneMask::ones() const {
  std::size_t n = 0;
  for (const auto& e : entries)
    for (double v : e.mask.values()) n += v == 1.0;
  return n;
}

std::size_t PruneMask::total() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.mask.size();
  return n;
}

std::vector<std::pair<std::string, Shape>> prunable_shapes(const Network& net) {
  std::vector<std::pair<std::string, Shape>> out;
  for (const auto& p : net.params())
    if (p.prunable) out.emplace_back(p.name, p.value.shape());
  return out;
}

std::pair<PruneMask, PruneMask> antirandom_pair(const std::vector<std::pair<std::string, Shape>>& shapes,
                                                std::uint64_t seed) {
  if (shapes.empty()) throw std::invalid_argument("antirandom_pair: no tensors to mask");
  std::mt19937_64 rng(seed);
  PruneMask a, b;
  for (const auto& [name, shape] : shapes) {
    const std::size_t n = shape_size(shape);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    Tensor ma(shape, 0.0), mb(shape, 1.0);
    for (std::size_t i = 0; i < n / 2; ++i) {
      ma[idx[i]] = 1.0;
      mb[idx[i]] = 0.0;
    }
    a.entries.push_back({name, std::move(ma)});
    b.entries.push_back({name, std::move(mb)});
  }
  return {std::move(a), std::move(b)};
}

double cartesian_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cartesian_distance: lengths differ (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return std::sqrt(s);
}

double cartesian_distance(const PruneMask& a, const PruneMask& b) {
  if (a.entries.size() != b.entries.size())
    throw std::invalid_argument("cartesian_distance: masks cover different tensors");
  std::vector<double> fa, fb;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    if (a.entries[i].name != b.entries[i].name)
      throw std::invalid_argument("cartesian_distance: masks cover different tensors");
    fa.insert(fa.end(), a.entries[i].mask.values().begin(), a.entries[i].mask.values().end());
    fb.insert(fb.end(), b.entries[i].mask.values().begin(), b.entries[i].mask.values().end());
  }
  return cartesian_distance(fa, fb);
}

Network apply_mask(const Network& parent, const PruneMask& mask) {
  Network child = parent;
  for (const auto& e : mask.entries) {
    const auto it = std::find_if(child.params().begin(), child.params().end(),
                                 [&](const Parameter& p) { return p.name == e.name; });
    if (it == child.params().end())
      throw std::invalid_argument("apply_mask: network has no parameter '" + e.name + "'");
    child.install_mask(e.name, e.mask);
  }
  child.apply_masks();
  return child;
}

const char* origin_name(Origin o) {
  switch (o) {
    case Origin::parent: return "parent";
    case Origin::snapshot: return "snapshot";
    case Origin::prune_and_tune: return "prune_and_tune";
  }
  return "?";
}

Network train_parent(const Network& arch, const data::Dataset& train, const ParentConfig& cfg, const Logger& log) {
  if (cfg.epochs < 0) throw std::invalid_argument("parent: epochs must be >= 0");
  Network net = arch;
  net.init_he(cfg.seed);
  SgdMomentum opt(net);
  const std::int64_t total = iterations_per_epoch(train, cfg.batch) * cfg.epochs;
  const schedules::CosineAnneal anneal{cfg.lr_start, cfg.lr_end, std::max<std::int64_t>(total - 1, 1)};
  std::int64_t it = 0;
  run_epochs(net, opt, train, cfg.epochs, cfg.batch, cfg.seed, it,
             [&](std::int64_t i) { return schedules::LrMomentum{schedules::cosine(anneal, i), cfg.momentum}; },
             "parent", log);
  return net;
}

EnsembleRun snapshot_children(const Network& parent, const data::Dataset& train, const SnapshotConfig& cfg,
                              const Logger& log) {
  if (cfg.cycles < 1 || cfg.epochs_per_cycle < 1)
    throw std::invalid_argument("snapshot: cycles and epochs per cycle must be >= 1");
  const std::int64_t per_cycle = iterations_per_epoch(train, cfg.batch) * cfg.epochs_per_cycle;
  const schedules::SnapshotSchedule sched{per_cycle * cfg.cycles, cfg.cycles, cfg.peak, cfg.floor};
  nlohmann::ordered_json sched_json = {{"kind", "snapshot"},    {"cycles", cfg.cycles},
                                       {"epochs_per_cycle", cfg.epochs_per_cycle},
                                       {"iterations", sched.total}, {"peak_lr", cfg.peak},
                                       {"floor_lr", cfg.floor},     {"momentum", cfg.momentum},
                                       {"batch", cfg.batch}};
  Network net = parent;
  SgdMomentum opt(net);
  EnsembleRun run;
  std::int64_t it = 0;
  for (int c = 0; c < cfg.cycles; ++c) {
    run_epochs(net, opt, train, cfg.epochs_per_cycle, cfg.batch, cfg.seed, it,
               [&](std::int64_t i) { return schedules::LrMomentum{schedules::snapshot_lr(sched, i + 1), cfg.momentum}; },
               "snapshot cycle " + std::to_string(c + 1), log);
    auto spec_json = sched_json;
    spec_json["cycle"] = c + 1;
    run.children.push_back({"snapshot_" + std::to_string(c + 1),
                            ChildSpec{Origin::snapshot, std::nullopt, spec_json, cfg.seed}, net, {}});
  }
  run.metadata = {{"method", "snapshot"}, {"seed", cfg.seed}, {"schedule", sched_json}};
  return run;
}

EnsembleRun prune_tune_children(const Network& parent, const data::Dataset& train, const PruneTuneConfig& cfg,
                                const Logger& log, std::size_t workers) {
  if (cfg.pairs < 1) throw std::invalid_argument("prune-tune: pairs must be >= 1");
  if (cfg.epochs < 0) throw std::invalid_argument("prune-tune: epochs must be >= 0");
  const std::int64_t total = iterations_per_epoch(train, cfg.batch) * cfg.epochs;
  const schedules::OneCycle cycle{cfg.eta_min, cfg.eta_max, cfg.mu_min, cfg.mu_max,
                                  std::max<std::int64_t>(total - 1, 2), cfg.split};
  if (total > 0) schedules::one_cycle(cycle, 0);  // validates the descriptor up front
  const nlohmann::ordered_json sched_json = {{"kind", "one_cycle"}, {"epochs", cfg.epochs},
                                             {"iterations", total},  {"eta_min", cfg.eta_min},
                                             {"eta_max", cfg.eta_max}, {"mu_min", cfg.mu_min},
                                             {"mu_max", cfg.mu_max},   {"split", cfg.split},
                                             {"batch", cfg.batch}};
  EnsembleRun run;
  const auto shapes = prunable_shapes(parent);
  for (int p = 0; p < cfg.pairs; ++p) {
    const std::uint64_t mask_seed = cfg.seed + static_cast<std::uint64_t>(p);
    auto [a, b] = antirandom_pair(shapes, mask_seed);
    const std::string base = "prune_tune_" + std::to_string(p + 1);
    for (auto* m : {&a, &b}) {
      const bool first = m == &a;
      run.children.push_back({base + (first ? "a" : "b"),
                              ChildSpec{Origin::prune_and_tune, *m, sched_json, mask_seed}, apply_mask(parent, *m),
                              {}});
    }
  }

  std::mutex log_mutex;
  const Logger safe_log = log ? Logger([&](const std::string& s) {
    std::lock_guard lock(log_mutex);
    log(s);
  })
                              : Logger{};
  auto tune = [&](Child& child, std::size_t index) {
    SgdMomentum opt(child.net);
    std::int64_t it = 0;
    run_epochs(child.net, opt, train, cfg.epochs, cfg.batch, cfg.seed + 1000 + index, it,
               [&](std::int64_t i) { return schedules::one_cycle(cycle, std::min(i, cycle.t_total)); }, child.name,
               safe_log);
  };
  parallel_for(run.children.size(), workers, [&](std::size_t i) { tune(run.children[i], i); });
  run.metadata = {{"method", "prune_and_tune"}, {"seed", cfg.seed}, {"pairs", cfg.pairs}, {"schedule", sched_json}};
  return run;
}

void save_children(EnsembleRun& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (auto& c : run.children) {
    c.checkpoint = dir / (c.name + ".ediv");
    save_checkpoint(c.net, c.checkpoint);
  }
}

nlohmann::ordered_json manifest(const EnsembleRun& run) {
  nlohmann::ordered_json children = nlohmann::ordered_json::array();
  for (const auto& c : run.children) {
    nlohmann::ordered_json j = {{"name", c.name},
                                {"origin", origin_name(c.spec.origin)},
                                {"seed", c.spec.seed},
                                {"checkpoint", c.checkpoint.generic_string()},
                                {"schedule", c.spec.schedule}};
    if (c.spec.mask) j["mask"] = mask_summary(*c.spec.mask);
    children.push_back(std::move(j));
  }
  return {{"parent", run.parent_checkpoint.generic_string()}, {"metadata", run.metadata}, {"children", children}};
}

Tensor ensemble_predict(const std::vector<const Network*>& nets, const Tensor& x) {
  if (nets.empty()) throw std::invalid_argument("ensemble_predict: need at least one network");
  Tensor mean = predict_proba(*nets[0], x);
  for (std::size_t i = 1; i < nets.size(); ++i) {
    const Tensor p = predict_proba(*nets[i], x);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += p[j];
  }
  if (nets.size() > 1)
    for (double& v : mean.values()) v /= static_cast<double>(nets.size());
  return mean;
}

Tensor ensemble_predict(const EnsembleRun& run, const Tensor& x) {
  std::vector<const Network*> nets;
  for (const auto& c : run.children) nets.push_back(&c.net);
  return ensemble_predict(nets, x);
}

double accuracy(const Network& net, const data::Dataset& d) {
  const auto pred = ops::argmax_rows(predict_proba(net, d.images));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == d.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace ediv::forge
