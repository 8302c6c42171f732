#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ediv/data.hpp"
#include "ediv/nn/network.hpp"
#include "json.hpp"

namespace ediv::forge {

/// Binary keep-masks for prunable tensors, keyed by parameter name.
struct PruneMask {
  struct Entry {
    std::string name;
    Tensor mask;
  };
  std::vector<Entry> entries;
  double sparsity = 0.5;

  std::size_t ones() const;
  std::size_t total() const;
};

/// Parameter names and shapes of the prunable tensors of a network.
std::vector<std::pair<std::string, Shape>> prunable_shapes(const Network& net);

/// Complementary masks per tensor. The first mask keeps floor(n/2) entries
/// chosen uniformly at random, the second keeps the rest.
std::pair<PruneMask, PruneMask> antirandom_pair(const std::vector<std::pair<std::string, Shape>>& shapes,
                                                std::uint64_t seed);

/// sqrt(sum |a_i - b_i|) over binary vectors. Throws on length mismatch.
double cartesian_distance(std::span<const double> a, std::span<const double> b);
double cartesian_distance(const PruneMask& a, const PruneMask& b);

/// Masked copy of the parent with the masks installed for gradient freezing.
/// Errors name the offending tensor.
Network apply_mask(const Network& parent, const PruneMask& mask);

enum class Origin { parent, snapshot, prune_and_tune };
const char* origin_name(Origin o);

struct ParentConfig {
  int epochs = 20;
  double lr_start = 0.05;
  double lr_end = 1e-5;
  double momentum = 0.9;
  std::size_t batch = 32;
  std::uint64_t seed = 1;
};

struct SnapshotConfig {
  int cycles = 2;
  int epochs_per_cycle = 20;
  double peak = 0.05;
  double floor = 1e-5;
  double momentum = 0.9;
  std::size_t batch = 32;
  std::uint64_t seed = 2;
};

struct PruneTuneConfig {
  int pairs = 1;
  int epochs = 20;
  double eta_min = 1e-5;
  double eta_max = 0.1;
  double mu_min = 0.85;
  double mu_max = 0.95;
  double split = 0.5;
  std::size_t batch = 32;
  std::uint64_t seed = 3;
};

struct ChildSpec {
  Origin origin = Origin::snapshot;
  std::optional<PruneMask> mask;  // present iff origin is prune_and_tune
  nlohmann::ordered_json schedule;
  std::uint64_t seed = 0;
};

struct Child {
  std::string name;
  ChildSpec spec;
  Network net;
  std::filesystem::path checkpoint;  // empty until written
};

struct EnsembleRun {
  std::filesystem::path parent_checkpoint;
  std::vector<Child> children;
  nlohmann::ordered_json metadata;
};

/// Receives progress lines; may be empty.
using Logger = std::function<void(const std::string&)>;

/// Thrown when the training loss stops being finite.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// SGD with momentum, cosine-annealed from lr_start to lr_end over every
/// mini-batch iteration, starting from He-initialized weights.
Network train_parent(const Network& arch, const data::Dataset& train, const ParentConfig& cfg,
                     const Logger& log = {});

/// Continues training the parent on the cyclic schedule and snapshots the
/// network at the end of every cycle.
EnsembleRun snapshot_children(const Network& parent, const data::Dataset& train, const SnapshotConfig& cfg,
                              const Logger& log = {});

/// 2 * pairs children: each anti-random pair masks the parent, then every
/// child is tuned on a one-cycle schedule. Children are independent and are
/// tuned on up to `workers` threads.
EnsembleRun prune_tune_children(const Network& parent, const data::Dataset& train, const PruneTuneConfig& cfg,
                                const Logger& log = {}, std::size_t workers = 1);

/// Writes every child's checkpoint to dir/<name>.ediv and records the path.
void save_children(EnsembleRun& run, const std::filesystem::path& dir);

/// JSON manifest: parent path, children with origin, seed, schedule, mask
/// sparsity and checkpoint path, plus run metadata.
nlohmann::ordered_json manifest(const EnsembleRun& run);

/// Mean of the children's softmax outputs. Requires at least one network.
Tensor ensemble_predict(const std::vector<const Network*>& nets, const Tensor& x);
Tensor ensemble_predict(const EnsembleRun& run, const Tensor& x);

/// Fraction of correctly classified samples.
double accuracy(const Network& net, const data::Dataset& d);

}  // namespace ediv::forge
