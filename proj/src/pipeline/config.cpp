#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "ediv/pipeline.hpp"

namespace ediv::pipeline {
namespace {

namespace pt = boost::property_tree;

// Reads typed values from one section and rejects keys nobody asked for.
class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  void finish() const {
    if (!tree_) return;
    for (const auto& [key, value] : *tree_)
      if (!used_.count(key)) throw ConfigError("config: unknown key '" + key + "' in [" + name_ + "]");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    used_.insert(key);
    if (!tree_) return;
    const auto v = tree_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return;
    out = convert<T>(key, *v);
  }

  template <class T>
  void get(const std::string& key, std::optional<T>& out) {
    if (has(key)) out.emplace();
    if (out) get(key, *out);
    used_.insert(key);
  }

  bool has(const std::string& key) const {
    return tree_ && tree_->get_optional<std::string>(pt::ptree::path_type(key, '\0')).has_value();
  }

 private:
  [[noreturn]] void bad(const std::string& key, const std::string& value, const char* what) const {
    throw ConfigError("config: [" + name_ + "] " + key + " = '" + value + "' is not " + what);
  }

  template <class T>
  T convert(const std::string& key, const std::string& s) const {
    if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
      if (s == "false" || s == "0" || s == "no" || s == "off") return false;
      bad(key, s, "a boolean");
    } else if constexpr (std::is_floating_point_v<T>) {
      try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size() && std::isfinite(v)) return static_cast<T>(v);
      } catch (const std::exception&) {
      }
      bad(key, s, "a finite number");
    } else {
      try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used == s.size() && v >= static_cast<long long>(std::numeric_limits<T>::min()) &&
            static_cast<unsigned long long>(std::max(v, 0LL)) <=
                static_cast<unsigned long long>(std::numeric_limits<T>::max()))
          return static_cast<T>(v);
      } catch (const std::exception&) {
      }
      bad(key, s, std::is_signed_v<T> ? "an integer" : "a non-negative integer");
    }
  }

  std::string name_;
  const pt::ptree* tree_;
  std::set<std::string> used_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return (path.is_absolute() || base.empty() ? path : base / path).lexically_normal();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config: " + what);
}

}  // namespace

void ExperimentConfig::reseed(std::uint64_t seed) {
  dataset.synthetic.seed = seed;
  parent.seed = seed * 16 + 1;
  snapshot.seed = seed * 16 + 2;
  prune_tune.seed = seed * 16 + 3;
  viz.config.seed = seed * 16 + 4;
  saliency.config.seed = seed * 16 + 5;
}

void ExperimentConfig::validate() const {
  if (dataset.kind == DatasetConfig::Kind::synthetic) {
    const auto& s = dataset.synthetic;
    require(s.train > 0 && s.train % data::kSyntheticClasses == 0, "[dataset] train must be a positive multiple of 10");
    require(s.val > 0 && s.val % data::kSyntheticClasses == 0, "[dataset] val must be a positive multiple of 10");
    require(s.size >= 8 && s.size % 4 == 0, "[dataset] size must be a multiple of 4 and at least 8");
  } else {
    for (const auto& p : {dataset.images, dataset.labels})
      require(!p.empty() && std::filesystem::is_regular_file(p), "[dataset] file not found: '" + p.string() + "'");
    const bool split_files = !dataset.val_images.empty() || !dataset.val_labels.empty();
    if (split_files) {
      for (const auto& p : {dataset.val_images, dataset.val_labels})
        require(!p.empty() && std::filesystem::is_regular_file(p), "[dataset] file not found: '" + p.string() + "'");
      require(dataset.val_count == 0, "[dataset] val_count conflicts with val_images/val_labels");
    } else {
      require(dataset.val_count > 0, "[dataset] idx input needs val_images/val_labels or val_count");
    }
  }
  require(model == "desk", "[model] unknown preset '" + model + "' (available: desk)");
  require(parent.epochs >= 1 && parent.batch >= 1, "[parent] epochs and batch must be >= 1");
  require(parent.lr_start > 0 && parent.lr_end > 0, "[parent] learning rates must be positive");
  require(snapshot.cycles >= 1 && snapshot.epochs_per_cycle >= 1 && snapshot.batch >= 1,
          "[snapshot] cycles, epochs_per_cycle and batch must be >= 1");
  require(snapshot.peak > 0 && snapshot.floor > 0 && snapshot.floor <= snapshot.peak,
          "[snapshot] need 0 < floor_lr <= peak_lr");
  require(prune_tune.pairs >= 1 && prune_tune.epochs >= 0 && prune_tune.batch >= 1,
          "[prune_tune] pairs and batch must be >= 1, epochs >= 0");
  require(prune_tune.eta_min > 0 && prune_tune.eta_min <= prune_tune.eta_max, "[prune_tune] need 0 < eta_min <= eta_max");
  require(prune_tune.mu_min <= prune_tune.mu_max, "[prune_tune] need mu_min <= mu_max");
  require(prune_tune.split > 0 && prune_tune.split < 1, "[prune_tune] split must lie in (0, 1)");
  for (double m : {parent.momentum, snapshot.momentum, prune_tune.mu_min, prune_tune.mu_max})
    require(m >= 0 && m < 1, "momentum values must lie in [0, 1)");
  try {
    viz.config.validate();
    saliency.config.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  require(saliency.max_images >= 1, "[saliency] max_images must be >= 1");
  require(!output.empty(), "[run] output must not be empty");
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  // Full-line comments and inline comments introduced by whitespace + '#' or ';'.
  std::string stripped;
  {
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
      const auto b = line.find_first_not_of(" \t");
      if (b != std::string::npos && (line[b] == '#' || line[b] == ';')) line.clear();
      for (std::size_t i = 1; i < line.size(); ++i)
        if ((line[i] == '#' || line[i] == ';') && (line[i - 1] == ' ' || line[i - 1] == '\t')) {
          line.resize(i);
          break;
        }
      stripped += line + '\n';
    }
  }
  pt::ptree tree;
  try {
    std::istringstream in(stripped);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: line " + std::to_string(e.line()) + ": " + e.message());
  }
  static const std::set<std::string> known{"run", "dataset", "model", "parent", "snapshot", "prune_tune", "viz",
                                           "saliency"};
  // The INI reader drops empty sections, so headers are checked on the raw text.
  {
    std::istringstream lines(stripped);
    for (std::string line; std::getline(lines, line);) {
      const auto b = line.find_first_not_of(" \t");
      if (b == std::string::npos || line[b] != '[') continue;
      const auto e = line.find(']', b);
      const std::string name = e == std::string::npos ? std::string{} : line.substr(b + 1, e - b - 1);
      if (!name.empty() && !known.count(name)) throw ConfigError("config: unknown section [" + name + "]");
    }
  }
  for (const auto& [name, sub] : tree) {
    if (!known.count(name))
      throw ConfigError(sub.empty() ? "config: key '" + name + "' outside any section"
                                    : "config: unknown section [" + name + "]");
  }
  auto section = [&](const std::string& name) {
    const auto it = tree.find(name);
    return Section(name, it == tree.not_found() ? nullptr : &it->second);
  };

  ExperimentConfig cfg;
  {
    Section s = section("run");
    std::optional<std::uint64_t> seed;
    s.get("seed", seed);
    if (seed) cfg.reseed(*seed);
    std::string out = cfg.output.string();
    s.get("output", out);
    cfg.output = resolve(base_dir, out);
    s.get("workers", cfg.workers);
    s.finish();
  }
  {
    Section s = section("dataset");
    std::string kind = "synthetic", images, labels, val_images, val_labels;
    s.get("kind", kind);
    if (kind == "synthetic") cfg.dataset.kind = DatasetConfig::Kind::synthetic;
    else if (kind == "idx") cfg.dataset.kind = DatasetConfig::Kind::idx;
    else throw ConfigError("config: [dataset] kind must be 'synthetic' or 'idx', got '" + kind + "'");
    s.get("train", cfg.dataset.synthetic.train);
    s.get("val", cfg.dataset.synthetic.val);
    s.get("size", cfg.dataset.synthetic.size);
    s.get("seed", cfg.dataset.synthetic.seed);
    s.get("images", images);
    s.get("labels", labels);
    s.get("val_images", val_images);
    s.get("val_labels", val_labels);
    s.get("val_count", cfg.dataset.val_count);
    cfg.dataset.images = resolve(base_dir, images);
    cfg.dataset.labels = resolve(base_dir, labels);
    cfg.dataset.val_images = resolve(base_dir, val_images);
    cfg.dataset.val_labels = resolve(base_dir, val_labels);
    s.finish();
  }
  {
    Section s = section("model");
    s.get("preset", cfg.model);
    s.finish();
  }
  {
    Section s = section("parent");
    auto& p = cfg.parent;
    s.get("epochs", p.epochs);
    s.get("lr_start", p.lr_start);
    s.get("lr_end", p.lr_end);
    s.get("momentum", p.momentum);
    s.get("batch", p.batch);
    s.get("seed", p.seed);
    s.finish();
  }
  {
    Section s = section("snapshot");
    auto& p = cfg.snapshot;
    s.get("cycles", p.cycles);
    s.get("epochs_per_cycle", p.epochs_per_cycle);
    s.get("peak_lr", p.peak);
    s.get("floor_lr", p.floor);
    s.get("momentum", p.momentum);
    s.get("batch", p.batch);
    s.get("seed", p.seed);
    s.finish();
  }
  {
    Section s = section("prune_tune");
    auto& p = cfg.prune_tune;
    s.get("pairs", p.pairs);
    s.get("epochs", p.epochs);
    s.get("eta_min", p.eta_min);
    s.get("eta_max", p.eta_max);
    s.get("mu_min", p.mu_min);
    s.get("mu_max", p.mu_max);
    s.get("split", p.split);
    s.get("batch", p.batch);
    s.get("seed", p.seed);
    s.finish();
  }
  {
    Section s = section("viz");
    auto& v = cfg.viz.config;
    s.get("layer", cfg.viz.layer);
    s.get("channels", cfg.viz.channels);
    s.get("steps", v.steps);
    s.get("lr", v.lr);
    s.get("jitter1", v.jitter1);
    s.get("scale_min", v.scale_min);
    s.get("scale_max", v.scale_max);
    s.get("rotate_deg", v.rotate_deg);
    s.get("jitter2", v.jitter2);
    s.get("augment", v.augment);
    s.get("seed", v.seed);
    s.finish();
  }
  {
    Section s = section("saliency");
    auto& v = cfg.saliency.config;
    s.get("samples", v.samples);
    s.get("sigma", v.sigma);
    s.get("seed", v.seed);
    s.get("max_images", cfg.saliency.max_images);
    s.get("saved", cfg.saliency.saved);
    s.finish();
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

nlohmann::ordered_json canonical(const ExperimentConfig& cfg) {
  using J = nlohmann::ordered_json;
  J dataset;
  if (cfg.dataset.kind == DatasetConfig::Kind::synthetic) {
    const auto& s = cfg.dataset.synthetic;
    dataset = {{"kind", "synthetic"}, {"train", s.train}, {"val", s.val}, {"size", s.size}, {"seed", s.seed}};
  } else {
    dataset = {{"kind", "idx"},
               {"images", cfg.dataset.images.filename().string()},
               {"labels", cfg.dataset.labels.filename().string()},
               {"val_images", cfg.dataset.val_images.filename().string()},
               {"val_labels", cfg.dataset.val_labels.filename().string()},
               {"val_count", cfg.dataset.val_count}};
  }
  const auto& p = cfg.parent;
  const auto& s = cfg.snapshot;
  const auto& t = cfg.prune_tune;
  const auto& v = cfg.viz.config;
  const auto& g = cfg.saliency.config;
  return J{{"dataset", dataset},
           {"model", {{"preset", cfg.model}}},
           {"parent",
            {{"epochs", p.epochs},
             {"lr_start", p.lr_start},
             {"lr_end", p.lr_end},
             {"momentum", p.momentum},
             {"batch", p.batch},
             {"seed", p.seed}}},
           {"snapshot",
            {{"cycles", s.cycles},
             {"epochs_per_cycle", s.epochs_per_cycle},
             {"peak_lr", s.peak},
             {"floor_lr", s.floor},
             {"momentum", s.momentum},
             {"batch", s.batch},
             {"seed", s.seed}}},
           {"prune_tune",
            {{"pairs", t.pairs},
             {"epochs", t.epochs},
             {"eta_min", t.eta_min},
             {"eta_max", t.eta_max},
             {"mu_min", t.mu_min},
             {"mu_max", t.mu_max},
             {"split", t.split},
             {"batch", t.batch},
             {"seed", t.seed}}},
           {"viz",
            {{"layer", cfg.viz.layer ? J(*cfg.viz.layer) : J(nullptr)},
             {"channels", cfg.viz.channels},
             {"steps", v.steps},
             {"lr", v.lr},
             {"jitter1", v.jitter1},
             {"scale_min", v.scale_min},
             {"scale_max", v.scale_max},
             {"rotate_deg", v.rotate_deg},
             {"jitter2", v.jitter2},
             {"augment", v.augment},
             {"seed", v.seed}}},
           {"saliency",
            {{"samples", g.samples},
             {"sigma", g.sigma},
             {"seed", g.seed},
             {"max_images", cfg.saliency.max_images},
             {"saved", cfg.saliency.saved}}}};
}

std::string config_digest(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canonical(cfg).dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string("fnv1a64:") + buf;
}

}  // namespace ediv::pipeline
