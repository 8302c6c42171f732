#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <mutex>

#include "ediv/diversity.hpp"
#include "ediv/hash.hpp"
#include "ediv/nn/checkpoint.hpp"
#include "ediv/npy.hpp"
#include "ediv/parallel.hpp"
#include "ediv/pipeline.hpp"
#include "ediv/png_io.hpp"

namespace ediv::pipeline {
namespace {

using J = nlohmann::ordered_json;
using clk = std::chrono::steady_clock;
namespace fs = std::filesystem;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Wall-clock bookkeeping. Lives only in run_log.json so report.json stays
// byte-identical across reruns.
class RunLog {
 public:
  RunLog(fs::path path, const ExperimentConfig& cfg, std::size_t workers, Logger sink)
      : path_(std::move(path)), sink_(std::move(sink)) {
    doc_ = {{"config_digest", config_digest(cfg)},
            {"workers", workers},
            {"started_at", utc_now()},
            {"finished_at", nullptr},
            {"status", "running"},
            {"failed_stage", nullptr},
            {"error", nullptr},
            {"stages", J::array()},
            {"log", J::array()}};
  }

  void line(const std::string& s) {
    std::lock_guard lock(mutex_);
    doc_["log"].push_back(s);
    if (sink_) sink_(s);
  }

  template <class F>
  auto stage(const std::string& name, F&& body) {
    line("stage " + name);
    const auto t0 = clk::now();
    try {
      if constexpr (std::is_void_v<decltype(body())>) {
        body();
        done(name, t0);
      } else {
        auto result = body();
        done(name, t0);
        return result;
      }
    } catch (const std::exception& e) {
      fail(name, t0, e.what());
      throw StageError(name, e.what());
    }
  }

  void finish() {
    doc_["status"] = "ok";
    doc_["finished_at"] = utc_now();
    write();
  }

 private:
  double seconds(clk::time_point t0) const { return std::chrono::duration<double>(clk::now() - t0).count(); }

  void done(const std::string& name, clk::time_point t0) {
    doc_["stages"].push_back({{"name", name}, {"seconds", seconds(t0)}, {"status", "ok"}});
    write();
  }

  void fail(const std::string& name, clk::time_point t0, const std::string& what) {
    doc_["stages"].push_back({{"name", name}, {"seconds", seconds(t0)}, {"status", "failed"}});
    doc_["status"] = "failed";
    doc_["failed_stage"] = name;
    doc_["error"] = what;
    doc_["finished_at"] = utc_now();
    try {
      write();
    } catch (const std::exception&) {
    }
  }

  void write() {
    std::ofstream out(path_);
    out << doc_.dump(2) << '\n';
  }

  fs::path path_;
  Logger sink_;
  J doc_;
  std::mutex mutex_;
};

struct Method {
  std::string name;
  std::vector<std::size_t> children;  // indices into the child list
};

J summary_json(const Summary& s) { return {{"mean", s.mean}, {"stderr", s.stderr_}, {"n", s.n}}; }

J single_json(double value, std::size_t n) { return {{"mean", value}, {"stderr", nullptr}, {"n", n}}; }

// Mean over unordered child pairs of a method.
template <class F>
double pair_mean(const Method& m, F&& dist) {
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < m.children.size(); ++a)
    for (std::size_t b = a + 1; b < m.children.size(); ++b) {
      sum += dist(m.children[a], m.children[b]);
      ++pairs;
    }
  return pairs ? sum / static_cast<double>(pairs) : 0.0;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::size_t grid_columns(std::size_t n) {
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
}

DiversityReport analyze(const ExperimentConfig& cfg, const data::Split& split, const Network& parent,
                        const std::vector<Member>& members, const std::string& parent_checkpoint, std::size_t workers,
                        RunLog& rlog) {
  const Logger say = [&](const std::string& s) { rlog.line(s); };
  const fs::path root = cfg.output;
  const Shape& shape = split.train.images.shape();
  const std::size_t colors = shape[1];
  std::vector<Method> methods;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (!members[i].net) throw std::invalid_argument("member '" + members[i].name + "' has no network");
    auto it = std::find_if(methods.begin(), methods.end(), [&](const Method& m) { return m.name == members[i].method; });
    if (it == methods.end()) it = methods.insert(methods.end(), Method{members[i].method, {}});
    it->children.push_back(i);
  }

  double parent_acc = 0.0;
  J children_json = J::array();
  rlog.stage("accuracy", [&] {
    parent_acc = forge::accuracy(parent, split.val);
    say("parent val accuracy " + std::to_string(parent_acc));
    for (const auto& m : members) {
      const double acc = forge::accuracy(*m.net, split.val);
      children_json.push_back({{"name", m.name},
                               {"method", m.method},
                               {"checkpoint", m.checkpoint.empty() ? J(nullptr) : J(m.checkpoint)},
                               {"val_accuracy", acc},
                               {"delta_vs_parent", acc - parent_acc}});
      say(m.name + " val accuracy " + std::to_string(acc));
    }
  });

  // Feature visualization of one layer in every child.
  const std::size_t layer = cfg.viz.layer ? *cfg.viz.layer : parent.last_conv_layer().value_or(0);
  std::size_t channels = 0;
  std::vector<image::RasterImage> viz;  // child-major
  std::vector<int> improved(members.size(), 0);
  rlog.stage("visualize", [&] {
    if (layer >= parent.layers().size() || parent.layer_output_shape(layer).size() != 3)
      throw std::invalid_argument("layer " + std::to_string(layer) + " has no spatial channels to visualize");
    const std::size_t available = parent.layer_output_shape(layer)[0];
    channels = cfg.viz.channels ? std::min(cfg.viz.channels, available) : available;
    const auto color = lens::ColorMatrix::cholesky(colors, lens::channel_covariance(split.train.images));
    viz.resize(members.size() * channels);
    std::vector<char> ok(viz.size(), 0);
    parallel_for(viz.size(), workers, [&](std::size_t i) {
      const std::size_t child = i / channels, ch = i % channels;
      const auto r = lens::visualize(*members[child].net, {layer, ch, lens::Sign::maximize}, cfg.viz.config, color);
      viz[i] = image::quantize_u8(lens::to_raster(r.image));
      ok[i] = r.improved;
      const fs::path dir = root / "viz" / members[child].name;
      fs::create_directories(dir);
      image::write_png(dir / (std::to_string(layer) + "_" + std::to_string(ch) + ".png"), viz[i]);
    });
    for (std::size_t i = 0; i < viz.size(); ++i) improved[i / channels] += ok[i];
    for (std::size_t c = 0; c < members.size(); ++c) {
      const std::vector<image::RasterImage> cells(viz.begin() + static_cast<std::ptrdiff_t>(c * channels),
                                                  viz.begin() + static_cast<std::ptrdiff_t>((c + 1) * channels));
      image::write_png(root / "viz" / members[c].name / "contact.png", image::tile(cells, grid_columns(channels)));
      say(members[c].name + ": objective improved on " + std::to_string(improved[c]) + "/" +
          std::to_string(channels) + " channels");
    }
  });

  // Perceptual hash distances between same-method children, per channel.
  std::vector<hash::Algo> viz_algos;
  for (hash::Algo a : hash::kAllAlgos)
    if (a != hash::Algo::colorhash || colors == 3) viz_algos.push_back(a);
  std::vector<J> viz_json(methods.size(), J::object());
  rlog.stage("hash", [&] {
    std::vector<hash::PerceptualHash> hashes(viz.size() * viz_algos.size());
    parallel_for(viz.size(), workers, [&](std::size_t i) {
      for (std::size_t a = 0; a < viz_algos.size(); ++a)
        hashes[i * viz_algos.size() + a] = hash::compute(viz_algos[a], viz[i]);
    });
    J table = J::object();
    for (std::size_t c = 0; c < members.size(); ++c) {
      J per = J::object();
      for (std::size_t a = 0; a < viz_algos.size(); ++a) {
        J col = J::array();
        for (std::size_t ch = 0; ch < channels; ++ch) col.push_back(hashes[(c * channels + ch) * viz_algos.size() + a].hex());
        per[hash::algo_name(viz_algos[a])] = col;
      }
      table[members[c].name] = per;
    }
    fs::create_directories(root / "viz");
    std::ofstream(root / "viz" / "hashes.json") << J{{"layer", layer}, {"hashes", table}}.dump(2) << '\n';
    for (std::size_t m = 0; m < methods.size(); ++m)
      for (std::size_t a = 0; a < viz_algos.size(); ++a) {
        std::vector<double> per_channel(channels);
        for (std::size_t ch = 0; ch < channels; ++ch)
          per_channel[ch] = pair_mean(methods[m], [&](std::size_t x, std::size_t y) {
            return static_cast<double>(hash::hamming(hashes[(x * channels + ch) * viz_algos.size() + a],
                                                     hashes[(y * channels + ch) * viz_algos.size() + a]));
          });
        viz_json[m][hash::algo_name(viz_algos[a])] = summary_json(summarize(per_channel));
      }
  });

  // Output-space diversity on validation predictions.
  std::vector<J> out_json(methods.size());
  rlog.stage("outputs", [&] {
    const std::size_t N = split.val.size(), C = split.val.classes;
    std::vector<Tensor> probs(members.size());
    parallel_for(members.size(), workers, [&](std::size_t c) { probs[c] = predict_proba(*members[c].net, split.val.images); });
    std::vector<double> all;
    for (const auto& p : probs) all.insert(all.end(), p.values().begin(), p.values().end());
    fs::create_directories(root / "predictions");
    npy::write(root / "predictions" / "val_probs.npy", {members.size(), N, C}, all);
    std::vector<double> labels(split.val.labels.begin(), split.val.labels.end());
    npy::write(root / "predictions" / "val_labels.npy", {N}, labels);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      std::vector<double> mp;
      for (std::size_t c : methods[m].children) mp.insert(mp.end(), probs[c].values().begin(), probs[c].values().end());
      const std::size_t M = methods[m].children.size();
      const diversity::PredictionSet set(M, N, C, mp, split.val.labels);
      const std::size_t pairs = M * (M - 1) / 2;
      out_json[m] = {{"kl", single_json(diversity::kl_pairwise(set), pairs)},
                     {"pdr", single_json(diversity::pdr(set), pairs)},
                     {"ensemble_accuracy", single_json(diversity::accuracy(diversity::ensemble_mean(set), 0), N)}};
    }
  });

  // SmoothGrad maps per validation image, compared between same-method children.
  const hash::Algo sal_algos[] = {hash::Algo::ahash, hash::Algo::phash, hash::Algo::dhash, hash::Algo::whash};
  constexpr std::size_t kSalMetrics = 5;  // rmse + four hashes
  std::vector<J> sal_json(methods.size(), J::object());
  std::size_t sal_n = 0;
  rlog.stage("saliency", [&] {
    sal_n = std::min(cfg.saliency.max_images, split.val.size());
    const std::size_t saved = std::min(cfg.saliency.saved, sal_n);
    std::vector<double> dist(sal_n * methods.size() * kSalMetrics);
    std::vector<image::RasterImage> kept(saved * (members.size() + 1));
    parallel_for(sal_n, workers, [&](std::size_t i) {
      const Tensor x = split.val.batch({i}, 0, 1);
      lens::SaliencyConfig sc = cfg.saliency.config;
      sc.seed = mix_seed(sc.seed, i);
      std::vector<image::RasterImage> maps(members.size());
      std::vector<std::vector<hash::PerceptualHash>> hashes(members.size());
      for (std::size_t c = 0; c < members.size(); ++c) {
        maps[c] = lens::smoothgrad(*members[c].net, x, sc);
        const auto q = image::quantize_u8(maps[c]);
        for (hash::Algo a : sal_algos) hashes[c].push_back(hash::compute(a, q));
        if (i < saved) kept[i * (members.size() + 1) + c + 1] = q;
      }
      if (i < saved) kept[i * (members.size() + 1)] = image::quantize_u8(lens::to_raster(x));
      for (std::size_t m = 0; m < methods.size(); ++m) {
        double* d = &dist[(i * methods.size() + m) * kSalMetrics];
        d[0] = pair_mean(methods[m], [&](std::size_t a, std::size_t b) {
          double ss = 0.0;
          for (std::size_t p = 0; p < maps[a].pixels.size(); ++p)
            ss += (maps[a].pixels[p] - maps[b].pixels[p]) * (maps[a].pixels[p] - maps[b].pixels[p]);
          return std::sqrt(ss / static_cast<double>(maps[a].pixels.size()));
        });
        for (std::size_t h = 0; h < 4; ++h)
          d[1 + h] = pair_mean(methods[m], [&](std::size_t a, std::size_t b) {
            return static_cast<double>(hash::hamming(hashes[a][h], hashes[b][h]));
          });
      }
    });
    for (std::size_t m = 0; m < methods.size(); ++m)
      for (std::size_t k = 0; k < kSalMetrics; ++k) {
        std::vector<double> v(sal_n);
        for (std::size_t i = 0; i < sal_n; ++i) v[i] = dist[(i * methods.size() + m) * kSalMetrics + k];
        sal_json[m][k == 0 ? "rmse" : hash::algo_name(sal_algos[k - 1])] = summary_json(summarize(v));
      }
    if (saved > 0) {
      for (std::size_t i = 0; i < saved; ++i)
        for (std::size_t c = 0; c < members.size(); ++c) {
          const fs::path dir = root / "saliency" / members[c].name;
          fs::create_directories(dir);
          image::write_png(dir / (std::to_string(i) + ".png"), kept[i * (members.size() + 1) + c + 1]);
        }
      image::write_png(root / "saliency" / "contact.png", image::tile(kept, members.size() + 1));
    }
  });

  DiversityReport report;
  rlog.stage("report", [&] {
    J methods_json = J::array();
    for (std::size_t m = 0; m < methods.size(); ++m) {
      J names = J::array();
      for (std::size_t c : methods[m].children) names.push_back(members[c].name);
      methods_json.push_back({{"method", methods[m].name},
                              {"children", names},
                              {"visualization", viz_json[m]},
                              {"outputs", out_json[m]},
                              {"saliency", sal_json[m]}});
    }
    J improved_json = J::object();
    int improved_total = 0;
    for (std::size_t c = 0; c < members.size(); ++c) {
      improved_json[members[c].name] = improved[c];
      improved_total += improved[c];
    }
    const J canon = canonical(cfg);
    J seeds = J::object();
    for (const char* block : {"dataset", "parent", "snapshot", "prune_tune", "viz", "saliency"})
      if (canon[block].contains("seed")) seeds[block] = canon[block]["seed"];
    report.json = {
        {"format", "ediv-diversity-report/1"},
        {"provenance", {{"config_digest", config_digest(cfg)}, {"seeds", seeds}, {"timestamps", "run_log.json"}}},
        {"config", canon},
        {"dataset",
         {{"train", split.train.size()},
          {"val", split.val.size()},
          {"shape", {shape[1], shape[2], shape[3]}},
          {"classes", split.train.classes}}},
        {"parent",
         {{"checkpoint", parent_checkpoint.empty() ? J(nullptr) : J(parent_checkpoint)}, {"val_accuracy", parent_acc}}},
        {"children", children_json},
        {"visualization",
         {{"layer", layer},
          {"channels", channels},
          {"improved", improved_json},
          {"improved_fraction",
           static_cast<double>(improved_total) / static_cast<double>(std::max<std::size_t>(1, viz.size()))}}},
        {"saliency", {{"images", sal_n}, {"samples", cfg.saliency.config.samples}, {"sigma", cfg.saliency.config.sigma}}},
        {"methods", methods_json}};
    report.metrics = metrics_from_json(report.json);
    write_report(report, root);
  });
  return report;
}

}  // namespace

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  if (s.n < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stderr_ = std::sqrt(ss / static_cast<double>(s.n - 1)) / std::sqrt(static_cast<double>(s.n));
  return s;
}

data::Split load_dataset(const DatasetConfig& cfg) {
  if (cfg.kind == DatasetConfig::Kind::synthetic) return data::synthetic(cfg.synthetic);
  data::Dataset train = data::load_idx(cfg.images, cfg.labels);
  if (!cfg.val_images.empty()) {
    data::Dataset val = data::load_idx(cfg.val_images, cfg.val_labels);
    if (val.images.shape()[2] != train.images.shape()[2] || val.images.shape()[3] != train.images.shape()[3])
      throw std::runtime_error("idx: training and validation image sizes differ");
    train.classes = val.classes = std::max(train.classes, val.classes);
    return {std::move(train), std::move(val)};
  }
  return data::split_tail(train, cfg.val_count);
}

Network make_model(const std::string& preset, const data::Dataset& d) {
  if (preset != "desk") throw std::invalid_argument("unknown model preset '" + preset + "'");
  const Shape& s = d.images.shape();
  if (s[2] % 4 != 0 || s[3] % 4 != 0)
    throw std::invalid_argument("desk model needs image sides divisible by 4, got " + std::to_string(s[2]) + "x" +
                                std::to_string(s[3]));
  return desk_network(s[1], s[2], s[3], d.classes);
}

DiversityReport run_experiment(const ExperimentConfig& cfg, const Logger& log) {
  cfg.validate();
  tune_allocator();
  const fs::path root = cfg.output;
  fs::create_directories(root);
  const std::size_t workers = resolve_workers(cfg.workers);
  RunLog rlog(root / "run_log.json", cfg, workers, log);
  const Logger say = [&](const std::string& s) { rlog.line(s); };

  const data::Split split = rlog.stage("dataset", [&] { return load_dataset(cfg.dataset); });
  const Network parent = rlog.stage("parent", [&] {
    Network net = forge::train_parent(make_model(cfg.model, split.train), split.train, cfg.parent, say);
    fs::create_directories(root / "checkpoints");
    save_checkpoint(net, root / "checkpoints" / "parent.ediv");
    return net;
  });
  forge::EnsembleRun snap = rlog.stage("snapshot", [&] {
    auto run = forge::snapshot_children(parent, split.train, cfg.snapshot, say);
    forge::save_children(run, root / "checkpoints");
    return run;
  });
  forge::EnsembleRun tuned = rlog.stage("prune_tune", [&] {
    auto run = forge::prune_tune_children(parent, split.train, cfg.prune_tune, say, workers);
    forge::save_children(run, root / "checkpoints");
    return run;
  });

  std::vector<Member> members;
  for (const auto& c : snap.children) members.push_back({c.name, "snapshot", &c.net, "checkpoints/" + c.checkpoint.filename().string()});
  for (const auto& c : tuned.children)
    members.push_back({c.name, "prune_tune", &c.net, "checkpoints/" + c.checkpoint.filename().string()});

  rlog.stage("checkpoints", [&] {
    J man_children = J::array();
    for (const auto* run : {&snap, &tuned}) {
      J m = forge::manifest(*run);
      for (auto& c : m["children"]) {
        c["checkpoint"] = fs::path(c["checkpoint"].get<std::string>()).filename().string();
        man_children.push_back(c);
      }
    }
    for (const auto& m : members) {
      const Network loaded = load_checkpoint(root / m.checkpoint);
      if (loaded.layers() != parent.layers() || loaded.input_shape() != parent.input_shape())
        throw std::runtime_error("child '" + m.name + "' does not share the parent architecture");
    }
    J manifest = {{"parent", "parent.ediv"},
                  {"config_digest", config_digest(cfg)},
                  {"parent_config", canonical(cfg)["parent"]},
                  {"children", man_children},
                  {"snapshot", snap.metadata},
                  {"prune_tune", tuned.metadata}};
    std::ofstream(root / "checkpoints" / "manifest.json") << manifest.dump(2) << '\n';
  });

  DiversityReport report = analyze(cfg, split, parent, members, "checkpoints/parent.ediv", workers, rlog);
  rlog.finish();
  return report;
}

DiversityReport analyze_ensemble(const ExperimentConfig& cfg, const data::Split& split, const Network& parent,
                                 const std::vector<Member>& members, const Logger& log) {
  tune_allocator();
  fs::create_directories(cfg.output);
  const std::size_t workers = resolve_workers(cfg.workers);
  RunLog rlog(cfg.output / "run_log.json", cfg, workers, log);
  DiversityReport report = analyze(cfg, split, parent, members, "", workers, rlog);
  rlog.finish();
  return report;
}

}  // namespace ediv::pipeline
