#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ediv/diversity.hpp"
#include "ediv/hash.hpp"
#include "ediv/lens.hpp"
#include "ediv/nn/checkpoint.hpp"
#include "ediv/nn/ops.hpp"
#include "ediv/npy.hpp"
#include "ediv/parallel.hpp"
#include "ediv/pipeline.hpp"
#include "ediv/png_io.hpp"
#include "ediv/schedules.hpp"

using namespace ediv;
namespace fs = std::filesystem;
using J = nlohmann::ordered_json;

namespace {

constexpr int kFailure = 1;
constexpr int kConfigError = 2;
constexpr int kStageFailure = 3;

// Usage and configuration problems share exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void print_log(const std::string& s) { std::cerr << s << '\n'; }

pipeline::ExperimentConfig load(const std::string& path, const std::string& output) {
  auto cfg = pipeline::load_config(path);
  if (!output.empty()) cfg.output = output;
  return cfg;
}

// ---------------------------------------------------------------- forge

int forge_train_parent(const std::string& config, const std::string& output) {
  const auto cfg = load(config, output);
  tune_allocator();
  const auto split = pipeline::load_dataset(cfg.dataset);
  const Network net =
      forge::train_parent(pipeline::make_model(cfg.model, split.train), split.train, cfg.parent, print_log);
  fs::create_directories(cfg.output / "checkpoints");
  const fs::path path = cfg.output / "checkpoints" / "parent.ediv";
  save_checkpoint(net, path);
  const J manifest = {{"parent", path.filename().string()},
                      {"config_digest", pipeline::config_digest(cfg)},
                      {"parent_config", pipeline::canonical(cfg)["parent"]},
                      {"val_accuracy", forge::accuracy(net, split.val)}};
  std::ofstream(cfg.output / "checkpoints" / "manifest_parent.json") << manifest.dump(2) << '\n';
  std::cout << path.string() << " val_accuracy " << manifest["val_accuracy"].dump() << '\n';
  return 0;
}

int forge_children(const std::string& kind, const std::string& config, const std::string& output,
                   const std::string& parent_path) {
  const auto cfg = load(config, output);
  tune_allocator();
  const fs::path ppath = parent_path.empty() ? cfg.output / "checkpoints" / "parent.ediv" : fs::path(parent_path);
  if (!fs::exists(ppath)) throw UsageError("parent checkpoint not found: " + ppath.string() + " (run forge train-parent)");
  const Network parent = load_checkpoint(ppath);
  const auto split = pipeline::load_dataset(cfg.dataset);
  forge::EnsembleRun run =
      kind == "snapshot"
          ? forge::snapshot_children(parent, split.train, cfg.snapshot, print_log)
          : forge::prune_tune_children(parent, split.train, cfg.prune_tune, print_log, resolve_workers(cfg.workers));
  run.parent_checkpoint = ppath;
  forge::save_children(run, cfg.output / "checkpoints");
  J m = forge::manifest(run);
  m["config_digest"] = pipeline::config_digest(cfg);
  std::ofstream(cfg.output / "checkpoints" / ("manifest_" + kind + ".json")) << m.dump(2) << '\n';
  for (const auto& c : run.children)
    std::cout << c.checkpoint.string() << " val_accuracy " << J(forge::accuracy(c.net, split.val)).dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------- schedule

struct ScheduleArgs {
  std::string kind = "cosine";
  std::int64_t total = 100;
  int cycles = 2;
  double lr_max = 0.1, lr_min = 1e-5;
  double mu_min = 0.85, mu_max = 0.95, momentum = 0.9, split = 0.5;
};

int schedule_dump(const ScheduleArgs& a) {
  std::printf("t,lr,momentum\n");
  auto row = [](std::int64_t t, double lr, double mu) {
    std::cout << t << ',' << J(lr).dump() << ',' << J(mu).dump() << '\n';
  };
  if (a.kind == "cosine") {
    const schedules::CosineAnneal s{a.lr_max, a.lr_min, a.total};
    for (std::int64_t t = 0; t <= a.total; ++t) row(t, schedules::cosine(s, t), a.momentum);
  } else if (a.kind == "one-cycle") {
    const schedules::OneCycle s{a.lr_min, a.lr_max, a.mu_min, a.mu_max, a.total, a.split};
    for (std::int64_t t = 0; t <= a.total; ++t) {
      const auto v = schedules::one_cycle(s, t);
      row(t, v.lr, v.momentum);
    }
  } else if (a.kind == "snapshot") {
    const schedules::SnapshotSchedule s{a.total, a.cycles, a.lr_max, a.lr_min};
    for (std::int64_t t = 1; t <= a.total; ++t) row(t, schedules::snapshot_lr(s, t), a.momentum);
  } else {
    throw UsageError("unknown schedule kind '" + a.kind + "' (cosine, one-cycle, snapshot)");
  }
  return 0;
}

// ---------------------------------------------------------------- metrics

int metrics_report(const std::string& predictions, const std::string& labels_path, const std::string& out_dir) {
  const fs::path p(predictions);
  const npy::Array a = p.extension() == ".csv" ? npy::read_prediction_csv(p) : npy::read(p);
  if (a.shape.size() != 3) throw UsageError("predictions must have shape (models, samples, classes)");
  const std::size_t M = a.shape[0], N = a.shape[1], C = a.shape[2];
  std::optional<std::vector<int>> labels;
  if (!labels_path.empty()) {
    const fs::path lp(labels_path);
    if (lp.extension() == ".csv") {
      labels = npy::read_label_csv(lp);
    } else {
      const npy::Array l = npy::read(lp);
      labels.emplace();
      for (double v : l.data) labels->push_back(static_cast<int>(v));
    }
    if (labels->size() != N)
      throw UsageError("labels: expected " + std::to_string(N) + " entries, got " + std::to_string(labels->size()));
  }
  const diversity::PredictionSet set(M, N, C, a.data, labels);
  const std::size_t pairs = M * (M - 1) / 2;
  J outputs = {{"kl", {{"mean", diversity::kl_pairwise(set)}, {"stderr", nullptr}, {"n", pairs}}},
               {"pdr", {{"mean", diversity::pdr(set)}, {"stderr", nullptr}, {"n", pairs}}}};
  J extra = J::object();
  if (labels) {
    J acc = J::array();
    for (std::size_t m = 0; m < M; ++m) acc.push_back(diversity::accuracy(set, m));
    extra["model_accuracy"] = acc;
    outputs["ensemble_accuracy"] = {
        {"mean", diversity::accuracy(diversity::ensemble_mean(set), 0)}, {"stderr", nullptr}, {"n", N}};
    // Squared-error decomposition of the ensemble's class probabilities against one-hot targets.
    std::vector<double> targets(N * C, 0.0);
    for (std::size_t n = 0; n < N; ++n) targets[n * C + static_cast<std::size_t>((*labels)[n])] = 1.0;
    const auto d = diversity::bias_var_covar(a.data, M, targets);
    extra["bias_variance_covariance"] = {{"models", d.models},
                                         {"bias_bar", d.bias_bar},
                                         {"var_bar", d.var_bar},
                                         {"covar_bar", d.covar_bar ? J(*d.covar_bar) : J(nullptr)},
                                         {"mse", d.mse}};
  }
  J report = {{"format", "ediv-metrics-report/1"},
              {"predictions", {{"models", M}, {"samples", N}, {"classes", C}}},
              {"methods", J::array({{{"method", "ensemble"}, {"outputs", outputs}}})}};
  for (auto& [k, v] : extra.items()) report[k] = v;
  pipeline::DiversityReport r{report, pipeline::metrics_from_json(report)};
  std::cout << pipeline::render_table(r.metrics);
  if (!out_dir.empty()) {
    pipeline::write_report(r, out_dir);
    std::cout << "wrote " << (fs::path(out_dir) / "report.json").string() << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- lens

struct VizArgs {
  std::string checkpoint, out, config;
  std::size_t layer = 0, channel = 0;
  bool grid = false, minimize = false;
  lens::VizConfig viz;
};

int lens_visualize(const VizArgs& a) {
  tune_allocator();
  const Network net = load_checkpoint(a.checkpoint);
  const std::size_t colors = net.input_shape()[0];
  lens::ColorMatrix color = lens::ColorMatrix::identity(colors);
  if (!a.config.empty()) {
    const auto split = pipeline::load_dataset(pipeline::load_config(a.config).dataset);
    color = lens::ColorMatrix::cholesky(colors, lens::channel_covariance(split.train.images));
  }
  if (a.layer >= net.layers().size() || net.layer_output_shape(a.layer).size() != 3)
    throw UsageError("layer " + std::to_string(a.layer) + " has no spatial channels");
  const std::size_t available = net.layer_output_shape(a.layer)[0];
  const auto sign = a.minimize ? lens::Sign::minimize : lens::Sign::maximize;
  if (!a.grid) {
    if (a.channel >= available)
      throw UsageError("channel " + std::to_string(a.channel) + " out of range (layer has " +
                       std::to_string(available) + ")");
    const auto r = lens::visualize(net, {a.layer, a.channel, sign}, a.viz, color);
    image::write_png(a.out, lens::to_raster(r.image));
    std::cout << a.out << " objective " << J(r.initial).dump() << " -> " << J(r.final).dump() << '\n';
    return 0;
  }
  std::vector<image::RasterImage> cells(available);
  std::vector<double> finals(available);
  parallel_for(available, resolve_workers(), [&](std::size_t ch) {
    const auto r = lens::visualize(net, {a.layer, ch, sign}, a.viz, color);
    cells[ch] = image::quantize_u8(lens::to_raster(r.image));
    finals[ch] = r.final;
  });
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(available))));
  image::write_png(a.out, image::tile(cells, cols));
  std::cout << a.out << " channels " << available << '\n';
  return 0;
}

int lens_saliency(const std::string& checkpoint, const std::string& image_path, const std::string& out, int samples,
                  double sigma, std::uint64_t seed) {
  const Network net = load_checkpoint(checkpoint);
  const Shape& in = net.input_shape();
  image::RasterImage img = image::read_png(image_path);
  if (img.width != in[2] || img.height != in[1]) img = image::resize(img, in[2], in[1]);
  const Tensor x = lens::from_raster(img, in[0]);
  const auto map = samples <= 1 && sigma == 0.0 ? lens::saliency(net, x)
                                                : lens::smoothgrad(net, x, {samples, sigma, seed});
  image::write_png(out, map);
  const Tensor p = predict_proba(net, x);
  const auto cls = ops::argmax_rows(p)[0];
  std::cout << out << " class " << cls << " p " << J(p[static_cast<std::size_t>(cls)]).dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------- hash

int hash_compute(const std::string& algo_tag, const std::vector<std::string>& files) {
  hash::Algo algo;
  try {
    algo = hash::parse_algo(algo_tag);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  for (const auto& f : files) std::cout << hash::compute(algo, image::read_png(f)).hex() << ' ' << f << '\n';
  return 0;
}

std::uint64_t parse_hex(const std::string& s) {
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos)
    throw UsageError("'" + s + "' is not a 16-digit hex hash");
  return std::stoull(s, nullptr, 16);
}

// ---------------------------------------------------------------- pipeline

int pipeline_run(const std::string& config, const std::string& output, std::size_t workers) {
  auto cfg = load(config, output);
  if (workers) cfg.workers = workers;
  const auto report = pipeline::run_experiment(cfg, print_log);
  std::cout << pipeline::render_table(report.metrics);
  std::cout << "report: " << (cfg.output / "report.json").string() << '\n';
  return 0;
}

int pipeline_report(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "report.json");
  if (!in) throw UsageError("no report.json in " + dir);
  pipeline::DiversityReport r;
  try {
    r.json = J::parse(in);
    r.metrics = pipeline::metrics_from_json(r.json);
  } catch (const J::exception& e) {
    throw UsageError(std::string("malformed report.json: ") + e.what());
  }
  if (r.json.contains("parent")) std::cout << "parent val_accuracy " << r.json["parent"]["val_accuracy"].dump() << '\n';
  if (r.json.contains("children"))
    for (const auto& c : r.json["children"])
      std::cout << c["name"].get<std::string>() << " val_accuracy " << c["val_accuracy"].dump() << '\n';
  std::cout << pipeline::render_table(r.metrics);
  std::ofstream(fs::path(dir) / "report.csv", std::ios::binary) << pipeline::render_csv(r.metrics);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble diversity toolkit: training, feature visualization and perceptual hashing"};
  app.require_subcommand(1);
  int status = 0;
  std::string config, output, parent, predictions, labels;
  std::size_t workers = 0;

  auto* forge_cmd = app.add_subcommand("forge", "Train a parent and generate ensemble children");
  forge_cmd->require_subcommand(1);
  auto* tp = forge_cmd->add_subcommand("train-parent", "Train the parent network");
  tp->add_option("config", config, "Experiment config file")->required();
  tp->add_option("--output", output, "Override [run] output");
  tp->callback([&] { status = forge_train_parent(config, output); });
  for (const char* kind : {"snapshot", "prune-tune"}) {
    auto* c = forge_cmd->add_subcommand(kind, std::string(kind) == "snapshot" ? "Snapshot children of the parent"
                                                                              : "Anti-random prune-and-tune children");
    c->add_option("config", config, "Experiment config file")->required();
    c->add_option("--output", output, "Override [run] output");
    c->add_option("--parent", parent, "Parent checkpoint (default <output>/checkpoints/parent.ediv)");
    const std::string k = std::string(kind) == "snapshot" ? "snapshot" : "prune_tune";
    c->callback([&, k] { status = forge_children(k, config, output, parent); });
  }

  ScheduleArgs sched;
  auto* sched_cmd = app.add_subcommand("schedule", "Learning-rate schedules");
  sched_cmd->require_subcommand(1);
  auto* dump = sched_cmd->add_subcommand("dump", "Print t,lr,momentum as CSV");
  dump->add_option("--kind", sched.kind, "cosine | one-cycle | snapshot")->capture_default_str();
  dump->add_option("--total", sched.total, "Iterations T")->capture_default_str();
  dump->add_option("--cycles", sched.cycles, "Snapshot cycles M")->capture_default_str();
  dump->add_option("--lr-max", sched.lr_max, "Initial / peak learning rate")->capture_default_str();
  dump->add_option("--lr-min", sched.lr_min, "Final / floor learning rate")->capture_default_str();
  dump->add_option("--mu-min", sched.mu_min, "One-cycle minimum momentum")->capture_default_str();
  dump->add_option("--mu-max", sched.mu_max, "One-cycle maximum momentum")->capture_default_str();
  dump->add_option("--momentum", sched.momentum, "Constant momentum for cosine/snapshot")->capture_default_str();
  dump->add_option("--split", sched.split, "One-cycle rising fraction")->capture_default_str();
  dump->callback([&] { status = schedule_dump(sched); });

  std::string metrics_out;
  auto* metrics_cmd = app.add_subcommand("metrics", "Output-space diversity metrics");
  metrics_cmd->require_subcommand(1);
  auto* mr = metrics_cmd->add_subcommand("report", "KL / PDR (and accuracy, decomposition with labels)");
  mr->add_option("--predictions", predictions, "(M, N, C) probabilities: .npy or .csv")->required();
  mr->add_option("--labels", labels, "N labels: .npy or .csv");
  mr->add_option("--out", metrics_out, "Directory for report.json / report.csv");
  mr->callback([&] { status = metrics_report(predictions, labels, metrics_out); });

  VizArgs viz;
  std::string image_path, sal_out = "saliency.png";
  int sal_samples = 25;
  double sal_sigma = 0.10;
  std::uint64_t sal_seed = 0;
  auto* lens_cmd = app.add_subcommand("lens", "Feature visualization and saliency");
  lens_cmd->require_subcommand(1);
  auto* lv = lens_cmd->add_subcommand("visualize", "Optimize an input for one channel (or all with --grid)");
  lv->add_option("--checkpoint", viz.checkpoint, "Network checkpoint")->required();
  lv->add_option("--layer", viz.layer, "Layer index")->required();
  lv->add_option("--channel", viz.channel, "Channel index");
  lv->add_flag("--grid", viz.grid, "Visualize every channel and tile them into one image");
  lv->add_flag("--minimize", viz.minimize, "Minimize instead of maximize the channel mean");
  lv->add_option("--out", viz.out, "Output PNG")->required();
  lv->add_option("--config", viz.config, "Decorrelate colors using this config's training data");
  lv->add_option("--steps", viz.viz.steps, "Optimizer steps")->capture_default_str();
  lv->add_option("--lr", viz.viz.lr, "Adam learning rate")->capture_default_str();
  lv->add_option("--seed", viz.viz.seed, "Initialization seed")->capture_default_str();
  lv->callback([&] {
    if (!viz.grid && lv->count("--channel") == 0) throw UsageError("--channel is required without --grid");
    status = lens_visualize(viz);
  });
  auto* ls = lens_cmd->add_subcommand("saliency", "Saliency map of an image (SmoothGrad by default)");
  ls->add_option("--checkpoint", viz.checkpoint, "Network checkpoint")->required();
  ls->add_option("--image", image_path, "Input PNG")->required();
  ls->add_option("--out", sal_out, "Output PNG")->capture_default_str();
  ls->add_option("--samples", sal_samples, "SmoothGrad samples; 1 with --sigma 0 gives vanilla gradients")
      ->capture_default_str();
  ls->add_option("--sigma", sal_sigma, "Noise level as a fraction of the input range")->capture_default_str();
  ls->add_option("--seed", sal_seed, "Noise seed")->capture_default_str();
  ls->callback([&] { status = lens_saliency(viz.checkpoint, image_path, sal_out, sal_samples, sal_sigma, sal_seed); });

  std::string algo;
  std::vector<std::string> files;
  std::string hex_a, hex_b;
  auto* hash_cmd = app.add_subcommand("hash", "64-bit perceptual hashes");
  hash_cmd->require_subcommand(1);
  auto* hc = hash_cmd->add_subcommand("compute", "Print <hex16> <path> per PNG");
  hc->add_option("--algo", algo, "ahash | phash | dhash | whash | colorhash")->required();
  hc->add_option("files", files, "PNG files")->required();
  hc->callback([&] { status = hash_compute(algo, files); });
  auto* hd = hash_cmd->add_subcommand("dist", "Hamming distance between two hex hashes");
  hd->add_option("a", hex_a)->required();
  hd->add_option("b", hex_b)->required();
  hd->callback([&] {
    std::cout << hash::hamming_bits(parse_hex(hex_a), parse_hex(hex_b)) << '\n';
    status = 0;
  });

  auto* pipe_cmd = app.add_subcommand("pipeline", "End-to-end experiment");
  pipe_cmd->require_subcommand(1);
  auto* pr = pipe_cmd->add_subcommand("run", "Run every stage and write the report");
  pr->add_option("config", config, "Experiment config file")->required();
  pr->add_option("--output", output, "Override [run] output");
  pr->add_option("--workers", workers, "Override [run] workers (EDIV_WORKERS still wins)");
  pr->callback([&] { status = pipeline_run(config, output, workers); });
  std::string run_dir;
  auto* prep = pipe_cmd->add_subcommand("report", "Re-render report.csv and print the table");
  prep->add_option("run-dir", run_dir, "Run output directory")->required();
  prep->callback([&] { status = pipeline_report(run_dir); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  } catch (const pipeline::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const pipeline::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return status;
}
