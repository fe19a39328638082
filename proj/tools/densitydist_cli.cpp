// densitydist command line: data generation, training, evaluation and
// experiment reports.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "densitydist/checkpoint.hpp"
#include "densitydist/experiment.hpp"
#include "densitydist/selftest.hpp"

using namespace densitydist;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr double kSelftestTolerance = 1e-4;

/// Raised for missing inputs so they map to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_dir(const std::filesystem::path& p, const char* what) {
  if (!std::filesystem::is_directory(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

std::optional<std::filesystem::path> cache_dir_or(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv("DENSITYDIST_CACHE"); env && *env) return std::filesystem::path(env);
  return fallback;
}

const Scene& find_scene(const std::vector<Scene>& scenes, std::size_t id) {
  for (const auto& s : scenes)
    if (s.id == id) return s;
  throw UsageError("scene " + std::to_string(id) + " not in dataset");
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  std::filesystem::path out;
  std::size_t n = 200;
  std::uint64_t seed = 0;
  std::string spec_path;
  std::optional<std::size_t> k_min, k_max;
};

int gen_data(const GenDataArgs& a) {
  SceneSpec spec;
  if (!a.spec_path.empty()) {
    std::ifstream in(a.spec_path);
    if (!in) throw UsageError("cannot open spec " + a.spec_path);
    spec = SceneSpec::from_json(json::parse(in));
  }
  if (a.k_min) spec.k_min = *a.k_min;
  if (a.k_max) spec.k_max = *a.k_max;
  spec.validate();
  const auto scenes = generate_dataset(a.n, spec, a.seed);
  save_dataset(a.out, scenes, spec, a.seed);
  double total = 0.0;
  for (const auto& s : scenes) total += static_cast<double>(s.annotation.points.size());
  std::printf("wrote %zu scenes to %s (mean count %.2f)\n", scenes.size(), a.out.string().c_str(),
              total / static_cast<double>(scenes.size()));
  return 0;
}

// ---- make-labels ------------------------------------------------------------

struct MakeLabelsArgs {
  std::filesystem::path data;
  double sigma = kDefaultSigma;
  std::size_t stride = kDefaultStride;
  std::string partition = "uep";
  double scale = 1.0;
  bool interleaved = true;
};

int make_labels(const MakeLabelsArgs& a) {
  require_dir(a.data, "dataset");
  const auto dataset = load_dataset(a.data);
  std::vector<std::vector<double>> densities;
  std::vector<double> all;
  for (const auto& s : dataset.scenes) {
    densities.push_back(scene_patch_densities(s, a.sigma, a.stride));
    all.insert(all.end(), densities.back().begin(), densities.back().end());
  }
  const DualPartition parts = build_dual_partition(parse_partition_strategy(a.partition), a.interleaved, a.scale, all);
  std::ofstream(a.data / "partitions.json") << dual_partition_to_json(parts).dump(2) << '\n';
  for (std::size_t i = 0; i < dataset.scenes.size(); ++i) {
    const auto& s = dataset.scenes[i];
    const std::string stem = scene_stem(s.id);
    write_grid_csv(a.data / (stem + ".density.csv"), s.annotation.h, s.annotation.w, a.stride, densities[i]);
    for (int b = 0; b < 2; ++b) {
      const auto labels = assign_intervals(densities[i], parts.branch(b));
      std::vector<double> grid(labels.classes().begin(), labels.classes().end());
      write_grid_csv(a.data / (stem + ".labels" + std::to_string(b + 1) + ".csv"), s.annotation.h, s.annotation.w,
                     a.stride, grid);
    }
  }
  std::printf("labelled %zu scenes (%zu and %zu intervals)\n", dataset.scenes.size(), parts.branch1.count(),
              parts.branch2.count());
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  std::filesystem::path data;
  std::optional<std::uint64_t> seed;
};

int train_cmd(const TrainArgs& a) {
  ExperimentConfig ec = ExperimentConfig::load(a.config);
  TrainConfig& cfg = ec.train;
  if (a.seed) cfg.seed = *a.seed;

  std::vector<Scene> scenes;
  if (!a.data.empty()) {
    require_dir(a.data, "dataset");
    scenes = load_dataset(a.data).scenes;
  } else {
    scenes = prepare_data(ec.dataset, cache_dir_or(a.out / "cache")).train;
  }

  DatasetSplit split = split_dataset(scenes, cfg.labeled_ratio, cfg.seed, ec.dataset.split);
  const auto held = hold_out(split.labeled, cfg.val_fraction, cfg.seed);
  std::vector<Scene> labeled_raw;
  for (auto i : split.labeled) labeled_raw.push_back(scenes[i]);
  const DualPartition parts = build_partitions(cfg, labeled_raw);
  std::vector<LabeledScene> labeled;
  for (const auto& s : labeled_raw) labeled.push_back(make_labeled(s, parts, cfg.sigma, cfg.stride));
  std::vector<UnlabeledScene> unlabeled;
  for (auto i : split.unlabeled) unlabeled.push_back(make_unlabeled(scenes[i].image, scenes[i].id));
  std::vector<EvalScene> validation;
  for (auto i : held) validation.push_back(make_eval(scenes[i]));

  std::printf("labeled %zu, unlabeled %zu, validation %zu\n", labeled.size(), unlabeled.size(), validation.size());
  auto result = train(cfg, parts, labeled, unlabeled, validation, [](const EpochRecord& r) {
    std::printf("epoch %zu  labeled %.4f", r.epoch, r.labeled_loss);
    if (r.unlabeled_loss) std::printf("  unlabeled %.4f  mask %.3f", *r.unlabeled_loss, *r.mask_fraction);
    if (r.val_mae) std::printf("  val mae %.3f mse %.3f", *r.val_mae, *r.val_mse);
    std::printf("\n");
    std::fflush(stdout);
  });

  std::filesystem::create_directories(a.out);
  save_checkpoint(result.model, a.out / "model");
  write_history_csv(a.out / "history.csv", result.history);
  std::ofstream(a.out / "config.json") << ec.to_json().dump(2) << '\n';
  json split_doc{{"labeled", json::array()}, {"unlabeled", json::array()}, {"validation", json::array()}};
  for (auto i : split.labeled) split_doc["labeled"].push_back(scenes[i].id);
  for (auto i : split.unlabeled) split_doc["unlabeled"].push_back(scenes[i].id);
  for (auto i : held) split_doc["validation"].push_back(scenes[i].id);
  std::ofstream(a.out / "split.json") << split_doc.dump() << '\n';
  std::printf("checkpoint written to %s\n", (a.out / "model").string().c_str());
  return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
  std::string fusion = "confidence";
};

int eval_cmd(const EvalArgs& a) {
  require_dir(a.checkpoint, "checkpoint");
  require_dir(a.data, "dataset");
  DualBranchModel model = load_checkpoint(a.checkpoint);
  std::vector<EvalScene> scenes;
  for (const auto& s : load_dataset(a.data).scenes) scenes.push_back(make_eval(s));
  const auto ev = evaluate(model, scenes, parse_fusion_mode(a.fusion));
  if (!a.out.empty()) write_eval_csv(a.out, ev);
  std::printf("scenes %zu  mae %.4f  mse %.4f\n", ev.rows.size(), ev.metrics.mae, ev.metrics.mse);
  return 0;
}

// ---- run-experiment -----------------------------------------------------------

struct ExperimentArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  std::vector<std::uint64_t> seeds;
  std::string preset;
  bool overwrite = false;
};

int experiment_cmd(const ExperimentArgs& a) {
  ExperimentConfig ec = ExperimentConfig::load(a.config);
  if (!a.seeds.empty()) ec.seeds = a.seeds;
  if (!a.preset.empty()) {
    try {
      preset_settings(a.preset, ec.train);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("preset", e.what());
    }
    ec.preset = a.preset;
  }
  ExperimentOptions opts;
  opts.out_root = a.out;
  opts.cache_dir = cache_dir_or(a.out / "cache");
  opts.overwrite = a.overwrite;
  opts.log = [](const std::string& msg) {
    std::printf("%s\n", msg.c_str());
    std::fflush(stdout);
  };
  std::filesystem::path run_dir;
  const auto report = run_experiment(ec, opts, &run_dir);
  std::printf("%-16s %-14s %5s %10s %10s %10s %10s\n", "setting", "fusion", "runs", "mae", "mae_std", "mse",
              "mse_std");
  for (const auto& g : report.aggregates) {
    std::printf("%-16s %-14s %5zu %10.4f %10.4f %10.4f %10.4f\n", g.setting.c_str(), g.fusion.c_str(), g.runs,
                g.mae_mean, g.mae_std, g.mse_mean, g.mse_std);
  }
  std::printf("report written to %s\n", run_dir.string().c_str());
  return 0;
}

// ---- inspect-loss -------------------------------------------------------------

int inspect_loss(const std::string& input) {
  json doc;
  if (input == "-") {
    doc = json::parse(std::cin);
  } else {
    std::ifstream in(input);
    if (!in) throw UsageError("cannot open " + input);
    doc = json::parse(in);
  }
  const auto rows = doc.at("pred").get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw ConfigError("pred", "empty table");
  const std::size_t c = rows.front().size();
  Tensor pred = Tensor::matrix(rows.size(), c);
  for (std::size_t n = 0; n < rows.size(); ++n) {
    if (rows[n].size() != c) throw ConfigError("pred", "rows differ in length");
    std::copy(rows[n].begin(), rows[n].end(), pred.row(n).begin());
  }
  std::vector<std::size_t> classes;
  for (const auto& y : doc.at("label")) {
    if (y.is_number_integer()) {
      classes.push_back(y.get<std::size_t>());
    } else {
      const auto hot = y.get<std::vector<double>>();
      const auto it = std::find(hot.begin(), hot.end(), 1.0);
      if (hot.size() != c || it == hot.end()) throw ConfigError("label", "expected class indices or one-hot rows");
      classes.push_back(static_cast<std::size_t>(it - hot.begin()));
    }
  }
  const IntervalLabelMap label(std::move(classes), c);
  const int l = doc.value("l", 2);
  const auto kind = parse_labeled_loss(doc.value("loss", std::string("pdm")));
  const auto reduction = parse_pdm_reduction(doc.value("reduction", std::string("sum_pow")));
  const LossValue v = labeled_loss(kind, pred, label, l, reduction);
  std::cout.precision(17);
  std::cout << "value," << v.value << '\n';
  for (std::size_t n = 0; n < pred.rows(); ++n) {
    std::cout << "grad";
    for (std::size_t j = 0; j < c; ++j) std::cout << ',' << v.grads[0](n, j);
    std::cout << '\n';
  }
  return 0;
}

// ---- dump-attention -----------------------------------------------------------

struct DumpArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
  std::size_t scene = 0;
};

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : std::nan("");
}

int dump_attention(const DumpArgs& a) {
  require_dir(a.checkpoint, "checkpoint");
  require_dir(a.data, "dataset");
  DualBranchModel model = load_checkpoint(a.checkpoint);
  const auto dataset = load_dataset(a.data);
  const Scene& scene = find_scene(dataset.scenes, a.scene);
  const std::size_t stride = model.config().stride;

  Graph g;
  const DualOutput out = model.forward(g, scene.image, false);
  std::filesystem::create_directories(a.out);
  std::size_t files = 0;
  for (int b = 0; b < 2; ++b) {
    const Tensor& att = out.branches[static_cast<std::size_t>(b)].attention.value();
    for (std::size_t j = 0; j < att.rows(); ++j) {
      char name[64];
      std::snprintf(name, sizeof name, "branch%d_token%02zu.csv", b + 1, j);
      const auto row = att.row(j);
      write_grid_csv(a.out / name, scene.image.rows(), scene.image.cols(), stride, row);
      ++files;
    }
  }
  // Attention of the first-branch background token against empty patches.
  const auto densities = scene_patch_densities(scene, kDefaultSigma, stride);
  const auto labels = assign_intervals(densities, model.partitions().branch1);
  std::vector<double> empty(labels.size()), background(labels.size());
  const auto token0 = out.branches[0].attention.value().row(0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    empty[n] = labels.label(n) == 0 ? 1.0 : 0.0;
    background[n] = token0[n];
  }
  std::printf("files,%zu\nbackground_correlation,%.6f\n", files, pearson(background, empty));
  return 0;
}

// ---- selftest -----------------------------------------------------------------

int selftest(std::size_t cases, std::uint64_t seed) {
  bool ok = true;
  std::printf("%-22s %6s %12s %14s\n", "target", "cases", "coordinates", "max_rel_error");
  for (const auto& e : gradient_suite(cases, seed)) {
    const bool pass = e.max_relative_error <= kSelftestTolerance && e.invariant_max_abs_gradient <= 1e-10;
    ok = ok && pass;
    std::printf("%-22s %6zu %12zu %14.3e %s\n", e.target.c_str(), e.cases, e.coordinates, e.max_relative_error,
                pass ? "ok" : "FAIL");
  }
  return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pixel-wise density-distribution counting toolkit"};
  app.require_subcommand(1);
  std::function<int()> action;

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic crowd-scene dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--n", gen.n, "Number of scenes")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "Base seed; scene i uses seed + i");
  gen_cmd->add_option("--spec", gen.spec_path, "SceneSpec JSON");
  gen_cmd->add_option("--k-min", gen.k_min, "Minimum count per scene");
  gen_cmd->add_option("--k-max", gen.k_max, "Maximum count per scene");
  gen_cmd->callback([&] { action = [&] { return gen_data(gen); }; });

  MakeLabelsArgs ml;
  auto* ml_cmd = app.add_subcommand("make-labels", "Write patch densities and interval labels next to each scene");
  ml_cmd->add_option("--data", ml.data, "Dataset directory")->required();
  ml_cmd->add_option("--sigma", ml.sigma, "Gaussian kernel std in pixels");
  ml_cmd->add_option("--stride", ml.stride, "Patch size");
  ml_cmd->add_option("--partition", ml.partition, "uep, uniform_len or uniform_num");
  ml_cmd->add_option("--scale", ml.scale, "Partition border scale");
  ml_cmd->add_flag("!--no-interleave", ml.interleaved, "Use the first partition for both branches");
  ml_cmd->callback([&] { action = [&] { return make_labels(ml); }; });

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train one model");
  tr_cmd->add_option("--config", tr.config, "Config JSON")->required();
  tr_cmd->add_option("--out", tr.out, "Output directory")->required();
  tr_cmd->add_option("--data", tr.data, "Dataset directory (default: generate from the config)");
  tr_cmd->add_option("--seed", tr.seed, "Override the config seed");
  tr_cmd->callback([&] { action = [&] { return train_cmd(tr); }; });

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required();
  ev_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  ev_cmd->add_option("--out", ev.out, "Per-scene CSV");
  ev_cmd->add_option("--fusion", ev.fusion, "confidence, average or max_category");
  ev_cmd->callback([&] { action = [&] { return eval_cmd(ev); }; });

  ExperimentArgs ex;
  auto* ex_cmd = app.add_subcommand("run-experiment", "Train and evaluate a preset over several seeds");
  ex_cmd->add_option("--config", ex.config, "Config JSON")->required();
  ex_cmd->add_option("--out", ex.out, "Report root directory")->required();
  ex_cmd->add_option("--seeds", ex.seeds, "Seeds, e.g. 0,1,2")->delimiter(',');
  ex_cmd->add_option("--preset", ex.preset, "single, loss-compare, ecr, fusion, norm-level, variants, partition");
  ex_cmd->add_flag("--overwrite", ex.overwrite, "Replace run-0001 instead of creating a new run directory");
  ex_cmd->callback([&] { action = [&] { return experiment_cmd(ex); }; });

  std::string loss_input;
  auto* il_cmd = app.add_subcommand("inspect-loss", "Print a loss value and gradient for a JSON payload");
  il_cmd->add_option("input", loss_input, "Payload {pred, label, l[, loss, reduction]} or - for stdin")->required();
  il_cmd->callback([&] { action = [&] { return inspect_loss(loss_input); }; });

  DumpArgs da;
  auto* da_cmd = app.add_subcommand("dump-attention", "Write final-layer cross-attention grids per token");
  da_cmd->add_option("--checkpoint", da.checkpoint, "Checkpoint directory")->required();
  da_cmd->add_option("--data", da.data, "Dataset directory")->required();
  da_cmd->add_option("--scene", da.scene, "Scene id")->required();
  da_cmd->add_option("--out", da.out, "Output directory")->required();
  da_cmd->callback([&] { action = [&] { return dump_attention(da); }; });

  std::size_t st_cases = 100;
  std::uint64_t st_seed = 0;
  auto* st_cmd = app.add_subcommand("selftest", "Finite-difference gradient checks");
  st_cmd->add_option("--cases", st_cases, "Random cases per target")->check(CLI::PositiveNumber);
  st_cmd->add_option("--seed", st_seed, "Seed");
  st_cmd->callback([&] { action = [&] { return selftest(st_cases, st_seed); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    return action();
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "invalid config: %s\n", e.what());
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "invalid JSON: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
}
