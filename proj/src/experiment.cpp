#include "densitydist/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "densitydist/checkpoint.hpp"

namespace densitydist {

using nlohmann::json;

json DatasetConfig::to_json() const {
  json doc = spec.to_json();
  doc["n_scenes"] = n_scenes;
  doc["seed"] = seed;
  doc["test_scenes"] = test_scenes;
  doc["test_seed"] = test_seed;
  doc["split"] = split == SplitMode::random           ? "random"
                 : split == SplitMode::sparse_labeled ? "sparse_labeled"
                                                      : "crowded_labeled";
  return doc;
}

DatasetConfig DatasetConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("dataset", "expected an object");
  DatasetConfig c;
  try {
    c.spec = SceneSpec::from_json(doc);
  } catch (const std::exception& e) {
    throw ConfigError("dataset", e.what());
  }
  auto count = [&](const char* key, auto& out) {
    if (!doc.contains(key)) return;
    const auto& v = doc.at(key);
    if (!v.is_number_unsigned()) throw ConfigError(std::string("dataset.") + key, "expected nonnegative integer");
    out = v.get<std::remove_reference_t<decltype(out)>>();
  };
  count("n_scenes", c.n_scenes);
  count("seed", c.seed);
  count("test_scenes", c.test_scenes);
  count("test_seed", c.test_seed);
  if (doc.contains("split")) {
    try {
      c.split = parse_split_mode(doc.at("split").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError("dataset.split", e.what());
    }
  }
  if (c.n_scenes == 0) throw ConfigError("dataset.n_scenes", "must be >= 1");
  if (c.test_scenes == 0) throw ConfigError("dataset.test_scenes", "must be >= 1");
  return c;
}

json ExperimentConfig::to_json() const {
  json doc = train.to_json();
  doc["dataset"] = dataset.to_json();
  doc["seeds"] = seeds;
  doc["preset"] = preset;
  return doc;
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  ExperimentConfig c;
  c.train = TrainConfig::from_json(doc, {"dataset", "seeds", "preset"});
  if (doc.contains("dataset")) c.dataset = DatasetConfig::from_json(doc.at("dataset"));
  if (doc.contains("seeds")) {
    const auto& s = doc.at("seeds");
    if (!s.is_array() || s.empty()) throw ConfigError("seeds", "expected a nonempty array of integers");
    c.seeds.clear();
    for (const auto& v : s) {
      if (!v.is_number_unsigned()) throw ConfigError("seeds", "expected nonnegative integers");
      c.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  if (doc.contains("preset")) {
    if (!doc.at("preset").is_string()) throw ConfigError("preset", "expected string");
    c.preset = doc.at("preset").get<std::string>();
    try {
      preset_settings(c.preset, c.train);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("preset", e.what());
    }
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", e.what());
  }
  return from_json(doc);
}

std::string dataset_key(const DatasetConfig& config) {
  const std::string text = config.to_json().dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PreparedData prepare_data(const DatasetConfig& config, const std::optional<std::filesystem::path>& cache_dir) {
  auto build = [&](std::size_t n, std::uint64_t seed, const std::string& part) {
    if (!cache_dir) return generate_dataset(n, config.spec, seed);
    const auto dir = *cache_dir / ("dataset-" + dataset_key(config)) / part;
    if (std::filesystem::exists(dir / "manifest.json")) {
      auto loaded = load_dataset(dir);
      if (loaded.scenes.size() == n && loaded.seed == seed) return std::move(loaded.scenes);
    }
    auto scenes = generate_dataset(n, config.spec, seed);
    save_dataset(dir, scenes, config.spec, seed);
    return scenes;
  };
  return {build(config.n_scenes, config.seed, "train"), build(config.test_scenes, config.test_seed, "test")};
}

SeedRun run_seed(const TrainConfig& config, const PreparedData& data, SplitMode split_mode,
                 const std::vector<FusionMode>& fusions, const EpochCallback& on_epoch) {
  DatasetSplit split = split_dataset(data.train, config.labeled_ratio, config.seed, split_mode);
  const auto held = hold_out(split.labeled, config.val_fraction, config.seed);

  std::vector<Scene> labeled_raw;
  for (auto i : split.labeled) labeled_raw.push_back(data.train[i]);
  const DualPartition partitions = build_partitions(config, labeled_raw);

  std::vector<LabeledScene> labeled;
  for (const auto& s : labeled_raw) labeled.push_back(make_labeled(s, partitions, config.sigma, config.stride));
  std::vector<UnlabeledScene> unlabeled;
  for (auto i : split.unlabeled) unlabeled.push_back(make_unlabeled(data.train[i].image, data.train[i].id));
  std::vector<EvalScene> validation;
  for (auto i : held) validation.push_back(make_eval(data.train[i]));
  std::vector<EvalScene> test;
  for (const auto& s : data.test) test.push_back(make_eval(s));

  SeedRun run{train(config, partitions, labeled, unlabeled, validation, on_epoch), {}, labeled.size(),
              unlabeled.size()};
  for (auto mode : fusions) run.evaluations.emplace_back(mode, evaluate(run.result.model, test, mode));
  return run;
}

std::vector<std::string> preset_names() {
  return {"single", "loss-compare", "ecr", "fusion", "norm-level", "variants", "partition"};
}

std::vector<Setting> preset_settings(const std::string& preset, const TrainConfig& base) {
  std::vector<Setting> out;
  auto add = [&](std::string name, TrainConfig c, std::vector<FusionMode> fusions = {}) {
    if (fusions.empty()) fusions = {c.fusion};
    out.push_back({std::move(name), std::move(c), std::move(fusions)});
  };
  if (preset == "single") {
    add("base", base);
  } else if (preset == "loss-compare") {
    for (auto kind : {LabeledLossKind::pdm, LabeledLossKind::ce, LabeledLossKind::mse}) {
      TrainConfig c = base;
      c.labeled_loss = kind;
      add(to_string(kind), c);
    }
  } else if (preset == "ecr") {
    TrainConfig off = base;
    off.lambda = 0.0;
    TrainConfig on = base;
    if (on.lambda == 0.0) on.lambda = 0.01;
    add("lambda=0", off);
    char name[64];
    std::snprintf(name, sizeof name, "lambda=%g", on.lambda);
    add(name, on);
  } else if (preset == "fusion") {
    add("base", base, {FusionMode::confidence, FusionMode::average, FusionMode::max_category});
  } else if (preset == "norm-level") {
    for (int l : {1, 2}) {
      TrainConfig c = base;
      c.labeled_loss = LabeledLossKind::pdm;
      c.l = l;
      add("l=" + std::to_string(l), c);
    }
  } else if (preset == "variants") {
    for (const char* name : {"p3net", "sdds", "stds", "stss", "dtss"}) {
      TrainConfig c = base;
      c.variant = ModelVariant::parse(name);
      add(name, c);
    }
  } else if (preset == "partition") {
    for (auto s : {PartitionStrategy::uep, PartitionStrategy::uniform_len, PartitionStrategy::uniform_num}) {
      TrainConfig c = base;
      c.partition = s;
      add(to_string(s), c);
    }
  } else {
    std::string names;
    for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown preset '" + preset + "' (" + names + ")");
  }
  return out;
}

std::vector<ExperimentAggregate> aggregate_rows(const std::vector<ExperimentRow>& rows) {
  std::vector<ExperimentAggregate> out;
  std::map<std::pair<std::string, std::string>, std::vector<const ExperimentRow*>> groups;
  for (const auto& r : rows) {
    auto& g = groups[{r.setting, r.fusion}];
    if (g.empty()) out.push_back({r.setting, r.fusion});
    g.push_back(&r);
  }
  for (auto& a : out) {
    const auto& g = groups[{a.setting, a.fusion}];
    const double n = static_cast<double>(g.size());
    a.runs = g.size();
    for (const auto* r : g) {
      a.mae_mean += r->mae / n;
      a.mse_mean += r->mse / n;
    }
    if (g.size() > 1) {
      double vm = 0.0, vs = 0.0;
      for (const auto* r : g) {
        vm += (r->mae - a.mae_mean) * (r->mae - a.mae_mean);
        vs += (r->mse - a.mse_mean) * (r->mse - a.mse_mean);
      }
      a.mae_std = std::sqrt(vm / (n - 1.0));
      a.mse_std = std::sqrt(vs / (n - 1.0));
    }
  }
  return out;
}

json ExperimentReport::to_json() const {
  json rows_doc = json::array();
  for (const auto& r : rows) {
    rows_doc.push_back({{"setting", r.setting},
                        {"fusion", r.fusion},
                        {"seed", r.seed},
                        {"labeled", r.labeled},
                        {"unlabeled", r.unlabeled},
                        {"mae", r.mae},
                        {"mse", r.mse}});
  }
  json agg = json::array();
  for (const auto& a : aggregates) {
    agg.push_back({{"setting", a.setting},
                   {"fusion", a.fusion},
                   {"runs", a.runs},
                   {"mae_mean", a.mae_mean},
                   {"mae_std", a.mae_std},
                   {"mse_mean", a.mse_mean},
                   {"mse_std", a.mse_std}});
  }
  return {{"config", config}, {"rows", rows_doc}, {"aggregates", agg}};
}

namespace {

std::filesystem::path next_run_dir(const std::filesystem::path& root, bool overwrite) {
  char name[32];
  if (overwrite) {
    const auto dir = root / "run-0001";
    std::filesystem::remove_all(dir);
    return dir;
  }
  for (int i = 1;; ++i) {
    std::snprintf(name, sizeof name, "run-%04d", i);
    if (!std::filesystem::exists(root / name)) return root / name;
  }
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, const ExperimentOptions& options,
                                std::filesystem::path* run_dir_out) {
  const auto settings = preset_settings(config.preset, config.train);
  const auto run_dir = next_run_dir(options.out_root, options.overwrite);
  std::filesystem::create_directories(run_dir);
  if (run_dir_out) *run_dir_out = run_dir;
  std::ofstream(run_dir / "config.json") << config.to_json().dump(2) << '\n';

  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };
  const PreparedData data = prepare_data(config.dataset, options.cache_dir);

  ExperimentReport report;
  report.config = config.to_json();
  for (const auto& setting : settings) {
    for (auto seed : config.seeds) {
      TrainConfig c = setting.config;
      c.seed = seed;
      log("setting " + setting.name + " seed " + std::to_string(seed));
      SeedRun run = run_seed(c, data, config.dataset.split, setting.fusions);
      std::string tag = setting.name + "_seed" + std::to_string(seed);
      for (auto& ch : tag)
        if (ch == '=' || ch == '/') ch = '-';
      write_history_csv(run_dir / ("history_" + tag + ".csv"), run.result.history);
      save_checkpoint(run.result.model, run_dir / ("model_" + tag));
      for (const auto& [mode, ev] : run.evaluations) {
        write_eval_csv(run_dir / ("eval_" + tag + "_" + to_string(mode) + ".csv"), ev);
        report.rows.push_back({setting.name, to_string(mode), seed, run.labeled, run.unlabeled, ev.metrics.mae,
                               ev.metrics.mse});
        log("  " + to_string(mode) + " mae " + std::to_string(ev.metrics.mae));
      }
    }
  }
  report.aggregates = aggregate_rows(report.rows);

  std::ofstream(run_dir / "report.json") << report.to_json().dump(2) << '\n';
  std::ofstream csv(run_dir / "report.csv");
  csv.precision(17);
  csv << "setting,fusion,seed,labeled,unlabeled,mae,mse\n";
  for (const auto& r : report.rows) {
    csv << r.setting << ',' << r.fusion << ',' << r.seed << ',' << r.labeled << ',' << r.unlabeled << ',' << r.mae
        << ',' << r.mse << '\n';
  }
  csv << "\nsetting,fusion,runs,mae_mean,mae_std,mse_mean,mse_std\n";
  for (const auto& a : report.aggregates) {
    csv << a.setting << ',' << a.fusion << ',' << a.runs << ',' << a.mae_mean << ',' << a.mae_std << ','
        << a.mse_mean << ',' << a.mse_std << '\n';
  }
  return report;
}

}  // namespace densitydist
