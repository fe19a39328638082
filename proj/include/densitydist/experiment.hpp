#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "densitydist/synthdata.hpp"
#include "densitydist/trainer.hpp"

namespace densitydist {

/// Training pool plus a separate held-out test pool.
struct DatasetConfig {
  SceneSpec spec;
  std::size_t n_scenes = 200;
  std::uint64_t seed = 1000;
  std::size_t test_scenes = 100;
  std::uint64_t test_seed = 1000000;
  SplitMode split = SplitMode::random;

  nlohmann::json to_json() const;
  static DatasetConfig from_json(const nlohmann::json& doc);
};

/// Flat JSON: every TrainConfig field at top level, plus "dataset", "seeds"
/// and "preset".
struct ExperimentConfig {
  TrainConfig train;
  DatasetConfig dataset;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string preset = "single";

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& doc);
  static ExperimentConfig load(const std::filesystem::path& path);
};

struct PreparedData {
  std::vector<Scene> train;
  std::vector<Scene> test;
};

/// Generates both pools, or loads them from `cache_dir` when a dataset with
/// the same settings was stored there before.
PreparedData prepare_data(const DatasetConfig& config, const std::optional<std::filesystem::path>& cache_dir);

/// Cache key: hex digest of the dataset settings.
std::string dataset_key(const DatasetConfig& config);

struct SeedRun {
  TrainResult result;
  std::vector<std::pair<FusionMode, Evaluation>> evaluations;  // on the test pool
  std::size_t labeled = 0;
  std::size_t unlabeled = 0;
};

/// Split with `config.seed`, hold out validation scenes, train, and evaluate
/// on the test pool under every requested fusion mode.
SeedRun run_seed(const TrainConfig& config, const PreparedData& data, SplitMode split,
                 const std::vector<FusionMode>& fusions, const EpochCallback& on_epoch = {});

/// One trained configuration inside a preset.
struct Setting {
  std::string name;
  TrainConfig config;
  std::vector<FusionMode> fusions;
};

/// single, loss-compare, ecr, fusion, norm-level, variants, partition.
std::vector<Setting> preset_settings(const std::string& preset, const TrainConfig& base);
std::vector<std::string> preset_names();

struct ExperimentRow {
  std::string setting;
  std::string fusion;
  std::uint64_t seed = 0;
  std::size_t labeled = 0;
  std::size_t unlabeled = 0;
  double mae = 0.0;
  double mse = 0.0;
};

struct ExperimentAggregate {
  std::string setting;
  std::string fusion;
  std::size_t runs = 0;
  double mae_mean = 0.0;
  double mae_std = 0.0;
  double mse_mean = 0.0;
  double mse_std = 0.0;
};

struct ExperimentReport {
  nlohmann::json config;
  std::vector<ExperimentRow> rows;
  std::vector<ExperimentAggregate> aggregates;

  nlohmann::json to_json() const;
};

/// Mean and sample standard deviation per (setting, fusion), in first-seen order.
std::vector<ExperimentAggregate> aggregate_rows(const std::vector<ExperimentRow>& rows);

struct ExperimentOptions {
  std::filesystem::path out_root;
  std::optional<std::filesystem::path> cache_dir;
  bool overwrite = false;
  std::function<void(const std::string&)> log;
};

/// Runs every setting of the preset for every seed and writes report.json,
/// report.csv, config.json and per-run histories into a fresh run-NNNN
/// directory under out_root (run-0001 is replaced when overwrite is set).
/// Returns the report; `run_dir` receives the directory used.
ExperimentReport run_experiment(const ExperimentConfig& config, const ExperimentOptions& options,
                                std::filesystem::path* run_dir = nullptr);

}  // namespace densitydist
