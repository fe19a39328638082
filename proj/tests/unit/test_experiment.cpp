#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "densitydist/experiment.hpp"

using namespace densitydist;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_experiment() {
  ExperimentConfig e;
  e.train.z = 8;
  e.train.heads = 2;
  e.train.layers = 1;
  e.train.ffn_hidden = 8;
  e.train.mixing_layers = 1;
  e.train.epochs = 1;
  e.train.val_fraction = 0.0;
  e.dataset.spec.h = e.dataset.spec.w = 16;
  e.dataset.spec.k_max = 20;
  e.dataset.n_scenes = 20;
  e.dataset.test_scenes = 4;
  return e;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Aggregate, MeanAndSampleStd) {
  std::vector<ExperimentRow> rows{{"a", "confidence", 0, 1, 1, 1.0, 2.0},
                                  {"b", "confidence", 0, 1, 1, 5.0, 5.0},
                                  {"a", "confidence", 1, 1, 1, 3.0, 4.0}};
  const auto agg = aggregate_rows(rows);
  ASSERT_EQ(agg.size(), 2u);
  EXPECT_EQ(agg[0].setting, "a");
  EXPECT_EQ(agg[0].runs, 2u);
  EXPECT_DOUBLE_EQ(agg[0].mae_mean, 2.0);
  EXPECT_NEAR(agg[0].mae_std, std::sqrt(2.0), 1e-12);
  EXPECT_EQ(agg[1].runs, 1u);
  EXPECT_EQ(agg[1].mae_std, 0.0);
}

TEST(Presets, SettingsPerPreset) {
  const TrainConfig base;
  EXPECT_EQ(preset_settings("loss-compare", base).size(), 3u);
  EXPECT_EQ(preset_settings("variants", base).size(), 5u);
  const auto ecr = preset_settings("ecr", base);
  ASSERT_EQ(ecr.size(), 2u);
  EXPECT_EQ(ecr[0].config.lambda, 0.0);
  EXPECT_EQ(ecr[1].config.lambda, 0.01);
  EXPECT_EQ(preset_settings("fusion", base)[0].fusions.size(), 3u);
  const auto nl = preset_settings("norm-level", base);
  EXPECT_EQ(nl[0].config.l, 1);
  EXPECT_EQ(nl[1].config.l, 2);
  EXPECT_THROW(preset_settings("nope", base), std::invalid_argument);
}

TEST(ExperimentConfig, JsonRoundTripAndErrors) {
  const auto e = tiny_experiment();
  const auto back = ExperimentConfig::from_json(e.to_json());
  EXPECT_EQ(back.to_json(), e.to_json());
  auto bad = e.to_json();
  bad["preset"] = "nope";
  EXPECT_THROW(ExperimentConfig::from_json(bad), ConfigError);
  EXPECT_THROW(ExperimentConfig::load("/nonexistent/config.json"), std::exception);
}

TEST(Experiment, ThreeSeedsAndIdenticalReruns) {
  const auto root = fs::temp_directory_path() / "dd_experiment";
  fs::remove_all(root);
  ExperimentOptions opts{root, root / "cache", true, {}};
  fs::path dir1, dir2;
  const auto r1 = run_experiment(tiny_experiment(), opts, &dir1);
  ASSERT_EQ(r1.rows.size(), 3u);
  ASSERT_EQ(r1.aggregates.size(), 1u);
  EXPECT_EQ(r1.aggregates[0].runs, 3u);
  EXPECT_EQ(r1.rows[0].labeled, 2u);
  EXPECT_EQ(r1.rows[0].unlabeled, 18u);
  const auto report = slurp(dir1 / "report.json");
  const auto csv = slurp(dir1 / "report.csv");
  EXPECT_TRUE(fs::exists(dir1 / "config.json"));
  EXPECT_TRUE(fs::exists(dir1 / "history_base_seed0.csv"));

  const auto r2 = run_experiment(tiny_experiment(), opts, &dir2);
  EXPECT_EQ(dir1, dir2);
  EXPECT_EQ(slurp(dir2 / "report.json"), report);
  EXPECT_EQ(slurp(dir2 / "report.csv"), csv);

  ExperimentOptions fresh{root, root / "cache", false, {}};
  fs::path dir3;
  run_experiment(tiny_experiment(), fresh, &dir3);
  EXPECT_NE(dir3, dir1);
  EXPECT_EQ(slurp(dir3 / "report.json"), report);
  fs::remove_all(root);
}

TEST(PrepareData, CacheRoundTrip) {
  const auto root = fs::temp_directory_path() / "dd_cache";
  fs::remove_all(root);
  const auto cfg = tiny_experiment().dataset;
  const auto a = prepare_data(cfg, root);
  const auto b = prepare_data(cfg, root);
  ASSERT_EQ(a.train.size(), 20u);
  ASSERT_EQ(a.test.size(), 4u);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(scene_hash(a.train[i]), scene_hash(b.train[i]));
  EXPECT_TRUE(fs::exists(root / ("dataset-" + dataset_key(cfg))));
  auto other = cfg;
  other.seed += 1;
  EXPECT_NE(dataset_key(other), dataset_key(cfg));
  fs::remove_all(root);
}
