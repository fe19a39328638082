#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "densitydist/trainer.hpp"

using namespace densitydist;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.z = 8;
  c.heads = 2;
  c.layers = 1;
  c.ffn_hidden = 8;
  c.mixing_layers = 1;
  c.epochs = 2;
  c.lr = 1e-2;
  return c;
}

SceneSpec tiny_spec() {
  SceneSpec s;
  s.h = s.w = 16;
  s.k_max = 20;
  return s;
}

struct Fixture {
  DualPartition partitions;
  std::vector<LabeledScene> labeled;
  std::vector<UnlabeledScene> unlabeled;
  std::vector<EvalScene> eval;
};

Fixture make_fixture(const TrainConfig& c, std::size_t n_lab, std::size_t n_unl) {
  const auto scenes = generate_dataset(n_lab + n_unl, tiny_spec(), 300);
  const std::vector<Scene> lab(scenes.begin(), scenes.begin() + static_cast<std::ptrdiff_t>(n_lab));
  Fixture f{build_partitions(c, lab), {}, {}, {}};
  for (const auto& s : lab) {
    f.labeled.push_back(make_labeled(s, f.partitions, c.sigma, c.stride));
    f.eval.push_back(make_eval(s));
  }
  for (std::size_t i = n_lab; i < scenes.size(); ++i) f.unlabeled.push_back(make_unlabeled(scenes[i].image, i));
  return f;
}

}  // namespace

TEST(Split, SizesAndDeterminism) {
  const auto scenes = generate_dataset(100, tiny_spec(), 1);
  const auto a = split_dataset(scenes, 0.10, 4), b = split_dataset(scenes, 0.10, 4);
  EXPECT_EQ(a.labeled.size(), 10u);
  EXPECT_EQ(a.unlabeled.size(), 90u);
  EXPECT_EQ(a.labeled, b.labeled);
  EXPECT_EQ(a.unlabeled, b.unlabeled);
  EXPECT_NE(split_dataset(scenes, 0.10, 5).labeled, a.labeled);
  EXPECT_TRUE(split_dataset(scenes, 1.0, 0).unlabeled.empty());
  EXPECT_THROW(split_dataset(scenes, 0.001, 0), std::invalid_argument);
  EXPECT_THROW(split_dataset(scenes, 0.0, 0), std::invalid_argument);
}

TEST(Split, SortedModes) {
  const auto scenes = generate_dataset(40, tiny_spec(), 9);
  const auto sparse = split_dataset(scenes, 0.25, 0, SplitMode::sparse_labeled);
  std::size_t max_lab = 0, min_unl = 1000;
  for (auto i : sparse.labeled) max_lab = std::max(max_lab, scenes[i].annotation.points.size());
  for (auto i : sparse.unlabeled) min_unl = std::min(min_unl, scenes[i].annotation.points.size());
  EXPECT_LE(max_lab, min_unl);
  EXPECT_EQ(parse_split_mode("crowded_labeled"), SplitMode::crowded_labeled);
}

TEST(Split, HoldOut) {
  std::vector<std::size_t> lab{1, 4, 6, 9, 12, 20, 21, 30, 31, 40};
  auto copy = lab;
  const auto held = hold_out(copy, 0.1, 3);
  ASSERT_EQ(held.size(), 1u);
  EXPECT_EQ(copy.size(), 9u);
  EXPECT_FALSE(std::binary_search(copy.begin(), copy.end(), held[0]));
  auto none = lab;
  EXPECT_TRUE(hold_out(none, 0.0, 3).empty());
  EXPECT_EQ(none, lab);
}

TEST(Config, ValidationNamesField) {
  TrainConfig c;
  c.lambda = -1;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "lambda");
  }
  c = TrainConfig{};
  c.l = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.xi = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  TrainConfig c = tiny_config();
  c.labeled_loss = LabeledLossKind::mse;
  c.variant = ModelVariant::parse("dtss");
  c.fusion = FusionMode::average;
  const auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  nlohmann::json doc = c.to_json();
  doc["lamda"] = 0.1;
  try {
    TrainConfig::from_json(doc);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "lamda");
  }
  EXPECT_THROW(TrainConfig::from_json({{"epochs", "ten"}}), ConfigError);
}

TEST(Train, OneEpochTwoScenes) {
  TrainConfig c = tiny_config();
  c.epochs = 1;
  const auto f = make_fixture(c, 2, 2);
  const auto r = train(c, f.partitions, f.labeled, f.unlabeled, f.eval);
  ASSERT_EQ(r.history.epochs.size(), 1u);
  const auto& e = r.history.epochs[0];
  EXPECT_TRUE(std::isfinite(e.labeled_loss));
  ASSERT_TRUE(e.unlabeled_loss.has_value());
  EXPECT_TRUE(std::isfinite(*e.unlabeled_loss));
  ASSERT_TRUE(e.val_mae.has_value());
  EXPECT_TRUE(std::isfinite(*e.val_mae));
}

TEST(Train, ReproducibleHistory) {
  TrainConfig c = tiny_config();
  const auto f = make_fixture(c, 3, 3);
  const auto a = train(c, f.partitions, f.labeled, f.unlabeled, f.eval);
  const auto b = train(c, f.partitions, f.labeled, f.unlabeled, f.eval);
  EXPECT_EQ(a.history, b.history);
  for (std::size_t i = 0; i < a.model.params().size(); ++i)
    EXPECT_EQ(a.model.params().items()[i].value, b.model.params().items()[i].value);
}

TEST(Train, ZeroLambdaMatchesLabeledOnlyRun) {
  TrainConfig c = tiny_config();
  c.lambda = 0.0;
  const auto f = make_fixture(c, 3, 4);
  const auto with_unl = train(c, f.partitions, f.labeled, f.unlabeled);
  const auto without = train(c, f.partitions, f.labeled, {});
  EXPECT_EQ(with_unl.history, without.history);
  for (std::size_t i = 0; i < without.model.params().size(); ++i)
    EXPECT_EQ(with_unl.model.params().items()[i].value, without.model.params().items()[i].value);
  EXPECT_FALSE(with_unl.history.epochs[0].unlabeled_loss.has_value());
}

TEST(Train, UnlabeledPathChangesParameters) {
  TrainConfig c = tiny_config();
  c.lambda = 1.0;
  c.xi = 0.0;
  const auto f = make_fixture(c, 3, 4);
  const auto a = train(c, f.partitions, f.labeled, f.unlabeled);
  const auto b = train(c, f.partitions, f.labeled, {});
  EXPECT_NE(a.model.params().at(param_names::tokens(0)).value, b.model.params().at(param_names::tokens(0)).value);
  ASSERT_TRUE(a.history.epochs[0].mask_fraction.has_value());
  EXPECT_EQ(*a.history.epochs[0].mask_fraction, 1.0);
}

TEST(Train, NonFiniteInputAborts) {
  TrainConfig c = tiny_config();
  auto f = make_fixture(c, 2, 0);
  f.labeled[0].image(3, 3) = std::numeric_limits<double>::quiet_NaN();
  f.labeled[0].image_flipped(3, 12) = std::numeric_limits<double>::quiet_NaN();
  try {
    train(c, f.partitions, f.labeled, {});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos);
  }
}

TEST(Train, RejectsEmptyLabeledSet) {
  const TrainConfig c = tiny_config();
  EXPECT_THROW(train(c, build_dual_partition(PartitionStrategy::uep, true, 1.0), {}, {}), std::invalid_argument);
}

TEST(Evaluate, RowsAndMetricsAgree) {
  TrainConfig c = tiny_config();
  c.epochs = 1;
  const auto f = make_fixture(c, 3, 0);
  auto r = train(c, f.partitions, f.labeled, {});
  const auto ev = evaluate(r.model, f.eval, FusionMode::confidence);
  ASSERT_EQ(ev.rows.size(), 3u);
  double mae = 0.0;
  for (const auto& row : ev.rows) {
    EXPECT_DOUBLE_EQ(row.abs_err, std::abs(row.pred_count - row.gt_count));
    mae += row.abs_err / 3.0;
  }
  EXPECT_NEAR(ev.metrics.mae, mae, 1e-12);
}

TEST(Labels, FlippedLabelsMatchFlippedScene) {
  const TrainConfig c;
  const auto scenes = generate_dataset(1, SceneSpec{}, 55);
  const auto part = build_partitions(c, scenes);
  const LabeledScene ls = make_labeled(scenes[0], part, c.sigma, c.stride);
  EXPECT_EQ(flip_image(flip_image(scenes[0].image)), scenes[0].image);
  const auto grid = flip_grid(scene_patch_densities(scenes[0], c.sigma, c.stride), 16, 16);
  EXPECT_EQ(ls.labels_flipped[1].classes(), assign_intervals(grid, part.branch2).classes());
}
