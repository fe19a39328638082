#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "densitydist/inference.hpp"
#include "densitydist/intervals.hpp"
#include "densitydist/labelgen.hpp"
#include "densitydist/losses.hpp"
#include "densitydist/model.hpp"
#include "densitydist/optimizer.hpp"
#include "densitydist/synthdata.hpp"

namespace densitydist {

/// Invalid configuration. `field()` names the offending JSON key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument("config field '" + field + "': " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Training produced a non-finite loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lambda = 0.01;
  double xi = 0.5;
  int l = 2;
  PdmReduction pdm_reduction = PdmReduction::sum_pow;
  LabeledLossKind labeled_loss = LabeledLossKind::pdm;

  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 100;
  std::size_t batch_size = 2;
  /// Unlabeled scenes consumed after every labeled batch.
  std::size_t unlabeled_batch_size = 2;
  double labeled_ratio = 0.10;
  /// Share of the labeled split held out for validation by the `train`
  /// command. Experiments evaluate on a separate test set instead.
  double val_fraction = 0.10;
  std::size_t eval_every = 1;
  std::uint64_t seed = 0;

  ModelVariant variant;
  bool reinit_queries = false;
  FusionMode fusion = FusionMode::confidence;
  PartitionStrategy partition = PartitionStrategy::uep;
  double partition_scale = 1.0;
  bool hflip = true;

  double sigma = kDefaultSigma;
  std::size_t stride = kDefaultStride;
  std::size_t z = 64;
  std::size_t heads = 2;
  std::size_t layers = 4;
  std::size_t ffn_hidden = 128;
  std::size_t mixing_layers = 2;
  double init_std = 0.02;

  /// Throws ConfigError.
  void validate() const;
  ModelConfig model_config() const;
  AdamSettings adam() const;

  nlohmann::json to_json() const;
  /// Unknown keys are rejected unless listed in `extra_keys`.
  static TrainConfig from_json(const nlohmann::json& doc, const std::vector<std::string>& extra_keys = {});
};

struct EpochRecord {
  std::size_t epoch = 0;
  double labeled_loss = 0.0;  // mean per labeled scene
  std::optional<double> unlabeled_loss;  // mean per unlabeled scene, before lambda
  std::optional<double> mask_fraction;
  std::optional<double> val_mae;
  std::optional<double> val_mse;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

enum class SplitMode {
  random,
  /// Sparsest scenes labeled, crowded ones unlabeled.
  sparse_labeled,
  /// Densest scenes labeled, sparse ones unlabeled.
  crowded_labeled
};

SplitMode parse_split_mode(const std::string& name);

struct DatasetSplit {
  std::vector<std::size_t> labeled;    // indices into the scene list
  std::vector<std::size_t> unlabeled;
};

/// round(ratio·n) labeled scenes. Random mode is a seeded shuffle; the sorted
/// modes order by annotated count (ties by index).
DatasetSplit split_dataset(const std::vector<Scene>& scenes, double labeled_ratio, std::uint64_t seed,
                           SplitMode mode = SplitMode::random);

/// Moves max(1, round(fraction·|labeled|)) labeled indices to a validation
/// list, seeded. Returns the validation indices. fraction 0 returns none.
std::vector<std::size_t> hold_out(std::vector<std::size_t>& labeled, double fraction, std::uint64_t seed);

/// Labeled training sample with precomputed labels for both orientations.
struct LabeledScene {
  std::size_t id = 0;
  Tensor image;
  Tensor image_flipped;
  std::vector<IntervalLabelMap> labels;          // per branch
  std::vector<IntervalLabelMap> labels_flipped;  // per branch
  double count = 0.0;
};

/// Image only. Unlabeled scenes carry no annotation.
struct UnlabeledScene {
  std::size_t id = 0;
  Tensor image;
  Tensor image_flipped;
};

struct EvalScene {
  std::size_t id = 0;
  Tensor image;
  double count = 0.0;
};

Tensor flip_image(const Tensor& image);

/// Patch densities of an annotated scene at the config's sigma and stride.
std::vector<double> scene_patch_densities(const Scene& scene, double sigma, std::size_t stride);

DualPartition build_partitions(const TrainConfig& config, const std::vector<Scene>& labeled);
LabeledScene make_labeled(const Scene& scene, const DualPartition& partitions, double sigma, std::size_t stride);
UnlabeledScene make_unlabeled(const Tensor& image, std::size_t id);
EvalScene make_eval(const Scene& scene);

struct EvalRow {
  std::size_t id = 0;
  double gt_count = 0.0;
  double pred_count = 0.0;
  double abs_err = 0.0;
};

struct Evaluation {
  std::vector<EvalRow> rows;
  CountingMetrics metrics;
};

Evaluation evaluate(DualBranchModel& model, const std::vector<EvalScene>& scenes, FusionMode mode);
void write_eval_csv(const std::filesystem::path& path, const Evaluation& evaluation);

struct TrainResult {
  DualBranchModel model;
  TrainHistory history;
};

/// Called after each epoch with the record just appended.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam on L_P + lambda·L_E. Each step processes one labeled batch followed
/// by one unlabeled batch; the unlabeled set is cycled with a reshuffle per
/// pass. With lambda = 0 the unlabeled path is skipped entirely.
TrainResult train(const TrainConfig& config, const DualPartition& partitions,
                  const std::vector<LabeledScene>& labeled, const std::vector<UnlabeledScene>& unlabeled,
                  const std::vector<EvalScene>& validation = {}, const EpochCallback& on_epoch = {});

}  // namespace densitydist
