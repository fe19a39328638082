#include "densitydist/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "densitydist/ops.hpp"

namespace densitydist {

namespace {

using nlohmann::json;

template <class T>
void read_number(const json& doc, const char* key, T& out) {
  if (!doc.contains(key)) return;
  const auto& v = doc.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(key, std::string("expected boolean, got ") + v.type_name());
    out = v.get<bool>();
  } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
      throw ConfigError(key, std::string("expected nonnegative integer, got ") + v.dump());
    }
    out = v.get<T>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(key, std::string("expected integer, got ") + v.dump());
    out = v.get<T>();
  } else {
    if (!v.is_number()) throw ConfigError(key, std::string("expected number, got ") + v.dump());
    out = v.get<T>();
  }
}

template <class Parse>
void read_enum(const json& doc, const char* key, Parse parse) {
  if (!doc.contains(key)) return;
  const auto& v = doc.at(key);
  if (!v.is_string()) throw ConfigError(key, std::string("expected string, got ") + v.dump());
  try {
    parse(v.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

std::string fmt_optional(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

void check_finite(double value, const char* what, std::size_t batch, double lp, double le) {
  if (std::isfinite(value)) return;
  std::ostringstream os;
  os << "non-finite " << what << " at batch " << batch << " (labeled loss " << lp << ", unlabeled loss " << le
     << ")";
  throw NumericError(os.str());
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const char* field, const std::string& msg) { throw ConfigError(field, msg); };
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda", "must be finite and >= 0");
  if (!(xi >= 0.0 && xi < 1.0)) fail("xi", "must lie in [0, 1)");
  if (l != 1 && l != 2) fail("l", "must be 1 or 2");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr", "must be finite and > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must lie in [0, 1)");
  if (!(eps > 0.0)) fail("eps", "must be > 0");
  if (epochs == 0) fail("epochs", "must be >= 1");
  if (batch_size == 0) fail("batch_size", "must be >= 1");
  if (unlabeled_batch_size == 0) fail("unlabeled_batch_size", "must be >= 1");
  if (!(labeled_ratio > 0.0 && labeled_ratio <= 1.0)) fail("labeled_ratio", "must lie in (0, 1]");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) fail("val_fraction", "must lie in [0, 1)");
  if (eval_every == 0) fail("eval_every", "must be >= 1");
  if (!(partition_scale > 0.0) || !std::isfinite(partition_scale)) fail("partition_scale", "must be > 0");
  if (!(sigma > 0.0)) fail("sigma", "must be > 0");
  if (stride == 0) fail("stride", "must be >= 1");
  if (z == 0) fail("z", "must be >= 1");
  if (heads == 0 || z % heads != 0) fail("heads", "must divide z");
  if (layers == 0) fail("layers", "must be >= 1");
  if (ffn_hidden == 0) fail("ffn_hidden", "must be >= 1");
  if (!(init_std > 0.0)) fail("init_std", "must be > 0");
  if (!variant.independent_decoders && !variant.independent_tokens) {
    fail("variant", "shared decoder with shared tokens has no distinct branches");
  }
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.z = z;
  m.heads = heads;
  m.ffn_hidden = ffn_hidden;
  m.layers = layers;
  m.stride = stride;
  m.mixing_layers = mixing_layers;
  m.init_std = init_std;
  m.variant = variant;
  m.reinit_queries = reinit_queries;
  return m;
}

AdamSettings TrainConfig::adam() const { return {lr, beta1, beta2, eps}; }

json TrainConfig::to_json() const {
  return {{"lambda", lambda},
          {"xi", xi},
          {"l", l},
          {"pdm_reduction", to_string(pdm_reduction)},
          {"labeled_loss", to_string(labeled_loss)},
          {"lr", lr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"eps", eps},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"unlabeled_batch_size", unlabeled_batch_size},
          {"labeled_ratio", labeled_ratio},
          {"val_fraction", val_fraction},
          {"eval_every", eval_every},
          {"seed", seed},
          {"variant", variant.name()},
          {"independent_decoders", variant.independent_decoders},
          {"independent_tokens", variant.independent_tokens},
          {"interleaved_semantics", variant.interleaved_semantics},
          {"reinit_queries", reinit_queries},
          {"fusion", to_string(fusion)},
          {"partition", to_string(partition)},
          {"partition_scale", partition_scale},
          {"hflip", hflip},
          {"sigma", sigma},
          {"stride", stride},
          {"z", z},
          {"heads", heads},
          {"layers", layers},
          {"ffn_hidden", ffn_hidden},
          {"mixing_layers", mixing_layers},
          {"init_std", init_std}};
}

TrainConfig TrainConfig::from_json(const json& doc, const std::vector<std::string>& extra_keys) {
  if (!doc.is_object()) throw ConfigError("<root>", "expected a JSON object");
  TrainConfig c;
  const std::set<std::string> known = [&] {
    std::set<std::string> keys;
    const json defaults = c.to_json();
    for (const auto& [k, v] : defaults.items()) keys.insert(k);
    keys.insert(extra_keys.begin(), extra_keys.end());
    return keys;
  }();
  for (const auto& [k, v] : doc.items())
    if (!known.count(k)) throw ConfigError(k, "unknown field");

  read_number(doc, "lambda", c.lambda);
  read_number(doc, "xi", c.xi);
  read_number(doc, "l", c.l);
  read_enum(doc, "pdm_reduction", [&](const std::string& s) { c.pdm_reduction = parse_pdm_reduction(s); });
  read_enum(doc, "labeled_loss", [&](const std::string& s) { c.labeled_loss = parse_labeled_loss(s); });
  read_number(doc, "lr", c.lr);
  read_number(doc, "beta1", c.beta1);
  read_number(doc, "beta2", c.beta2);
  read_number(doc, "eps", c.eps);
  read_number(doc, "epochs", c.epochs);
  read_number(doc, "batch_size", c.batch_size);
  read_number(doc, "unlabeled_batch_size", c.unlabeled_batch_size);
  read_number(doc, "labeled_ratio", c.labeled_ratio);
  read_number(doc, "val_fraction", c.val_fraction);
  read_number(doc, "eval_every", c.eval_every);
  read_number(doc, "seed", c.seed);
  // Custom flag combinations are named "custom-..." and carried by the flags.
  read_enum(doc, "variant", [&](const std::string& s) {
    if (!s.starts_with("custom-")) c.variant = ModelVariant::parse(s);
  });
  read_number(doc, "independent_decoders", c.variant.independent_decoders);
  read_number(doc, "independent_tokens", c.variant.independent_tokens);
  read_number(doc, "interleaved_semantics", c.variant.interleaved_semantics);
  read_number(doc, "reinit_queries", c.reinit_queries);
  read_enum(doc, "fusion", [&](const std::string& s) { c.fusion = parse_fusion_mode(s); });
  read_enum(doc, "partition", [&](const std::string& s) { c.partition = parse_partition_strategy(s); });
  read_number(doc, "partition_scale", c.partition_scale);
  read_number(doc, "hflip", c.hflip);
  read_number(doc, "sigma", c.sigma);
  read_number(doc, "stride", c.stride);
  read_number(doc, "z", c.z);
  read_number(doc, "heads", c.heads);
  read_number(doc, "layers", c.layers);
  read_number(doc, "ffn_hidden", c.ffn_hidden);
  read_number(doc, "mixing_layers", c.mixing_layers);
  read_number(doc, "init_std", c.init_std);
  c.validate();
  return c;
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "epoch,labeled_loss,unlabeled_loss,mask_fraction,val_mae,val_mse\n";
  for (const auto& r : history.epochs) {
    out << r.epoch << ',' << r.labeled_loss << ',' << fmt_optional(r.unlabeled_loss) << ','
        << fmt_optional(r.mask_fraction) << ',' << fmt_optional(r.val_mae) << ',' << fmt_optional(r.val_mse) << '\n';
  }
}

SplitMode parse_split_mode(const std::string& name) {
  if (name == "random") return SplitMode::random;
  if (name == "sparse_labeled") return SplitMode::sparse_labeled;
  if (name == "crowded_labeled") return SplitMode::crowded_labeled;
  throw std::invalid_argument("unknown split mode '" + name + "' (random, sparse_labeled, crowded_labeled)");
}

DatasetSplit split_dataset(const std::vector<Scene>& scenes, double labeled_ratio, std::uint64_t seed,
                           SplitMode mode) {
  if (!(labeled_ratio > 0.0 && labeled_ratio <= 1.0)) {
    throw std::invalid_argument("split_dataset: ratio must lie in (0, 1]");
  }
  const std::size_t n = scenes.size();
  const auto n_labeled = static_cast<std::size_t>(std::llround(labeled_ratio * static_cast<double>(n)));
  if (n_labeled == 0) {
    throw std::invalid_argument("split_dataset: ratio " + std::to_string(labeled_ratio) + " of " +
                                std::to_string(n) + " scenes leaves no labeled scene");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (mode == SplitMode::random) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  } else {
    const bool ascending = mode == SplitMode::sparse_labeled;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto ka = scenes[a].annotation.points.size(), kb = scenes[b].annotation.points.size();
      return ascending ? ka < kb : ka > kb;
    });
  }
  DatasetSplit split;
  split.labeled.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_labeled));
  split.unlabeled.assign(order.begin() + static_cast<std::ptrdiff_t>(n_labeled), order.end());
  std::sort(split.labeled.begin(), split.labeled.end());
  std::sort(split.unlabeled.begin(), split.unlabeled.end());
  return split;
}

std::vector<std::size_t> hold_out(std::vector<std::size_t>& labeled, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || labeled.size() < 2) return {};
  auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(labeled.size())));
  k = std::clamp<std::size_t>(k, 1, labeled.size() - 1);
  std::vector<std::size_t> order = labeled;
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> held(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(held.begin(), held.end());
  std::erase_if(labeled, [&](std::size_t i) { return std::binary_search(held.begin(), held.end(), i); });
  return held;
}

Tensor flip_image(const Tensor& image) {
  require_matrix(image, "flip_image");
  Tensor out = image;
  for (std::size_t r = 0; r < image.rows(); ++r) {
    auto row = out.row(r);
    std::reverse(row.begin(), row.end());
  }
  return out;
}

std::vector<double> scene_patch_densities(const Scene& scene, double sigma, std::size_t stride) {
  return pool_patches(render_density(scene.annotation, sigma), stride);
}

DualPartition build_partitions(const TrainConfig& config, const std::vector<Scene>& labeled) {
  std::vector<double> samples;
  if (config.partition == PartitionStrategy::uniform_num) {
    for (const auto& s : labeled) {
      const auto d = scene_patch_densities(s, config.sigma, config.stride);
      samples.insert(samples.end(), d.begin(), d.end());
    }
  }
  return build_dual_partition(config.partition, config.variant.interleaved_semantics, config.partition_scale,
                              samples);
}

LabeledScene make_labeled(const Scene& scene, const DualPartition& partitions, double sigma, std::size_t stride) {
  LabeledScene out;
  out.id = scene.id;
  out.image = scene.image;
  out.image_flipped = flip_image(scene.image);
  out.count = static_cast<double>(scene.annotation.points.size());
  const auto densities = scene_patch_densities(scene, sigma, stride);
  const auto flipped = flip_grid(densities, scene.annotation.h / stride, scene.annotation.w / stride);
  for (int b = 0; b < 2; ++b) {
    out.labels.push_back(assign_intervals(densities, partitions.branch(b)));
    out.labels_flipped.push_back(assign_intervals(flipped, partitions.branch(b)));
  }
  return out;
}

UnlabeledScene make_unlabeled(const Tensor& image, std::size_t id) { return {id, image, flip_image(image)}; }

EvalScene make_eval(const Scene& scene) {
  return {scene.id, scene.image, static_cast<double>(scene.annotation.points.size())};
}

Evaluation evaluate(DualBranchModel& model, const std::vector<EvalScene>& scenes, FusionMode mode) {
  if (scenes.empty()) throw std::invalid_argument("evaluate: no scenes");
  Evaluation ev;
  std::vector<double> pred, gt;
  for (const auto& s : scenes) {
    const auto [o1, o2] = model.predict(s.image);
    for (const Tensor* o : {&o1, &o2})
      for (double v : o->values())
        if (!std::isfinite(v)) throw NumericError("non-finite prediction for scene " + std::to_string(s.id));
    const double count = predict_scene(o1, o2, model.partitions(), mode).count;
    ev.rows.push_back({s.id, s.count, count, std::abs(count - s.count)});
    pred.push_back(count);
    gt.push_back(s.count);
  }
  ev.metrics = counting_metrics(pred, gt);
  return ev;
}

void write_eval_csv(const std::filesystem::path& path, const Evaluation& evaluation) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "scene_id,gt_count,pred_count,abs_err\n";
  for (const auto& r : evaluation.rows) out << r.id << ',' << r.gt_count << ',' << r.pred_count << ',' << r.abs_err << '\n';
}

TrainResult train(const TrainConfig& config, const DualPartition& partitions,
                  const std::vector<LabeledScene>& labeled, const std::vector<UnlabeledScene>& unlabeled,
                  const std::vector<EvalScene>& validation, const EpochCallback& on_epoch) {
  config.validate();
  if (labeled.empty()) throw std::invalid_argument("train: no labeled scenes");
  TrainResult result{DualBranchModel(config.model_config(), partitions, config.seed), {}};
  DualBranchModel& model = result.model;
  AdamState adam;
  const AdamSettings settings = config.adam();
  const bool use_unlabeled = config.lambda > 0.0 && !unlabeled.empty();
  const auto& v1 = partitions.branch1.reps();
  const auto& v2 = partitions.branch2.reps();

  // Separate streams keep the labeled path identical whether or not the
  // unlabeled path runs.
  std::mt19937_64 labeled_rng(config.seed * 6364136223846793005ULL + 1442695040888963407ULL);
  std::mt19937_64 unlabeled_rng(config.seed * 6364136223846793005ULL + 0x9e3779b97f4a7c15ULL);
  std::bernoulli_distribution coin(0.5);

  std::vector<std::size_t> lab_order(labeled.size());
  std::iota(lab_order.begin(), lab_order.end(), std::size_t{0});
  std::vector<std::size_t> unl_order(unlabeled.size());
  std::iota(unl_order.begin(), unl_order.end(), std::size_t{0});
  std::size_t unl_cursor = unl_order.size();  // forces a shuffle on first use

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(lab_order.begin(), lab_order.end(), labeled_rng);
    double lp_sum = 0.0, le_sum = 0.0;
    std::size_t le_scenes = 0, active = 0, patches = 0;

    for (std::size_t start = 0; start < lab_order.size(); start += config.batch_size, ++step) {
      model.params().zero_grad();
      double batch_lp = 0.0, batch_le = 0.0;
      const std::size_t end = std::min(lab_order.size(), start + config.batch_size);
      for (std::size_t k = start; k < end; ++k) {
        const LabeledScene& s = labeled[lab_order[k]];
        const bool flip = config.hflip && coin(labeled_rng);
        const auto& labels = flip ? s.labels_flipped : s.labels;
        Graph g;
        const DualOutput out = model.forward(g, flip ? s.image_flipped : s.image, true, step * 131 + k);
        std::vector<Var> preds;
        std::vector<Tensor> grads;
        double value = 0.0;
        for (std::size_t b = 0; b < 2; ++b) {
          preds.push_back(ops::transpose(out.branches[b].probs));
          LossValue lv = labeled_loss(config.labeled_loss, preds.back().value(), labels[b], config.l,
                                      config.pdm_reduction);
          value += lv.value;
          grads.push_back(std::move(lv.grads[0]));
        }
        check_finite(value, "labeled loss", step, value, batch_le);
        g.backward(ops::external_scalar(preds, value, std::move(grads)));
        g.accumulate_parameter_grads();
        batch_lp += value;
      }

      if (use_unlabeled) {
        for (std::size_t k = 0; k < config.unlabeled_batch_size; ++k) {
          if (unl_cursor == unl_order.size()) {
            std::shuffle(unl_order.begin(), unl_order.end(), unlabeled_rng);
            unl_cursor = 0;
          }
          const UnlabeledScene& s = unlabeled[unl_order[unl_cursor++]];
          const bool flip = config.hflip && coin(unlabeled_rng);
          Graph g;
          const DualOutput out = model.forward(g, flip ? s.image_flipped : s.image, true, step * 131 + 64 + k);
          std::vector<Var> preds{ops::transpose(out.branches[0].probs), ops::transpose(out.branches[1].probs)};
          const Tensor& o1 = preds[0].value();
          const Tensor& o2 = preds[1].value();
          const SupervisionMask mask = supervision_mask(o1, o2, config.xi);
          LossValue lv = ecr_loss(o1, o2, v1, v2, mask);
          check_finite(lv.value, "unlabeled loss", step, batch_lp, lv.value);
          for (auto& gr : lv.grads)
            for (double& x : gr.values()) x *= config.lambda;
          g.backward(ops::external_scalar(preds, config.lambda * lv.value, std::move(lv.grads)));
          g.accumulate_parameter_grads();
          batch_le += lv.value;
          active += static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
          patches += mask.size();
          ++le_scenes;
        }
      }

      check_finite(batch_lp + config.lambda * batch_le, "total loss", step, batch_lp, batch_le);
      for (const auto& p : model.params().items())
        for (double gv : p.grad.values())
          if (!std::isfinite(gv)) {
            throw NumericError("non-finite gradient in '" + p.name + "' at batch " + std::to_string(step));
          }
      optimizer_step(model.params(), adam, settings);
      lp_sum += batch_lp;
      le_sum += batch_le;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.labeled_loss = lp_sum / static_cast<double>(labeled.size());
    if (use_unlabeled) {
      rec.unlabeled_loss = le_sum / static_cast<double>(le_scenes);
      rec.mask_fraction = patches ? static_cast<double>(active) / static_cast<double>(patches) : 0.0;
    }
    if (!validation.empty() && (epoch % config.eval_every == 0 || epoch == config.epochs)) {
      const auto ev = evaluate(model, validation, config.fusion);
      rec.val_mae = ev.metrics.mae;
      rec.val_mse = ev.metrics.mse;
    }
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace densitydist
