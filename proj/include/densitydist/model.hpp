#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "densitydist/autodiff.hpp"
#include "densitydist/intervals.hpp"

namespace densitydist {

/// Which parts of the dual-branch network are independent.
///
///   P3Net (true,  true,  true)   SDDS (false, true,  true)
///   STDS  (true,  false, true)   STSS (true,  false, false)
///   DTSS  (true,  true,  false)
struct ModelVariant {
  bool independent_decoders = true;
  bool independent_tokens = true;
  bool interleaved_semantics = true;

  static ModelVariant parse(const std::string& name);
  std::string name() const;
  friend bool operator==(const ModelVariant&, const ModelVariant&) = default;
};

struct ModelConfig {
  std::size_t z = 64;
  std::size_t heads = 2;
  std::size_t ffn_hidden = 128;
  std::size_t layers = 4;
  std::size_t stride = 4;
  std::size_t mixing_layers = 2;
  double init_std = 0.02;
  ModelVariant variant;
  /// Re-sample the density tokens for every input instead of using the
  /// learned ones (random-query ablation).
  bool reinit_queries = false;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);
};

/// Weight names inside a ParameterSet. Decoder `d` and token set `t` are 0 or
/// 1 depending on the variant.
namespace param_names {
std::string tokens(std::size_t t);
std::string decoder(std::size_t d, std::size_t layer, const std::string& leaf);
std::string backbone(const std::string& leaf);
}  // namespace param_names

/// Graph-side handle for one decoder stack.
struct DecoderWeights {
  struct Layer {
    Var self_wq, self_wk, self_wv, self_wo, self_gamma, self_beta;
    Var cross_wq, cross_wk, cross_wv, cross_gamma, cross_beta;
    Var ffn_w1, ffn_b1, ffn_w2, ffn_b2, ffn_gamma, ffn_beta;
  };
  std::vector<Layer> layers;
  std::size_t heads = 1;
};

struct BackboneWeights {
  Var embed_w, embed_b;
  struct Mixing {
    Var self_w, neighbor_w, bias;
  };
  std::vector<Mixing> mixing;
  std::size_t stride = 4;
};

struct DecodeResult {
  Var tokens;              // refined tokens, C×Z
  Var last_cross_attention;  // C×N, final layer
};

/// image: H×W grid. Strided patch embedding followed by residual mixing
/// layers that combine each patch with its 3×3 patch neighbourhood.
Var extract_features(Graph& g, const Tensor& image, const BackboneWeights& weights);

/// Self-attention + norm, cross-attention to the features + norm, and a
/// feed-forward block + norm, repeated per layer.
DecodeResult decode_tokens(Var tokens, Var features, const DecoderWeights& weights);

/// C×N scores tokens·featuresᵀ, softmax along the category dimension.
Var predict_distribution(Var refined_tokens, Var features);

struct BranchOutput {
  Var probs;      // C×N, columns sum to one
  Var attention;  // C×N cross-attention of the last decoder layer
};

struct DualOutput {
  Var features;
  std::array<BranchOutput, 2> branches;
};

/// Dual-branch density-token network with its interval partitions.
class DualBranchModel {
 public:
  /// Creates and initializes parameters (normal(0, init_std) weights, zero
  /// biases, identity layer-norm affine).
  DualBranchModel(ModelConfig config, DualPartition partitions, std::uint64_t seed);
  /// Wraps existing parameters; throws if they do not fit the variant.
  DualBranchModel(ModelConfig config, DualPartition partitions, ParameterSet params);

  const ModelConfig& config() const { return config_; }
  const DualPartition& partitions() const { return partitions_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  std::size_t classes(int branch) const { return partitions_.branch(branch).count(); }

  /// Builds the forward pass on `g`. With `trainable` the parameters become
  /// gradient leaves, otherwise constants. `query_seed` drives the token
  /// re-sampling when reinit_queries is set.
  DualOutput forward(Graph& g, const Tensor& image, bool trainable, std::uint64_t query_seed = 0);

  /// Inference convenience: N×C distributions for both branches.
  std::array<Tensor, 2> predict(const Tensor& image, std::uint64_t query_seed = 0);

  /// Throws std::invalid_argument when a required parameter is missing or
  /// mis-shaped for this variant.
  void validate() const;

 private:
  void initialize(std::uint64_t seed);

  ModelConfig config_;
  DualPartition partitions_;
  ParameterSet params_;
};

/// (C1, C2, token rows per set) implied by a variant and partitions.
std::size_t token_rows(const ModelVariant& variant, const DualPartition& partitions, std::size_t token_set);

}  // namespace densitydist
