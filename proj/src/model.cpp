#include "densitydist/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "densitydist/ops.hpp"

namespace densitydist {

namespace {

struct NamedVariant {
  const char* name;
  ModelVariant variant;
};

constexpr NamedVariant kVariants[] = {
    {"p3net", {true, true, true}}, {"sdds", {false, true, true}}, {"stds", {true, false, true}},
    {"stss", {true, false, false}}, {"dtss", {true, true, false}},
};

}  // namespace

ModelVariant ModelVariant::parse(const std::string& name) {
  for (const auto& v : kVariants)
    if (name == v.name) return v.variant;
  throw std::invalid_argument("unknown model variant '" + name + "' (p3net, sdds, stds, stss, dtss)");
}

std::string ModelVariant::name() const {
  for (const auto& v : kVariants)
    if (v.variant == *this) return v.name;
  // (false, false, *) has no named counterpart.
  return std::string("custom-") + (independent_decoders ? "D" : "d") + (independent_tokens ? "T" : "t") +
         (interleaved_semantics ? "S" : "s");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"z", z},
          {"heads", heads},
          {"ffn_hidden", ffn_hidden},
          {"layers", layers},
          {"stride", stride},
          {"mixing_layers", mixing_layers},
          {"init_std", init_std},
          {"variant", variant.name()},
          {"independent_decoders", variant.independent_decoders},
          {"independent_tokens", variant.independent_tokens},
          {"interleaved_semantics", variant.interleaved_semantics},
          {"reinit_queries", reinit_queries}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
  ModelConfig c;
  c.z = doc.value("z", c.z);
  c.heads = doc.value("heads", c.heads);
  c.ffn_hidden = doc.value("ffn_hidden", c.ffn_hidden);
  c.layers = doc.value("layers", c.layers);
  c.stride = doc.value("stride", c.stride);
  c.mixing_layers = doc.value("mixing_layers", c.mixing_layers);
  c.init_std = doc.value("init_std", c.init_std);
  if (doc.contains("independent_decoders") || !doc.contains("variant")) {
    c.variant.independent_decoders = doc.value("independent_decoders", true);
    c.variant.independent_tokens = doc.value("independent_tokens", true);
    c.variant.interleaved_semantics = doc.value("interleaved_semantics", true);
  } else {
    c.variant = ModelVariant::parse(doc.at("variant").get<std::string>());
  }
  c.reinit_queries = doc.value("reinit_queries", false);
  return c;
}

namespace param_names {
std::string tokens(std::size_t t) { return "tokens" + std::to_string(t); }
std::string decoder(std::size_t d, std::size_t layer, const std::string& leaf) {
  return "decoder" + std::to_string(d) + ".layer" + std::to_string(layer) + "." + leaf;
}
std::string backbone(const std::string& leaf) { return "backbone." + leaf; }
}  // namespace param_names

std::size_t token_rows(const ModelVariant& variant, const DualPartition& partitions, std::size_t token_set) {
  if (variant.independent_tokens) return partitions.branch(static_cast<int>(token_set)).count();
  return std::max(partitions.branch1.count(), partitions.branch2.count());
}

namespace {

Tensor image_patches(const Tensor& image, std::size_t stride) {
  require_matrix(image, "extract_features");
  const std::size_t h = image.rows(), w = image.cols();
  if (stride == 0 || h % stride != 0 || w % stride != 0) {
    throw std::invalid_argument("extract_features: image " + shape_string(image.shape()) +
                                " not divisible by stride " + std::to_string(stride));
  }
  const std::size_t gh = h / stride, gw = w / stride;
  Tensor patches = Tensor::matrix(gh * gw, stride * stride);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      patches((y / stride) * gw + x / stride, (y % stride) * stride + x % stride) = image(y, x);
  return patches;
}

Var attention(Var queries, Var keys, Var values, double scale) {
  Var scores = ops::scale(ops::matmul_nt(queries, keys), scale);
  return ops::matmul(ops::softmax_rows(scores), values);
}

}  // namespace

Var extract_features(Graph& g, const Tensor& image, const BackboneWeights& weights) {
  const std::size_t stride = weights.stride;
  Var patches = g.constant(image_patches(image, stride));
  const std::size_t gh = image.rows() / stride, gw = image.cols() / stride;
  Var x = ops::add_row(ops::matmul(patches, weights.embed_w), weights.embed_b);
  for (const auto& mix : weights.mixing) {
    Var local = ops::matmul(x, mix.self_w);
    Var around = ops::matmul(ops::neighbor_mean(x, gh, gw), mix.neighbor_w);
    x = ops::add(x, ops::gelu(ops::add_row(ops::add(local, around), mix.bias)));
  }
  return x;
}

DecodeResult decode_tokens(Var tokens, Var features, const DecoderWeights& weights) {
  const std::size_t z = tokens.value().cols();
  if (features.value().cols() != z) {
    throw std::invalid_argument("decode_tokens: token shape " + shape_string(tokens.shape()) +
                                " incompatible with features " + shape_string(features.shape()));
  }
  const std::size_t heads = weights.heads;
  if (heads == 0 || z % heads != 0) throw std::invalid_argument("decode_tokens: Z must be divisible by heads");
  const std::size_t dh = z / heads;
  Var t = tokens;
  Var last_attention;
  for (const auto& layer : weights.layers) {
    // Multi-head self-attention among tokens.
    Var q = ops::matmul(t, layer.self_wq);
    Var k = ops::matmul(t, layer.self_wk);
    Var v = ops::matmul(t, layer.self_wv);
    std::vector<Var> head_out;
    for (std::size_t h = 0; h < heads; ++h) {
      head_out.push_back(attention(ops::slice_cols(q, h * dh, dh), ops::slice_cols(k, h * dh, dh),
                                   ops::slice_cols(v, h * dh, dh), 1.0 / std::sqrt(static_cast<double>(dh))));
    }
    Var mixed = heads == 1 ? head_out.front() : ops::concat_cols(head_out);
    t = ops::layer_norm_rows(ops::add(t, ops::matmul(mixed, layer.self_wo)), layer.self_gamma, layer.self_beta);

    // Cross-attention: softmax((T Wq)(F Wk)ᵀ / sqrt(Z)) (F Wv).
    Var cq = ops::matmul(t, layer.cross_wq);
    Var ck = ops::matmul(features, layer.cross_wk);
    Var cv = ops::matmul(features, layer.cross_wv);
    last_attention = ops::softmax_rows(ops::scale(ops::matmul_nt(cq, ck), 1.0 / std::sqrt(static_cast<double>(z))));
    t = ops::layer_norm_rows(ops::add(t, ops::matmul(last_attention, cv)), layer.cross_gamma, layer.cross_beta);

    Var hidden = ops::gelu(ops::add_row(ops::matmul(t, layer.ffn_w1), layer.ffn_b1));
    Var ffn = ops::add_row(ops::matmul(hidden, layer.ffn_w2), layer.ffn_b2);
    t = ops::layer_norm_rows(ops::add(t, ffn), layer.ffn_gamma, layer.ffn_beta);
  }
  return {t, last_attention};
}

Var predict_distribution(Var refined_tokens, Var features) {
  return ops::softmax_cols(ops::matmul_nt(refined_tokens, features));
}

DualBranchModel::DualBranchModel(ModelConfig config, DualPartition partitions, std::uint64_t seed)
    : config_(std::move(config)), partitions_(std::move(partitions)) {
  initialize(seed);
  validate();
}

DualBranchModel::DualBranchModel(ModelConfig config, DualPartition partitions, ParameterSet params)
    : config_(std::move(config)), partitions_(std::move(partitions)), params_(std::move(params)) {
  validate();
}

void DualBranchModel::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, config_.init_std);
  const std::size_t z = config_.z;
  auto random = [&](std::size_t r, std::size_t c) {
    Tensor t = Tensor::matrix(r, c);
    for (auto& v : t.values()) v = normal(rng);
    return t;
  };
  auto zeros = [](std::size_t c) { return Tensor::matrix(1, c); };
  auto ones = [](std::size_t c) { return Tensor::matrix(1, c, 1.0); };

  const std::size_t s = config_.stride;
  params_.add(param_names::backbone("embed.w"), random(s * s, z));
  params_.add(param_names::backbone("embed.b"), zeros(z));
  for (std::size_t m = 0; m < config_.mixing_layers; ++m) {
    const std::string prefix = "mix" + std::to_string(m) + ".";
    params_.add(param_names::backbone(prefix + "self_w"), random(z, z));
    params_.add(param_names::backbone(prefix + "neighbor_w"), random(z, z));
    params_.add(param_names::backbone(prefix + "b"), zeros(z));
  }
  const std::size_t decoders = config_.variant.independent_decoders ? 2 : 1;
  for (std::size_t d = 0; d < decoders; ++d) {
    for (std::size_t l = 0; l < config_.layers; ++l) {
      auto name = [&](const char* leaf) { return param_names::decoder(d, l, leaf); };
      for (const char* leaf : {"self.wq", "self.wk", "self.wv", "self.wo"}) params_.add(name(leaf), random(z, z));
      params_.add(name("self.gamma"), ones(z));
      params_.add(name("self.beta"), zeros(z));
      for (const char* leaf : {"cross.wq", "cross.wk", "cross.wv"}) params_.add(name(leaf), random(z, z));
      params_.add(name("cross.gamma"), ones(z));
      params_.add(name("cross.beta"), zeros(z));
      params_.add(name("ffn.w1"), random(z, config_.ffn_hidden));
      params_.add(name("ffn.b1"), zeros(config_.ffn_hidden));
      params_.add(name("ffn.w2"), random(config_.ffn_hidden, z));
      params_.add(name("ffn.b2"), zeros(z));
      params_.add(name("ffn.gamma"), ones(z));
      params_.add(name("ffn.beta"), zeros(z));
    }
  }
  const std::size_t token_sets = config_.variant.independent_tokens ? 2 : 1;
  for (std::size_t t = 0; t < token_sets; ++t) {
    params_.add(param_names::tokens(t), random(token_rows(config_.variant, partitions_, t), z));
  }
}

void DualBranchModel::validate() const {
  if (!config_.variant.interleaved_semantics && !(partitions_.branch1 == partitions_.branch2)) {
    throw std::invalid_argument("model: variant " + config_.variant.name() +
                                " requires identical partitions on both branches");
  }
  if (config_.heads == 0 || config_.z % config_.heads != 0) {
    throw std::invalid_argument("model: z must be divisible by heads");
  }
  const std::size_t z = config_.z;
  auto expect = [&](const std::string& name, std::size_t r, std::size_t c) {
    if (!params_.contains(name)) throw std::invalid_argument("model: missing parameter '" + name + "'");
    const Shape want{r, c};
    if (params_.at(name).value.shape() != want) {
      throw std::invalid_argument("model: parameter '" + name + "' has shape " +
                                  shape_string(params_.at(name).value.shape()) + ", expected " + shape_string(want));
    }
  };
  expect(param_names::backbone("embed.w"), config_.stride * config_.stride, z);
  const std::size_t decoders = config_.variant.independent_decoders ? 2 : 1;
  for (std::size_t d = 0; d < decoders; ++d)
    for (std::size_t l = 0; l < config_.layers; ++l) {
      expect(param_names::decoder(d, l, "cross.wk"), z, z);
      expect(param_names::decoder(d, l, "ffn.w1"), z, config_.ffn_hidden);
    }
  if (!config_.variant.independent_decoders && params_.contains(param_names::decoder(1, 0, "self.wq"))) {
    throw std::invalid_argument("model: shared-decoder variant carries a second decoder");
  }
  const std::size_t token_sets = config_.variant.independent_tokens ? 2 : 1;
  for (std::size_t t = 0; t < token_sets; ++t)
    expect(param_names::tokens(t), token_rows(config_.variant, partitions_, t), z);
  if (!config_.variant.independent_tokens && params_.contains(param_names::tokens(1))) {
    throw std::invalid_argument("model: shared-token variant carries a second token set");
  }
}

DualOutput DualBranchModel::forward(Graph& g, const Tensor& image, bool trainable, std::uint64_t query_seed) {
  auto bind = [&](const std::string& name) -> Var {
    Parameter& p = params_.at(name);
    return trainable ? g.param(p) : g.constant(p.value);
  };

  BackboneWeights backbone;
  backbone.stride = config_.stride;
  backbone.embed_w = bind(param_names::backbone("embed.w"));
  backbone.embed_b = bind(param_names::backbone("embed.b"));
  for (std::size_t m = 0; m < config_.mixing_layers; ++m) {
    const std::string prefix = "mix" + std::to_string(m) + ".";
    backbone.mixing.push_back({bind(param_names::backbone(prefix + "self_w")),
                               bind(param_names::backbone(prefix + "neighbor_w")),
                               bind(param_names::backbone(prefix + "b"))});
  }

  DualOutput out;
  out.features = extract_features(g, image, backbone);

  std::array<std::optional<DecoderWeights>, 2> decoders;
  std::array<std::optional<Var>, 2> token_sets;
  for (int b = 0; b < 2; ++b) {
    const std::size_t d = config_.variant.independent_decoders ? static_cast<std::size_t>(b) : 0;
    if (!decoders[d]) {
      DecoderWeights w;
      w.heads = config_.heads;
      for (std::size_t l = 0; l < config_.layers; ++l) {
        auto p = [&](const char* leaf) { return bind(param_names::decoder(d, l, leaf)); };
        w.layers.push_back({p("self.wq"), p("self.wk"), p("self.wv"), p("self.wo"), p("self.gamma"), p("self.beta"),
                            p("cross.wq"), p("cross.wk"), p("cross.wv"), p("cross.gamma"), p("cross.beta"),
                            p("ffn.w1"), p("ffn.b1"), p("ffn.w2"), p("ffn.b2"), p("ffn.gamma"), p("ffn.beta")});
      }
      decoders[d] = std::move(w);
    }
    const std::size_t t = config_.variant.independent_tokens ? static_cast<std::size_t>(b) : 0;
    if (!token_sets[t]) {
      if (config_.reinit_queries) {
        std::mt19937_64 rng(query_seed * 2 + t);
        std::normal_distribution<double> normal(0.0, config_.init_std);
        Tensor fresh = Tensor::matrix(token_rows(config_.variant, partitions_, t), config_.z);
        for (auto& v : fresh.values()) v = normal(rng);
        token_sets[t] = g.constant(std::move(fresh));
      } else {
        token_sets[t] = bind(param_names::tokens(t));
      }
    }
    Var tokens = *token_sets[t];
    const std::size_t c = classes(b);
    if (tokens.value().rows() != c) tokens = ops::slice_rows(tokens, 0, c);
    DecodeResult decoded = decode_tokens(tokens, out.features, *decoders[d]);
    out.branches[static_cast<std::size_t>(b)] = {predict_distribution(decoded.tokens, out.features),
                                                 decoded.last_cross_attention};
  }
  return out;
}

std::array<Tensor, 2> DualBranchModel::predict(const Tensor& image, std::uint64_t query_seed) {
  Graph g;
  DualOutput out = forward(g, image, false, query_seed);
  return {out.branches[0].probs.value().transposed(), out.branches[1].probs.value().transposed()};
}

}  // namespace densitydist
