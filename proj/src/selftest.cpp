#include "densitydist/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "densitydist/grad_check.hpp"
#include "densitydist/losses.hpp"
#include "densitydist/model.hpp"
#include "densitydist/ops.hpp"

namespace densitydist {

namespace {

using Rng = std::mt19937_64;

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

Tensor normal_matrix(Rng& rng, std::size_t rows, std::size_t cols, double std) {
  std::normal_distribution<double> n(0.0, std);
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

IntervalLabelMap random_labels(Rng& rng, std::size_t n, std::size_t c) {
  std::uniform_int_distribution<std::size_t> pick(0, c - 1);
  std::vector<std::size_t> classes(n);
  for (auto& k : classes) k = pick(rng);
  return IntervalLabelMap(std::move(classes), c);
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

void merge(GradSuiteEntry& entry, const GradCheckReport& r) {
  entry.coordinates += r.coordinates_checked;
  entry.max_relative_error = std::max(entry.max_relative_error, r.max_relative_error);
}

/// Sum of out ⊙ weights, turning a matrix output into a scalar.
Var project(Graph& g, Var out, const Tensor& weights) { return ops::sum(ops::mul(out, g.constant(weights))); }

DecoderWeights random_decoder(Graph& g, Rng& rng, std::size_t z, std::size_t hidden, std::size_t layers,
                              std::size_t heads) {
  DecoderWeights w;
  w.heads = heads;
  auto m = [&](std::size_t r, std::size_t c, double s) { return g.constant(normal_matrix(rng, r, c, s)); };
  auto affine = [&](double center) { return g.constant(random_matrix(rng, 1, z, center - 0.2, center + 0.2)); };
  for (std::size_t l = 0; l < layers; ++l) {
    w.layers.push_back({m(z, z, 0.4), m(z, z, 0.4), m(z, z, 0.4), m(z, z, 0.4), affine(1.0), affine(0.0),
                        m(z, z, 0.4), m(z, z, 0.4), m(z, z, 0.4), affine(1.0), affine(0.0), m(z, hidden, 0.4),
                        m(1, hidden, 0.1), m(hidden, z, 0.4), m(1, z, 0.1), affine(1.0), affine(0.0)});
  }
  return w;
}

}  // namespace

std::vector<GradSuiteEntry> gradient_suite(std::size_t cases, std::uint64_t seed) {
  Rng rng(seed);
  GradSuiteEntry pdm{"pdm_loss"}, ce{"ce_loss"}, mse{"mse_loss"}, ecr{"ecr_loss"}, decode{"decode_tokens"},
      predict{"predict_distribution"}, composed{"training_loss"};

  for (std::size_t k = 0; k < cases; ++k) {
    // Losses against unnormalized positive tables, so every coordinate is free.
    const std::size_t n = pick(rng, 1, 5), c = pick(rng, 2, 8);
    const Tensor pred = random_matrix(rng, n, c, 0.05, 1.0);
    const IntervalLabelMap label = random_labels(rng, n, c);
    const int l = static_cast<int>(pick(rng, 1, 2));
    const auto reduction = (k % 2 == 0) ? PdmReduction::sum_pow : PdmReduction::root;
    // Composed with a row softmax as in training. On raw tables an l = 1
    // gradient is often exactly zero, where the difference quotient only
    // sees rounding.
    const Tensor logits = normal_matrix(rng, n, c, 1.0);
    merge(pdm, grad_check(GraphFunction([&](Graph&, Var x) {
                            Var probs = ops::softmax_rows(x);
                            auto v = pdm_loss(probs.value(), label, l, reduction);
                            return ops::external_scalar(std::span<const Var>(&probs, 1), v.value, {v.grads[0]});
                          }),
                          logits));
    merge(pdm, grad_check(AnalyticFunction([&](const Tensor& p) {
                            auto v = pdm_loss(p, label, 2, reduction);
                            return std::pair{v.value, v.grads[0]};
                          }),
                          pred));
    for (auto [kind, entry] : {std::pair{LabeledLossKind::ce, &ce}, std::pair{LabeledLossKind::mse, &mse}}) {
      merge(*entry, grad_check(AnalyticFunction([&, kind = kind](const Tensor& p) {
                                 auto v = baseline_loss(kind, p, label);
                                 return std::pair{v.value, v.grads[0]};
                               }),
                               pred));
    }

    const std::size_t c2 = pick(rng, 2, 8);
    const Tensor o1 = random_matrix(rng, n, c, 0.0, 1.0), o2 = random_matrix(rng, n, c2, 0.0, 1.0);
    const Tensor v1 = random_matrix(rng, 1, c, 0.0, 3.0), v2 = random_matrix(rng, 1, c2, 0.0, 3.0);
    SupervisionMask mask(n);
    for (auto& b : mask) b = static_cast<int>(pick(rng, 0, 1));
    merge(ecr, grad_check(AnalyticFunction([&](const Tensor& x) {
                            auto v = ecr_loss(x, o2, v1.values(), v2.values(), mask);
                            return std::pair{v.value, v.grads[0]};
                          }),
                          o1));
    merge(ecr, grad_check(AnalyticFunction([&](const Tensor& x) {
                            auto v = ecr_loss(o1, x, v1.values(), v2.values(), mask);
                            return std::pair{v.value, v.grads[1]};
                          }),
                          o2));

    // Decoder and prediction head on tiny shapes.
    const std::size_t heads = pick(rng, 1, 2), z = 4 * heads, tokens_n = pick(rng, 2, 5), patches = pick(rng, 2, 9);
    const Tensor tokens = normal_matrix(rng, tokens_n, z, 1.0), features = normal_matrix(rng, patches, z, 1.0);
    const Tensor proj_tokens = normal_matrix(rng, tokens_n, z, 1.0);
    const Tensor proj_probs = normal_matrix(rng, tokens_n, patches, 1.0);
    const std::uint64_t weight_seed = rng();
    const std::size_t layers = pick(rng, 1, 2);
    auto decoded = [&](Graph& g, Var t, Var f) {
      Rng wr(weight_seed);
      return decode_tokens(t, f, random_decoder(g, wr, z, 6, layers, heads)).tokens;
    };
    merge(decode, grad_check(GraphFunction([&](Graph& g, Var t) {
                               return project(g, decoded(g, t, g.constant(features)), proj_tokens);
                             }),
                             tokens));
    merge(decode, grad_check(GraphFunction([&](Graph& g, Var f) {
                               return project(g, decoded(g, g.constant(tokens), f), proj_tokens);
                             }),
                             features));
    merge(predict, grad_check(GraphFunction([&](Graph& g, Var t) {
                                return project(g, predict_distribution(t, g.constant(features)), proj_probs);
                              }),
                              tokens));
    merge(predict, grad_check(GraphFunction([&](Graph& g, Var f) {
                                return project(g, predict_distribution(g.constant(tokens), f), proj_probs);
                              }),
                              features));

    // Composed objective L_P + lambda·L_E of a small model, mask held fixed.
    ModelConfig mc;
    mc.z = 8;
    mc.heads = 2;
    mc.ffn_hidden = 8;
    mc.layers = 1;
    mc.mixing_layers = 1;
    mc.init_std = 0.3;
    const std::string variants[] = {"p3net", "sdds", "stds", "stss", "dtss"};
    mc.variant = ModelVariant::parse(variants[k % 5]);
    const DualPartition parts =
        build_dual_partition(PartitionStrategy::uep, mc.variant.interleaved_semantics, 1.0);
    DualBranchModel model(mc, parts, rng());
    const Tensor labeled_image = random_matrix(rng, 8, 8, 0.0, 1.0);
    const Tensor unlabeled_image = random_matrix(rng, 8, 8, 0.0, 1.0);
    const std::size_t patches_n = 4;
    const IntervalLabelMap y1 = random_labels(rng, patches_n, parts.branch1.count());
    const IntervalLabelMap y2 = random_labels(rng, patches_n, parts.branch2.count());
    const double lambda = 0.5;
    const SupervisionMask unl_mask = [&] {
      auto probs = model.predict(unlabeled_image);
      SupervisionMask m = supervision_mask(probs[0], probs[1], 0.0);
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = (i + k) % 3 != 0;
      return m;
    }();
    auto loss = [&](Graph& g) {
      DualOutput lab = model.forward(g, labeled_image, true);
      std::vector<Var> lp{ops::transpose(lab.branches[0].probs), ops::transpose(lab.branches[1].probs)};
      auto a = pdm_loss(lp[0].value(), y1, 2);
      auto b = pdm_loss(lp[1].value(), y2, 2);
      Var labeled = ops::external_scalar(lp, a.value + b.value, {a.grads[0], b.grads[0]});
      DualOutput unl = model.forward(g, unlabeled_image, true);
      std::vector<Var> up{ops::transpose(unl.branches[0].probs), ops::transpose(unl.branches[1].probs)};
      auto e = ecr_loss(up[0].value(), up[1].value(), parts.branch1.reps(), parts.branch2.reps(), unl_mask);
      for (auto& gr : e.grads)
        for (double& x : gr.values()) x *= lambda;
      Var unlabeled = ops::external_scalar(up, lambda * e.value, std::move(e.grads));
      return ops::add(labeled, unlabeled);
    };
    GradCheckOptions opts;
    opts.max_coordinates = 40;
    opts.seed = rng();
    const std::string last_layer = ".layer" + std::to_string(mc.layers - 1) + ".ffn.beta";
    auto invariant = [&](const std::string& name) {
      return name.starts_with("decoder") && name.ends_with(last_layer);
    };
    opts.include_parameter = [&](const std::string& name) { return !invariant(name); };
    merge(composed, grad_check_parameters(model.params(), loss, opts));
    {
      model.params().zero_grad();
      Graph g;
      g.backward(loss(g));
      g.accumulate_parameter_grads();
      for (const auto& p : model.params().items())
        if (invariant(p.name))
          for (double v : p.grad.values())
            composed.invariant_max_abs_gradient = std::max(composed.invariant_max_abs_gradient, std::abs(v));
      model.params().zero_grad();
    }

    for (auto* e : {&pdm, &ce, &mse, &ecr, &decode, &predict, &composed}) ++e->cases;
  }
  return {pdm, ce, mse, ecr, decode, predict, composed};
}

}  // namespace densitydist
