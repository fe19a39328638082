#include "densitydist/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace densitydist {

DistributionMap::DistributionMap(Tensor probs) : probs_(std::move(probs)) {
  require_matrix(probs_, "distribution map");
  for (std::size_t n = 0; n < probs_.rows(); ++n) {
    double total = 0.0;
    for (double v : probs_.row(n)) {
      if (!(v >= 0.0)) throw std::invalid_argument("distribution map: negative or non-finite probability");
      total += v;
    }
    if (std::abs(total - 1.0) > kRowTolerance) {
      throw std::invalid_argument("distribution map: row " + std::to_string(n) + " sums to " +
                                  std::to_string(total));
    }
  }
}

PdmReduction parse_pdm_reduction(const std::string& name) {
  if (name == "sum_pow") return PdmReduction::sum_pow;
  if (name == "root") return PdmReduction::root;
  throw std::invalid_argument("unknown pdm reduction '" + name + "'");
}

std::string to_string(PdmReduction reduction) { return reduction == PdmReduction::root ? "root" : "sum_pow"; }

LabeledLossKind parse_labeled_loss(const std::string& name) {
  if (name == "pdm") return LabeledLossKind::pdm;
  if (name == "ce") return LabeledLossKind::ce;
  if (name == "mse") return LabeledLossKind::mse;
  throw std::invalid_argument("unknown labeled loss '" + name + "'");
}

std::string to_string(LabeledLossKind kind) {
  switch (kind) {
    case LabeledLossKind::pdm: return "pdm";
    case LabeledLossKind::ce: return "ce";
    case LabeledLossKind::mse: return "mse";
  }
  return "pdm";
}

std::vector<double> cdf(std::span<const double> p) {
  std::vector<double> out(p.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    acc += p[j];
    out[j] = acc;
  }
  return out;
}

namespace {

void check_label_shape(const Tensor& pred, const IntervalLabelMap& label, const char* who) {
  require_matrix(pred, who);
  if (pred.rows() != label.size() || pred.cols() != label.num_classes()) {
    throw std::invalid_argument(std::string(who) + ": prediction shape " + shape_string(pred.shape()) +
                                " does not match labels [" + std::to_string(label.size()) + "x" +
                                std::to_string(label.num_classes()) + "]");
  }
}

}  // namespace

LossValue pdm_loss(const Tensor& pred, const IntervalLabelMap& label, int l, PdmReduction reduction) {
  check_label_shape(pred, label, "pdm_loss");
  if (l != 1 && l != 2) throw std::invalid_argument("pdm_loss: norm level must be 1 or 2");
  const std::size_t n_rows = pred.rows(), c = pred.cols();
  LossValue out;
  out.grads.emplace_back(pred.shape());
  Tensor& grad = out.grads[0];
  std::vector<double> gap(c), dgap(c);
  for (std::size_t n = 0; n < n_rows; ++n) {
    // gap_j = G(y, j) - G(p, j)
    const std::size_t y = label.label(n);
    double acc = 0.0;
    double term = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      acc += pred(n, j);
      gap[j] = (j >= y ? 1.0 : 0.0) - acc;
      term += l == 1 ? std::abs(gap[j]) : gap[j] * gap[j];
    }
    // d term / d gap_j
    for (std::size_t j = 0; j < c; ++j) {
      dgap[j] = l == 1 ? (gap[j] > 0.0 ? 1.0 : (gap[j] < 0.0 ? -1.0 : 0.0)) : 2.0 * gap[j];
    }
    double outer = 1.0;
    if (reduction == PdmReduction::root && l == 2) {
      const double root = std::sqrt(term);
      out.value += root;
      outer = root > 0.0 ? 0.5 / root : 0.0;
    } else {
      out.value += term;
    }
    // d gap_j / d p_i = -1 for i <= j: suffix sums.
    double suffix = 0.0;
    for (std::size_t j = c; j-- > 0;) {
      suffix += dgap[j];
      grad(n, j) = -outer * suffix;
    }
  }
  return out;
}

LossValue baseline_loss(LabeledLossKind kind, const Tensor& pred, const IntervalLabelMap& label) {
  check_label_shape(pred, label, "baseline_loss");
  LossValue out;
  out.grads.emplace_back(pred.shape());
  Tensor& grad = out.grads[0];
  for (std::size_t n = 0; n < pred.rows(); ++n) {
    const std::size_t y = label.label(n);
    if (kind == LabeledLossKind::ce) {
      const double p = pred(n, y);
      if (p > kCrossEntropyFloor) {
        out.value -= std::log(p);
        grad(n, y) = -1.0 / p;
      } else {
        out.value -= std::log(kCrossEntropyFloor);
      }
    } else if (kind == LabeledLossKind::mse) {
      for (std::size_t j = 0; j < pred.cols(); ++j) {
        const double d = pred(n, j) - (j == y ? 1.0 : 0.0);
        out.value += d * d;
        grad(n, j) = 2.0 * d;
      }
    } else {
      throw std::invalid_argument("baseline_loss: kind must be ce or mse");
    }
  }
  return out;
}

LossValue labeled_loss(LabeledLossKind kind, const Tensor& pred, const IntervalLabelMap& label, int l,
                       PdmReduction reduction) {
  if (kind == LabeledLossKind::pdm) return pdm_loss(pred, label, l, reduction);
  return baseline_loss(kind, pred, label);
}

SupervisionMask supervision_mask(const Tensor& o1, const Tensor& o2, double xi) {
  if (!(xi >= 0.0 && xi < 1.0)) throw std::invalid_argument("supervision_mask: xi must lie in [0, 1)");
  require_matrix(o1, "supervision_mask");
  require_matrix(o2, "supervision_mask");
  if (o1.rows() != o2.rows()) {
    throw std::invalid_argument("supervision_mask: patch counts differ " + shape_string(o1.shape()) + " vs " +
                                shape_string(o2.shape()));
  }
  SupervisionMask mask(o1.rows());
  for (std::size_t n = 0; n < o1.rows(); ++n) {
    const auto r1 = o1.row(n);
    const auto r2 = o2.row(n);
    const double c1 = *std::max_element(r1.begin(), r1.end());
    const double c2 = *std::max_element(r2.begin(), r2.end());
    mask[n] = (c1 > xi && c2 > xi) ? 1 : 0;
  }
  return mask;
}

std::vector<double> expectations(const Tensor& probs, std::span<const double> reps) {
  require_matrix(probs, "expectations");
  if (probs.cols() != reps.size()) {
    throw std::invalid_argument("expectations: " + std::to_string(reps.size()) +
                                " representation values for shape " + shape_string(probs.shape()));
  }
  std::vector<double> out(probs.rows(), 0.0);
  for (std::size_t n = 0; n < probs.rows(); ++n)
    for (std::size_t j = 0; j < probs.cols(); ++j) out[n] += probs(n, j) * reps[j];
  return out;
}

LossValue ecr_loss(const Tensor& o1, const Tensor& o2, std::span<const double> v1, std::span<const double> v2,
                   const SupervisionMask& mask) {
  require_matrix(o1, "ecr_loss");
  require_matrix(o2, "ecr_loss");
  if (o1.rows() != o2.rows() || mask.size() != o1.rows()) {
    throw std::invalid_argument("ecr_loss: patch counts differ (" + shape_string(o1.shape()) + ", " +
                                shape_string(o2.shape()) + ", mask " + std::to_string(mask.size()) + ")");
  }
  const auto e1 = expectations(o1, v1);
  const auto e2 = expectations(o2, v2);
  LossValue out;
  out.grads.emplace_back(o1.shape());
  out.grads.emplace_back(o2.shape());
  for (std::size_t n = 0; n < o1.rows(); ++n) {
    if (!mask[n]) continue;
    const double r = e1[n] - e2[n];
    out.value += r * r;
    for (std::size_t j = 0; j < v1.size(); ++j) out.grads[0](n, j) = 2.0 * r * v1[j];
    for (std::size_t j = 0; j < v2.size(); ++j) out.grads[1](n, j) = -2.0 * r * v2[j];
  }
  return out;
}

LossValue ecr_loss(const Tensor& o1, const Tensor& o2, std::span<const double> v1, std::span<const double> v2,
                   double xi) {
  return ecr_loss(o1, o2, v1, v2, supervision_mask(o1, o2, xi));
}

LossValue total_loss(const LossValue& labeled, const LossValue& unlabeled, double lambda) {
  LossValue out;
  out.value = labeled.value + lambda * unlabeled.value;
  out.grads = labeled.grads;
  for (const auto& g : unlabeled.grads) {
    Tensor scaled = g;
    for (auto& v : scaled.values()) v *= lambda;
    out.grads.push_back(std::move(scaled));
  }
  return out;
}

}  // namespace densitydist
