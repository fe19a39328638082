#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "densitydist/labelgen.hpp"
#include "densitydist/tensor.hpp"

namespace densitydist {

/// Per-patch categorical distributions, N×C, each row summing to one.
class DistributionMap {
 public:
  static constexpr double kRowTolerance = 1e-6;

  /// Validates nonnegativity and row sums.
  explicit DistributionMap(Tensor probs);

  std::size_t patches() const { return probs_.rows(); }
  std::size_t classes() const { return probs_.cols(); }
  const Tensor& probs() const { return probs_; }
  std::span<const double> row(std::size_t n) const { return probs_.row(n); }

 private:
  Tensor probs_;
};

/// Binary per-patch mask.
using SupervisionMask = std::vector<int>;

/// Scalar loss with one gradient table per input, each shaped like its input.
struct LossValue {
  double value = 0.0;
  std::vector<Tensor> grads;
};

enum class PdmReduction { sum_pow, root };
enum class LabeledLossKind { pdm, ce, mse };

PdmReduction parse_pdm_reduction(const std::string& name);
std::string to_string(PdmReduction reduction);
LabeledLossKind parse_labeled_loss(const std::string& name);
std::string to_string(LabeledLossKind kind);

inline constexpr double kCrossEntropyFloor = 1e-12;

/// Running sum: out[j] = p[0] + ... + p[j].
std::vector<double> cdf(std::span<const double> p);

/// Distribution matching over interval indices. Per patch
/// t_n = sum_j |G(y, j) - G(p, j)|^l; sum_pow returns sum_n t_n and root
/// returns sum_n t_n^(1/l). Gradient with respect to `pred`.
///
/// `pred` is an N×C table of probabilities; it is not required to be
/// normalized so the gradient is the unconstrained one.
LossValue pdm_loss(const Tensor& pred, const IntervalLabelMap& label, int l,
                   PdmReduction reduction = PdmReduction::sum_pow);

/// ce = -sum_n log max(p_n[y_n], 1e-12); mse = sum_n sum_j (p - y)^2.
LossValue baseline_loss(LabeledLossKind kind, const Tensor& pred, const IntervalLabelMap& label);

/// Dispatch on kind; `l` and `reduction` are used for pdm only.
LossValue labeled_loss(LabeledLossKind kind, const Tensor& pred, const IntervalLabelMap& label, int l,
                       PdmReduction reduction);

/// bit_n = 1 iff max_j o1[n, j] > xi and max_j o2[n, j] > xi.
SupervisionMask supervision_mask(const Tensor& o1, const Tensor& o2, double xi);

/// Per-patch expectation v·p_n of an N×C table.
std::vector<double> expectations(const Tensor& probs, std::span<const double> reps);

/// sum_n (mask_n · (v1·o1_n - v2·o2_n))^2 with gradients for o1 and o2. The
/// mask is a constant.
LossValue ecr_loss(const Tensor& o1, const Tensor& o2, std::span<const double> v1, std::span<const double> v2,
                   const SupervisionMask& mask);

/// Mask computed from the current predictions at threshold xi.
LossValue ecr_loss(const Tensor& o1, const Tensor& o2, std::span<const double> v1, std::span<const double> v2,
                   double xi);

/// L_P + lambda·L_E. The combined objective depends on the inputs of both
/// terms, so gradients are the labeled ones followed by lambda times the
/// unlabeled ones.
LossValue total_loss(const LossValue& labeled, const LossValue& unlabeled, double lambda);

}  // namespace densitydist
