#include "densitydist/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace densitydist {

FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "confidence") return FusionMode::confidence;
  if (name == "average") return FusionMode::average;
  if (name == "max_category") return FusionMode::max_category;
  throw std::invalid_argument("unknown fusion mode '" + name + "' (confidence, average, max_category)");
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::confidence: return "confidence";
    case FusionMode::average: return "average";
    case FusionMode::max_category: return "max_category";
  }
  return "confidence";
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

std::size_t argmax_low(std::span<const double> p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace

double fuse_density(std::span<const double> p, std::span<const double> q, std::span<const double> v1,
                    std::span<const double> v2, FusionMode mode) {
  if (p.size() != v1.size() || q.size() != v2.size() || p.empty() || q.empty()) {
    throw std::invalid_argument("fuse_density: distribution/representation sizes differ");
  }
  switch (mode) {
    case FusionMode::confidence: {
      const double cp = *std::max_element(p.begin(), p.end());
      const double cq = *std::max_element(q.begin(), q.end());
      if (!(cp + cq > 0.0)) throw std::logic_error("fuse_density: both confidences are zero");
      const double w = cp / (cp + cq);
      return w * dot(p, v1) + (1.0 - w) * dot(q, v2);
    }
    case FusionMode::average:
      return 0.5 * dot(p, v1) + 0.5 * dot(q, v2);
    case FusionMode::max_category:
      return 0.5 * v1[argmax_low(p)] + 0.5 * v2[argmax_low(q)];
  }
  return 0.0;
}

PredictionResult predict_scene(const Tensor& o1, const Tensor& o2, const DualPartition& partitions, FusionMode mode) {
  require_matrix(o1, "predict_scene");
  require_matrix(o2, "predict_scene");
  if (o1.rows() != o2.rows()) {
    throw std::invalid_argument("predict_scene: patch counts differ " + shape_string(o1.shape()) + " vs " +
                                shape_string(o2.shape()));
  }
  const auto& v1 = partitions.branch1.reps();
  const auto& v2 = partitions.branch2.reps();
  PredictionResult out;
  for (std::size_t n = 0; n < o1.rows(); ++n) {
    const auto p = o1.row(n);
    const auto q = o2.row(n);
    const double d = fuse_density(p, q, v1, v2, mode);
    out.density.push_back(d);
    out.count += d;
    out.confidence1.push_back(*std::max_element(p.begin(), p.end()));
    out.confidence2.push_back(*std::max_element(q.begin(), q.end()));
  }
  return out;
}

CountingMetrics counting_metrics(std::span<const double> pred_counts, std::span<const double> gt_counts) {
  if (pred_counts.empty()) throw std::invalid_argument("counting_metrics: empty input");
  if (pred_counts.size() != gt_counts.size()) throw std::invalid_argument("counting_metrics: length mismatch");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < pred_counts.size(); ++i) {
    const double e = pred_counts[i] - gt_counts[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const double n = static_cast<double>(pred_counts.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

}  // namespace densitydist
