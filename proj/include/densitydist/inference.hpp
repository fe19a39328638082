#pragma once

#include <span>
#include <string>
#include <vector>

#include "densitydist/intervals.hpp"
#include "densitydist/tensor.hpp"

namespace densitydist {

/// How the two branch distributions become one density.
///   confidence    weight w = |p|inf / (|p|inf + |q|inf) on branch 1
///   average       w = 0.5
///   max_category  each branch contributes the representation value of its
///                 most probable interval (ties to the lower index), averaged
enum class FusionMode { confidence, average, max_category };

FusionMode parse_fusion_mode(const std::string& name);
std::string to_string(FusionMode mode);

double fuse_density(std::span<const double> p, std::span<const double> q, std::span<const double> v1,
                    std::span<const double> v2, FusionMode mode);

struct PredictionResult {
  std::vector<double> density;  // per patch
  double count = 0.0;
  std::vector<double> confidence1;
  std::vector<double> confidence2;
};

/// o1: N×C1, o2: N×C2 (rows are patches).
PredictionResult predict_scene(const Tensor& o1, const Tensor& o2, const DualPartition& partitions, FusionMode mode);

struct CountingMetrics {
  double mae = 0.0;
  double mse = 0.0;  // root of the mean squared error
};

CountingMetrics counting_metrics(std::span<const double> pred_counts, std::span<const double> gt_counts);

}  // namespace densitydist
