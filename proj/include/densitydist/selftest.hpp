#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace densitydist {

/// Worst finite-difference agreement over all random cases of one target.
struct GradSuiteEntry {
  std::string target;
  std::size_t cases = 0;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
  /// training_loss only: largest |analytic gradient| over the final layer
  /// norm shift of each decoder. Adding a vector to every refined token
  /// shifts each column of the score matrix uniformly, which the column
  /// softmax cancels, so these gradients are zero and they are excluded
  /// from the relative comparison.
  double invariant_max_abs_gradient = 0.0;
};

/// Central-difference gradient checks on random instances of: pdm_loss,
/// ce, mse, ecr_loss, decode_tokens, predict_distribution and the composed
/// training loss of a small dual-branch model. Double precision.
std::vector<GradSuiteEntry> gradient_suite(std::size_t cases, std::uint64_t seed);

}  // namespace densitydist
