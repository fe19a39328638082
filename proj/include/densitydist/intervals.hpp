#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace densitydist {

/// Partition of [0, +inf) into half-open density intervals
/// [b_0, b_1), [b_1, b_2), ..., [b_{C-1}, +inf) with one representation
/// value per interval. Immutable once constructed.
class IntervalPartition {
 public:
  /// Representation values default to interval midpoints, and to the lower
  /// border for the open final interval.
  explicit IntervalPartition(std::vector<double> borders,
                             std::optional<std::vector<double>> reps = std::nullopt);

  std::size_t count() const { return borders_.size(); }
  const std::vector<double>& borders() const { return borders_; }
  const std::vector<double>& reps() const { return reps_; }

  /// Index j with borders[j] <= density < borders[j+1].
  std::size_t quantize(double density) const;

  /// Same borders with every representation value replaced.
  IntervalPartition with_reps(std::vector<double> reps) const;

  nlohmann::json to_json() const;
  static IntervalPartition from_json(const nlohmann::json& doc);

  friend bool operator==(const IntervalPartition&, const IntervalPartition&) = default;

 private:
  std::vector<double> borders_;
  std::vector<double> reps_;
};

struct DualPartition {
  IntervalPartition branch1;
  IntervalPartition branch2;
  bool interleaved = false;

  const IntervalPartition& branch(int b) const { return b == 0 ? branch1 : branch2; }
};

/// True when every interior border of `second` lies strictly between two
/// consecutive borders of `first` wherever both lists are defined.
bool borders_interleave(const IntervalPartition& first, const IntervalPartition& second);

/// Verbatim uniform-error partition lists (25 and 26 intervals), scaled.
IntervalPartition build_uep_partition(int branch, double scale = 1.0);
std::span<const double> uep_borders(int branch);

IntervalPartition build_uniform_len(double max_density, std::size_t count);
IntervalPartition build_uniform_num(std::span<const double> sample_densities, std::size_t count);

std::size_t quantize(double density, const IntervalPartition& partition);

enum class PartitionStrategy { uep, uniform_len, uniform_num };

PartitionStrategy parse_partition_strategy(const std::string& name);
std::string to_string(PartitionStrategy strategy);

/// Dual partition for a strategy. For the uniform strategies the second
/// branch is shifted by half a step (len) or half a quantile share (num) so
/// the two border lists interleave. When `interleaved` is false both
/// branches use the first branch's partition.
DualPartition build_dual_partition(PartitionStrategy strategy, bool interleaved, double scale,
                                   std::span<const double> sample_densities = {});

}  // namespace densitydist
