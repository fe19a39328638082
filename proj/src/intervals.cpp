#include "densitydist/intervals.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <stdexcept>

namespace densitydist {

namespace {

// Uniform-error partitions, border lists copied verbatim.
constexpr std::array<double, 25> kUepBranch1 = {
    0,     0.0019, 0.0081, 0.0165, 0.0272, 0.0404, 0.056, 0.076, 0.099, 0.126, 0.159, 0.199, 0.246,
    0.303, 0.371,  0.454,  0.556,  0.684,  0.848,  1.06,  1.36,  1.8,   2.5,   3.9,   8.2};

constexpr std::array<double, 26> kUepBranch2 = {
    0,     0.00087, 0.0046, 0.0119, 0.0214, 0.0333, 0.048, 0.065, 0.086, 0.112, 0.142, 0.178, 0.221,
    0.272, 0.334,   0.409,  0.501,  0.615,  0.759,  0.945, 1.197, 1.55,  2.1,   3.0,   4.5,   8.5};

std::vector<double> midpoint_reps(const std::vector<double>& borders) {
  std::vector<double> reps(borders.size());
  for (std::size_t j = 0; j + 1 < borders.size(); ++j) reps[j] = 0.5 * (borders[j] + borders[j + 1]);
  reps.back() = borders.back();
  return reps;
}

}  // namespace

IntervalPartition::IntervalPartition(std::vector<double> borders, std::optional<std::vector<double>> reps)
    : borders_(std::move(borders)) {
  if (borders_.empty()) throw std::invalid_argument("partition: no borders");
  if (borders_.front() != 0.0) throw std::invalid_argument("partition: first border must be 0");
  for (std::size_t j = 1; j < borders_.size(); ++j) {
    if (!(borders_[j] > borders_[j - 1]) || !std::isfinite(borders_[j])) {
      throw std::invalid_argument("partition: borders must be finite and strictly ascending (index " +
                                  std::to_string(j) + ")");
    }
  }
  reps_ = reps ? std::move(*reps) : midpoint_reps(borders_);
  if (reps_.size() != borders_.size()) {
    throw std::invalid_argument("partition: " + std::to_string(reps_.size()) + " representation values for " +
                                std::to_string(borders_.size()) + " intervals");
  }
  for (std::size_t j = 0; j < reps_.size(); ++j) {
    const bool inside = reps_[j] >= borders_[j] && (j + 1 == borders_.size() || reps_[j] < borders_[j + 1]);
    if (!inside) {
      throw std::invalid_argument("partition: representation value " + std::to_string(reps_[j]) +
                                  " outside interval " + std::to_string(j));
    }
  }
}

std::size_t IntervalPartition::quantize(double density) const {
  if (!(density >= 0.0)) throw std::invalid_argument("quantize: density must be nonnegative and finite");
  auto it = std::upper_bound(borders_.begin(), borders_.end(), density);
  return static_cast<std::size_t>(it - borders_.begin()) - 1;
}

IntervalPartition IntervalPartition::with_reps(std::vector<double> reps) const {
  return IntervalPartition(borders_, std::move(reps));
}

nlohmann::json IntervalPartition::to_json() const { return {{"borders", borders_}, {"reps", reps_}}; }

IntervalPartition IntervalPartition::from_json(const nlohmann::json& doc) {
  std::optional<std::vector<double>> reps;
  if (doc.contains("reps")) reps = doc.at("reps").get<std::vector<double>>();
  return IntervalPartition(doc.at("borders").get<std::vector<double>>(), std::move(reps));
}

std::size_t quantize(double density, const IntervalPartition& partition) { return partition.quantize(density); }

bool borders_interleave(const IntervalPartition& first, const IntervalPartition& second) {
  const auto& a = first.borders();
  const auto& b = second.borders();
  for (std::size_t k = 1; k < b.size(); ++k) {
    if (k - 1 < a.size() && !(b[k] > a[k - 1])) return false;
    if (k < a.size() && !(b[k] < a[k])) return false;
  }
  return true;
}

std::span<const double> uep_borders(int branch) {
  if (branch == 1) return kUepBranch1;
  if (branch == 2) return kUepBranch2;
  throw std::invalid_argument("uep partition: branch must be 1 or 2");
}

IntervalPartition build_uep_partition(int branch, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("uep partition: scale must be positive");
  auto base = uep_borders(branch);
  std::vector<double> borders(base.begin(), base.end());
  for (auto& b : borders) b *= scale;
  return IntervalPartition(std::move(borders));
}

IntervalPartition build_uniform_len(double max_density, std::size_t count) {
  if (count < 2) throw std::invalid_argument("uniform_len: count must be at least 2");
  if (!(max_density > 0.0)) throw std::invalid_argument("uniform_len: max_density must be positive");
  const double step = max_density / static_cast<double>(count - 1);
  std::vector<double> borders(count);
  for (std::size_t j = 0; j < count; ++j) borders[j] = step * static_cast<double>(j);
  return IntervalPartition(std::move(borders));
}

namespace {

std::vector<double> sorted_positive(std::span<const double> sample) {
  std::vector<double> pos;
  for (double v : sample) {
    if (v < 0.0) throw std::invalid_argument("uniform_num: negative sample density");
    if (v > 0.0) pos.push_back(v);
  }
  std::sort(pos.begin(), pos.end());
  return pos;
}

// Border placing `below` of the sorted samples under it.
double split_border(const std::vector<double>& sorted, std::size_t below) {
  below = std::clamp<std::size_t>(below, 1, sorted.size() - 1);
  return 0.5 * (sorted[below - 1] + sorted[below]);
}

}  // namespace

IntervalPartition build_uniform_num(std::span<const double> sample_densities, std::size_t count) {
  if (count < 2) throw std::invalid_argument("uniform_num: count must be at least 2");
  const auto pos = sorted_positive(sample_densities);
  const std::set<double> distinct(pos.begin(), pos.end());
  if (distinct.size() < count) {
    throw std::invalid_argument("uniform_num: need at least " + std::to_string(count) +
                                " distinct positive sample values, got " + std::to_string(distinct.size()));
  }
  const std::size_t n = pos.size();
  std::vector<double> borders{0.0};
  for (std::size_t k = 1; k < count; ++k) borders.push_back(split_border(pos, k * n / count));
  return IntervalPartition(std::move(borders));
}

PartitionStrategy parse_partition_strategy(const std::string& name) {
  if (name == "uep") return PartitionStrategy::uep;
  if (name == "uniform_len") return PartitionStrategy::uniform_len;
  if (name == "uniform_num") return PartitionStrategy::uniform_num;
  throw std::invalid_argument("unknown partition strategy '" + name + "'");
}

std::string to_string(PartitionStrategy strategy) {
  switch (strategy) {
    case PartitionStrategy::uep: return "uep";
    case PartitionStrategy::uniform_len: return "uniform_len";
    case PartitionStrategy::uniform_num: return "uniform_num";
  }
  return "uep";
}

DualPartition build_dual_partition(PartitionStrategy strategy, bool interleaved, double scale,
                                   std::span<const double> sample_densities) {
  constexpr std::size_t kCount = 25;
  IntervalPartition first = build_uep_partition(1, scale);
  std::optional<IntervalPartition> second;
  switch (strategy) {
    case PartitionStrategy::uep:
      second = build_uep_partition(2, scale);
      break;
    case PartitionStrategy::uniform_len: {
      const double top = kUepBranch1.back() * scale;
      first = build_uniform_len(top, kCount);
      const double step = top / static_cast<double>(kCount - 1);
      std::vector<double> borders{0.0};
      for (std::size_t k = 1; k <= kCount; ++k) borders.push_back(step * (static_cast<double>(k) - 0.5));
      second = IntervalPartition(std::move(borders));
      break;
    }
    case PartitionStrategy::uniform_num: {
      first = build_uniform_num(sample_densities, kCount);
      const auto pos = sorted_positive(sample_densities);
      const std::size_t n = pos.size();
      std::vector<double> borders{0.0};
      for (std::size_t k = 1; k <= kCount; ++k) {
        const double b = split_border(pos, (2 * k - 1) * n / (2 * kCount));
        if (b > borders.back()) borders.push_back(b);
      }
      second = IntervalPartition(std::move(borders));
      break;
    }
  }
  if (!interleaved) return DualPartition{first, first, false};
  return DualPartition{first, *second, true};
}

}  // namespace densitydist
