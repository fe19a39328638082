#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "densitydist/intervals.hpp"
#include "densitydist/tensor.hpp"

namespace densitydist {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Point annotations in pixel coordinates, 0 <= x < w and 0 <= y < h.
struct PointAnnotation {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<Point> points;

  void validate() const;
  nlohmann::json to_json() const;
  static PointAnnotation from_json(const nlohmann::json& doc);
};

/// Nonnegative h×w density grid (persons per pixel).
struct DensityMap {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> values;

  double total() const;
  double at(std::size_t y, std::size_t x) const { return values[y * w + x]; }
};

/// One-hot interval labels, stored as class indices.
class IntervalLabelMap {
 public:
  IntervalLabelMap(std::vector<std::size_t> classes, std::size_t num_classes);

  std::size_t size() const { return classes_.size(); }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t label(std::size_t n) const { return classes_[n]; }
  const std::vector<std::size_t>& classes() const { return classes_; }
  double at(std::size_t n, std::size_t j) const { return classes_[n] == j ? 1.0 : 0.0; }

  /// Dense N×C {0,1} table.
  Tensor one_hot() const;

 private:
  std::vector<std::size_t> classes_;
  std::size_t num_classes_;
};

inline constexpr double kDefaultSigma = 1.5;
inline constexpr std::size_t kDefaultStride = 4;
inline constexpr double kKernelTruncation = 4.0;

/// Sum of isotropic Gaussians (std sigma) centred on the points. Each kernel
/// is truncated at 4·sigma and renormalized so it contributes unit mass.
DensityMap render_density(const PointAnnotation& ann, double sigma = kDefaultSigma);

/// Row-major stride×stride patch sums.
std::vector<double> pool_patches(const DensityMap& map, std::size_t stride);

IntervalLabelMap assign_intervals(std::span<const double> patch_densities, const IntervalPartition& partition);

/// Mirror a row-major grid_h×grid_w lattice left to right.
std::vector<double> flip_grid(std::span<const double> values, std::size_t grid_h, std::size_t grid_w);

/// CSV dump: a header line "h,w,stride", the values of those fields, then
/// one line per lattice row.
void write_grid_csv(const std::filesystem::path& path, std::size_t h, std::size_t w, std::size_t stride,
                    std::span<const double> grid);

struct GridCsv {
  std::size_t h = 0, w = 0, stride = 0;
  std::vector<double> values;
};
GridCsv read_grid_csv(const std::filesystem::path& path);

}  // namespace densitydist
