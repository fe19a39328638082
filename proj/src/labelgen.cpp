#include "densitydist/labelgen.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace densitydist {

void PointAnnotation::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!(p.x >= 0.0 && p.x < static_cast<double>(w) && p.y >= 0.0 && p.y < static_cast<double>(h))) {
      std::ostringstream msg;
      msg << "annotation: point " << i << " (" << p.x << ", " << p.y << ") outside " << h << "x" << w << " image";
      throw std::invalid_argument(msg.str());
    }
  }
}

nlohmann::json PointAnnotation::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points) pts.push_back({p.x, p.y});
  return {{"h", h}, {"w", w}, {"points", pts}};
}

PointAnnotation PointAnnotation::from_json(const nlohmann::json& doc) {
  PointAnnotation ann;
  ann.h = doc.at("h").get<std::size_t>();
  ann.w = doc.at("w").get<std::size_t>();
  for (const auto& p : doc.at("points")) ann.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  ann.validate();
  return ann;
}

double DensityMap::total() const {
  double t = 0.0;
  for (double v : values) t += v;
  return t;
}

IntervalLabelMap::IntervalLabelMap(std::vector<std::size_t> classes, std::size_t num_classes)
    : classes_(std::move(classes)), num_classes_(num_classes) {
  for (auto c : classes_)
    if (c >= num_classes_) throw std::invalid_argument("label map: class index out of range");
}

Tensor IntervalLabelMap::one_hot() const {
  Tensor t = Tensor::matrix(classes_.size(), num_classes_);
  for (std::size_t n = 0; n < classes_.size(); ++n) t(n, classes_[n]) = 1.0;
  return t;
}

DensityMap render_density(const PointAnnotation& ann, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("render_density: sigma must be positive");
  ann.validate();
  DensityMap map{ann.h, ann.w, std::vector<double>(ann.h * ann.w, 0.0)};
  const double radius = kKernelTruncation * sigma;
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> kernel;
  for (const auto& p : ann.points) {
    // Pixel (r, c) has its centre at (c + 0.5, r + 0.5).
    const auto lo = [&](double v) { return static_cast<long>(std::max(0.0, std::floor(v - radius - 0.5))); };
    const auto hi = [&](double v, std::size_t limit) {
      return std::min(static_cast<long>(limit) - 1, static_cast<long>(std::ceil(v + radius - 0.5)));
    };
    const long r0 = lo(p.y), r1 = hi(p.y, ann.h);
    const long c0 = lo(p.x), c1 = hi(p.x, ann.w);
    kernel.assign(static_cast<std::size_t>((r1 - r0 + 1) * (c1 - c0 + 1)), 0.0);
    double mass = 0.0;
    std::size_t k = 0;
    for (long r = r0; r <= r1; ++r) {
      for (long c = c0; c <= c1; ++c, ++k) {
        const double dy = static_cast<double>(r) + 0.5 - p.y;
        const double dx = static_cast<double>(c) + 0.5 - p.x;
        const double d2 = dx * dx + dy * dy;
        if (d2 <= radius * radius) {
          kernel[k] = std::exp(-d2 * inv_two_var);
          mass += kernel[k];
        }
      }
    }
    if (mass <= 0.0) throw std::logic_error("render_density: empty kernel support");
    k = 0;
    for (long r = r0; r <= r1; ++r)
      for (long c = c0; c <= c1; ++c, ++k)
        map.values[static_cast<std::size_t>(r) * ann.w + static_cast<std::size_t>(c)] += kernel[k] / mass;
  }
  return map;
}

std::vector<double> pool_patches(const DensityMap& map, std::size_t stride) {
  if (stride == 0 || map.h % stride != 0 || map.w % stride != 0) {
    throw std::invalid_argument("pool_patches: " + std::to_string(map.h) + "x" + std::to_string(map.w) +
                                " map not divisible by stride " + std::to_string(stride));
  }
  const std::size_t gh = map.h / stride, gw = map.w / stride;
  std::vector<double> out(gh * gw, 0.0);
  for (std::size_t y = 0; y < map.h; ++y)
    for (std::size_t x = 0; x < map.w; ++x) out[(y / stride) * gw + x / stride] += map.at(y, x);
  return out;
}

IntervalLabelMap assign_intervals(std::span<const double> patch_densities, const IntervalPartition& partition) {
  std::vector<std::size_t> classes;
  classes.reserve(patch_densities.size());
  for (double d : patch_densities) classes.push_back(partition.quantize(d));
  return IntervalLabelMap(std::move(classes), partition.count());
}

std::vector<double> flip_grid(std::span<const double> values, std::size_t grid_h, std::size_t grid_w) {
  if (values.size() != grid_h * grid_w) throw std::invalid_argument("flip_grid: size mismatch");
  std::vector<double> out(values.size());
  for (std::size_t y = 0; y < grid_h; ++y)
    for (std::size_t x = 0; x < grid_w; ++x) out[y * grid_w + x] = values[y * grid_w + (grid_w - 1 - x)];
  return out;
}

void write_grid_csv(const std::filesystem::path& path, std::size_t h, std::size_t w, std::size_t stride,
                    std::span<const double> grid) {
  const std::size_t gh = h / stride, gw = w / stride;
  if (grid.size() != gh * gw) throw std::invalid_argument("write_grid_csv: grid does not match h/w/stride");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "h,w,stride\n" << h << ',' << w << ',' << stride << '\n';
  out << std::setprecision(17);
  for (std::size_t y = 0; y < gh; ++y) {
    for (std::size_t x = 0; x < gw; ++x) out << (x ? "," : "") << grid[y * gw + x];
    out << '\n';
  }
}

GridCsv read_grid_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "h,w,stride") throw std::invalid_argument(path.string() + ": missing h,w,stride header");
  GridCsv csv;
  char comma = 0;
  std::getline(in, line);
  std::istringstream(line) >> csv.h >> comma >> csv.w >> comma >> csv.stride;
  if (csv.stride == 0) throw std::invalid_argument(path.string() + ": stride must be positive");
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) csv.values.push_back(std::stod(cell));
  }
  if (csv.values.size() != (csv.h / csv.stride) * (csv.w / csv.stride)) {
    throw std::invalid_argument(path.string() + ": grid size does not match header");
  }
  return csv;
}

}  // namespace densitydist
