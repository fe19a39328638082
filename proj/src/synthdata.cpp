#include "densitydist/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

namespace densitydist {

void SceneSpec::validate() const {
  if (h == 0 || w == 0) throw std::invalid_argument("scene spec: empty image");
  if (stride == 0 || h % stride != 0 || w % stride != 0) {
    throw std::invalid_argument("scene spec: dims not divisible by stride " + std::to_string(stride));
  }
  if (k_min > k_max) throw std::invalid_argument("scene spec: k_min > k_max");
  if (k_max > h * w) throw std::invalid_argument("scene spec: k_max points cannot be placed in the image");
  if (clusters_min == 0 || clusters_min > clusters_max) throw std::invalid_argument("scene spec: bad cluster range");
  if (!(cluster_spread > 0.0) || !(blob_std > 0.0)) throw std::invalid_argument("scene spec: spreads must be positive");
  if (!(noise >= 0.0) || !(blob_amplitude >= 0.0)) throw std::invalid_argument("scene spec: negative amplitude");
}

nlohmann::json SceneSpec::to_json() const {
  return {{"h", h},
          {"w", w},
          {"k_min", k_min},
          {"k_max", k_max},
          {"clusters_min", clusters_min},
          {"clusters_max", clusters_max},
          {"cluster_spread", cluster_spread},
          {"blob_std", blob_std},
          {"blob_amplitude", blob_amplitude},
          {"noise", noise},
          {"stride", stride}};
}

SceneSpec SceneSpec::from_json(const nlohmann::json& doc) {
  SceneSpec s;
  s.h = doc.value("h", s.h);
  s.w = doc.value("w", s.w);
  s.k_min = doc.value("k_min", s.k_min);
  s.k_max = doc.value("k_max", s.k_max);
  s.clusters_min = doc.value("clusters_min", s.clusters_min);
  s.clusters_max = doc.value("clusters_max", s.clusters_max);
  s.cluster_spread = doc.value("cluster_spread", s.cluster_spread);
  s.blob_std = doc.value("blob_std", s.blob_std);
  s.blob_amplitude = doc.value("blob_amplitude", s.blob_amplitude);
  s.noise = doc.value("noise", s.noise);
  s.stride = doc.value("stride", s.stride);
  s.validate();
  return s;
}

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed, std::size_t id) {
  spec.validate();
  std::mt19937_64 rng(seed);
  const double W = static_cast<double>(spec.w), H = static_cast<double>(spec.h);
  const auto k = std::uniform_int_distribution<std::size_t>(spec.k_min, spec.k_max)(rng);
  const auto n_clusters = std::uniform_int_distribution<std::size_t>(spec.clusters_min, spec.clusters_max)(rng);

  std::uniform_real_distribution<double> ux(0.0, W), uy(0.0, H);
  std::vector<Point> centers;
  for (std::size_t c = 0; c < n_clusters; ++c) centers.push_back({ux(rng), uy(rng)});

  Scene scene;
  scene.id = id;
  scene.seed = seed;
  scene.annotation.h = spec.h;
  scene.annotation.w = spec.w;
  std::uniform_int_distribution<std::size_t> pick(0, n_clusters - 1);
  std::normal_distribution<double> jitter(0.0, spec.cluster_spread);
  for (std::size_t i = 0; i < k; ++i) {
    const Point& c = centers[pick(rng)];
    Point p{-1.0, -1.0};
    for (int attempt = 0; attempt < 64; ++attempt) {
      p = {c.x + jitter(rng), c.y + jitter(rng)};
      if (p.x >= 0.0 && p.x < W && p.y >= 0.0 && p.y < H) break;
    }
    if (!(p.x >= 0.0 && p.x < W && p.y >= 0.0 && p.y < H)) p = {ux(rng), uy(rng)};
    scene.annotation.points.push_back(p);
  }

  Tensor image = Tensor::matrix(spec.h, spec.w);
  std::uniform_real_distribution<double> noise(0.0, spec.noise);
  for (auto& v : image.values()) v = noise(rng);
  const double radius = 4.0 * spec.blob_std;
  const double inv_two_var = 1.0 / (2.0 * spec.blob_std * spec.blob_std);
  for (const auto& p : scene.annotation.points) {
    const long r0 = std::max(0L, static_cast<long>(std::floor(p.y - radius)));
    const long r1 = std::min(static_cast<long>(spec.h) - 1, static_cast<long>(std::ceil(p.y + radius)));
    const long c0 = std::max(0L, static_cast<long>(std::floor(p.x - radius)));
    const long c1 = std::min(static_cast<long>(spec.w) - 1, static_cast<long>(std::ceil(p.x + radius)));
    for (long r = r0; r <= r1; ++r)
      for (long c = c0; c <= c1; ++c) {
        const double dy = static_cast<double>(r) + 0.5 - p.y, dx = static_cast<double>(c) + 0.5 - p.x;
        image(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) +=
            spec.blob_amplitude * std::exp(-(dx * dx + dy * dy) * inv_two_var);
      }
  }
  // Quantize to 8 bits so the PGM file reproduces the image exactly.
  for (auto& v : image.values()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  scene.image = std::move(image);
  return scene;
}

std::vector<Scene> generate_dataset(std::size_t n, const SceneSpec& spec, std::uint64_t seed) {
  std::vector<Scene> scenes;
  scenes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) scenes.push_back(generate_scene(spec, seed + i, i));
  return scenes;
}

std::uint64_t scene_hash(const Scene& scene) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (double v : scene.image.values()) {
    const auto byte = static_cast<unsigned char>(std::lround(v * 255.0));
    mix(&byte, 1);
  }
  for (const auto& p : scene.annotation.points) {
    mix(&p.x, sizeof p.x);
    mix(&p.y, sizeof p.y);
  }
  return h;
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  for (double v : image.values()) {
    const auto byte = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    out.put(static_cast<char>(byte));
  }
}

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255 || w == 0 || h == 0) {
    throw std::invalid_argument(path.string() + ": expected binary 8-bit PGM");
  }
  in.get();
  Tensor image = Tensor::matrix(h, w);
  for (auto& v : image.values()) {
    const int byte = in.get();
    if (byte == EOF) throw std::invalid_argument(path.string() + ": truncated image data");
    v = static_cast<double>(byte) / 255.0;
  }
  return image;
}

std::string scene_stem(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu", id);
  return buf;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<Scene>& scenes, const SceneSpec& spec,
                  std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& s : scenes) {
    const std::string stem = scene_stem(s.id);
    write_pgm(dir / (stem + ".pgm"), s.image);
    std::ofstream(dir / (stem + ".json")) << s.annotation.to_json().dump() << '\n';
    entries.push_back({{"id", s.id}, {"seed", s.seed}, {"image", stem + ".pgm"}, {"annotation", stem + ".json"}});
  }
  nlohmann::json manifest{{"spec", spec.to_json()}, {"seed", seed}, {"scenes", entries}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("missing dataset manifest in " + dir.string());
  const auto manifest = nlohmann::json::parse(in);
  LoadedDataset data;
  data.spec = SceneSpec::from_json(manifest.at("spec"));
  data.seed = manifest.value("seed", std::uint64_t{0});
  for (const auto& e : manifest.at("scenes")) {
    Scene s;
    s.id = e.at("id").get<std::size_t>();
    s.seed = e.at("seed").get<std::uint64_t>();
    s.image = read_pgm(dir / e.at("image").get<std::string>());
    std::ifstream ann(dir / e.at("annotation").get<std::string>());
    if (!ann) throw std::runtime_error("missing annotation for scene " + std::to_string(s.id));
    s.annotation = PointAnnotation::from_json(nlohmann::json::parse(ann));
    data.scenes.push_back(std::move(s));
  }
  return data;
}

}  // namespace densitydist
