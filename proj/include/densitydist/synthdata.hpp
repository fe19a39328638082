#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "densitydist/labelgen.hpp"
#include "densitydist/tensor.hpp"

namespace densitydist {

/// Synthetic crowd-scene generator settings. Points come from a mixture of
/// isotropic Gaussian clusters; the image renders a small blob per point on
/// top of uniform noise.
struct SceneSpec {
  std::size_t h = 64;
  std::size_t w = 64;
  std::size_t k_min = 0;
  std::size_t k_max = 120;
  std::size_t clusters_min = 1;
  std::size_t clusters_max = 5;
  double cluster_spread = 6.0;
  double blob_std = 1.2;
  double blob_amplitude = 0.35;
  double noise = 0.05;
  std::size_t stride = 4;

  void validate() const;
  nlohmann::json to_json() const;
  static SceneSpec from_json(const nlohmann::json& doc);
};

struct Scene {
  std::size_t id = 0;
  std::uint64_t seed = 0;
  Tensor image;  // h×w, values k/255 in [0, 1]
  PointAnnotation annotation;
};

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed, std::size_t id = 0);

/// Scene i uses seed + i.
std::vector<Scene> generate_dataset(std::size_t n, const SceneSpec& spec, std::uint64_t seed);

/// 64-bit FNV-1a over image bytes and annotation coordinates.
std::uint64_t scene_hash(const Scene& scene);

// Binary 8-bit PGM (P5).
void write_pgm(const std::filesystem::path& path, const Tensor& image);
Tensor read_pgm(const std::filesystem::path& path);

/// Writes scene_XXXX.pgm, scene_XXXX.json and manifest.json into `dir`.
void save_dataset(const std::filesystem::path& dir, const std::vector<Scene>& scenes, const SceneSpec& spec,
                  std::uint64_t seed);

struct LoadedDataset {
  SceneSpec spec;
  std::uint64_t seed = 0;
  std::vector<Scene> scenes;
};

LoadedDataset load_dataset(const std::filesystem::path& dir);

std::string scene_stem(std::size_t id);

}  // namespace densitydist
