#include "densitydist/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace densitydist {

nlohmann::json dual_partition_to_json(const DualPartition& partitions) {
  return {{"branch1", partitions.branch1.to_json()},
          {"branch2", partitions.branch2.to_json()},
          {"interleaved", partitions.interleaved}};
}

DualPartition dual_partition_from_json(const nlohmann::json& doc) {
  return DualPartition{IntervalPartition::from_json(doc.at("branch1")),
                       IntervalPartition::from_json(doc.at("branch2")), doc.value("interleaved", false)};
}

void save_checkpoint(const DualBranchModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream blob(dir / kCheckpointBlob, std::ios::binary);
  if (!blob) throw std::runtime_error("cannot write " + (dir / kCheckpointBlob).string());
  nlohmann::json arrays = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& p : model.params().items()) {
    arrays.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"dtype", "float64"}, {"offset", offset}});
    const auto bytes = p.value.size() * sizeof(double);
    blob.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(bytes));
    offset += bytes;
  }
  if (!blob) throw std::runtime_error("failed writing " + (dir / kCheckpointBlob).string());
  nlohmann::json manifest{{"config", model.config().to_json()},
                          {"partitions", dual_partition_to_json(model.partitions())},
                          {"arrays", arrays}};
  std::ofstream(dir / kCheckpointManifest) << manifest.dump(2) << '\n';
}

DualBranchModel load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream manifest_in(dir / kCheckpointManifest);
  if (!manifest_in) throw std::runtime_error("missing checkpoint manifest " + (dir / kCheckpointManifest).string());
  const auto manifest = nlohmann::json::parse(manifest_in);
  std::ifstream blob(dir / kCheckpointBlob, std::ios::binary);
  if (!blob) throw std::runtime_error("missing checkpoint blob " + (dir / kCheckpointBlob).string());

  ParameterSet params;
  for (const auto& entry : manifest.at("arrays")) {
    if (entry.at("dtype") != "float64") throw std::invalid_argument("checkpoint: unsupported dtype");
    Tensor value(entry.at("shape").get<Shape>());
    blob.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::size_t>()));
    blob.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(value.size() * sizeof(double)));
    if (!blob) throw std::runtime_error("checkpoint: truncated blob at '" + entry.at("name").get<std::string>() + "'");
    params.add(entry.at("name").get<std::string>(), std::move(value));
  }
  return DualBranchModel(ModelConfig::from_json(manifest.at("config")),
                         dual_partition_from_json(manifest.at("partitions")), std::move(params));
}

}  // namespace densitydist
