#pragma once

#include <filesystem>

#include "densitydist/model.hpp"

namespace densitydist {

// A checkpoint directory holds model.bin (raw float64 arrays, host byte
// order, back to back) and model.json, the manifest:
//   {"config": {...}, "partitions": {"branch1": {...}, "branch2": {...},
//    "interleaved": bool}, "arrays": [{"name", "shape", "dtype", "offset"}]}
// Offsets are in bytes from the start of model.bin.

inline constexpr const char* kCheckpointBlob = "model.bin";
inline constexpr const char* kCheckpointManifest = "model.json";

void save_checkpoint(const DualBranchModel& model, const std::filesystem::path& dir);
DualBranchModel load_checkpoint(const std::filesystem::path& dir);

nlohmann::json dual_partition_to_json(const DualPartition& partitions);
DualPartition dual_partition_from_json(const nlohmann::json& doc);

}  // namespace densitydist
