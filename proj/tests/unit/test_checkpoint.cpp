#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "densitydist/checkpoint.hpp"

using namespace densitydist;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("dd_ckpt_" + name);
  fs::remove_all(p);
  return p;
}

ModelConfig tiny(const std::string& variant) {
  ModelConfig c;
  c.z = 8;
  c.heads = 2;
  c.ffn_hidden = 8;
  c.layers = 1;
  c.mixing_layers = 1;
  c.init_std = 0.3;
  c.variant = ModelVariant::parse(variant);
  return c;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  std::mt19937_64 rng(0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor img = Tensor::matrix(16, 16);
  for (auto& v : img.values()) v = u(rng);
  for (const char* name : {"p3net", "sdds", "stds", "stss", "dtss"}) {
    const ModelConfig c = tiny(name);
    DualBranchModel m(c, build_dual_partition(PartitionStrategy::uep, c.variant.interleaved_semantics, 1.3), 7);
    const auto dir = scratch(name);
    save_checkpoint(m, dir);
    DualBranchModel back = load_checkpoint(dir);
    ASSERT_EQ(back.params().size(), m.params().size());
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      EXPECT_EQ(back.params().items()[i].name, m.params().items()[i].name);
      EXPECT_EQ(back.params().items()[i].value, m.params().items()[i].value);
    }
    EXPECT_EQ(back.partitions().branch1, m.partitions().branch1);
    EXPECT_EQ(back.partitions().branch2, m.partitions().branch2);
    EXPECT_EQ(back.config().variant, c.variant);
    EXPECT_EQ(back.predict(img)[1], m.predict(img)[1]);
    fs::remove_all(dir);
  }
}

TEST(Checkpoint, MissingDirectoryThrows) { EXPECT_ANY_THROW(load_checkpoint(scratch("absent"))); }

TEST(Checkpoint, TruncatedBlobThrows) {
  DualBranchModel m(tiny("p3net"), build_dual_partition(PartitionStrategy::uep, true, 1.0), 1);
  const auto dir = scratch("trunc");
  save_checkpoint(m, dir);
  fs::resize_file(dir / kCheckpointBlob, fs::file_size(dir / kCheckpointBlob) / 2);
  EXPECT_ANY_THROW(load_checkpoint(dir));
  fs::remove_all(dir);
}

TEST(Checkpoint, PartitionJsonRoundTrip) {
  const auto d = build_dual_partition(PartitionStrategy::uniform_len, true, 2.0);
  const auto back = dual_partition_from_json(dual_partition_to_json(d));
  EXPECT_EQ(back.branch1, d.branch1);
  EXPECT_EQ(back.branch2, d.branch2);
  EXPECT_EQ(back.interleaved, d.interleaved);
}
