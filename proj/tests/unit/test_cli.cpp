#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "dd_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(DENSITYDIST_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string capture(const std::string& args) {
  const std::string cmd = std::string(DENSITYDIST_CLI) + " " + args + " 2>/dev/null";
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return out;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  pclose(pipe);
  return out;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    write(kRoot / "spec.json", R"({"h": 16, "w": 16, "k_max": 20})");
    write(kRoot / "train.json",
          R"({"epochs": 1, "z": 8, "heads": 2, "layers": 1, "ffn_hidden": 8, "mixing_layers": 1,
              "labeled_ratio": 0.5})");
  }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run("gen-data"), 2);
}

TEST_F(Cli, InspectLossPrintsAnchorValue) {
  write(kRoot / "loss.json", R"({"pred": [[0.2, 0.3, 0.5, 0.0]], "label": [1], "l": 2})");
  const auto out = capture("inspect-loss " + (kRoot / "loss.json").string());
  ASSERT_EQ(out.rfind("value,", 0), 0u) << out;
  EXPECT_NEAR(std::stod(out.substr(6)), 0.29, 1e-9);
  EXPECT_NE(out.find("grad,"), std::string::npos);
  write(kRoot / "bad.json", R"({"pred": [[0.2, 0.8]], "label": [5], "l": 2})");
  EXPECT_EQ(run("inspect-loss " + (kRoot / "bad.json").string()), 2);
}

TEST_F(Cli, PipelineAndAttentionDump) {
  const auto data = kRoot / "data";
  ASSERT_EQ(run("gen-data --out " + data.string() + " --n 12 --seed 5 --spec " + (kRoot / "spec.json").string()), 0);
  EXPECT_TRUE(fs::exists(data / "manifest.json"));
  ASSERT_EQ(run("make-labels --data " + data.string()), 0);
  EXPECT_TRUE(fs::exists(data / "scene_0000.labels2.csv"));

  const auto out = kRoot / "trained";
  ASSERT_EQ(run("train --config " + (kRoot / "train.json").string() + " --out " + out.string() + " --data " +
                data.string()),
            0);
  EXPECT_TRUE(fs::exists(out / "history.csv"));
  EXPECT_TRUE(fs::exists(out / "model" / "model.json"));

  ASSERT_EQ(run("eval --checkpoint " + (out / "model").string() + " --data " + data.string() + " --out " +
                (kRoot / "eval.csv").string()),
            0);
  EXPECT_TRUE(fs::exists(kRoot / "eval.csv"));

  const auto att = kRoot / "attention";
  ASSERT_EQ(run("dump-attention --checkpoint " + (out / "model").string() + " --data " + data.string() +
                " --scene 0 --out " + att.string()),
            0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(att))
    if (e.path().extension() == ".csv") ++files;
  EXPECT_EQ(files, 51u);

  EXPECT_EQ(run("eval --checkpoint " + (kRoot / "missing").string() + " --data " + data.string()), 2);
  EXPECT_EQ(run("dump-attention --checkpoint " + (out / "model").string() + " --data " + data.string() +
                " --scene 999 --out " + att.string()),
            2);
}

TEST_F(Cli, InvalidConfigExitsWithUsageCode) {
  write(kRoot / "neg.json", R"({"lambda": -1})");
  EXPECT_EQ(run("run-experiment --config " + (kRoot / "neg.json").string() + " --out " + (kRoot / "x").string()), 2);
  write(kRoot / "unknown.json", R"({"lamda": 0.1})");
  const std::string cmd = std::string(DENSITYDIST_CLI) + " run-experiment --config " +
                          (kRoot / "unknown.json").string() + " --out " + (kRoot / "x").string() + " 2>&1";
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  char buf[512];
  while (pipe && std::fgets(buf, sizeof buf, pipe)) out += buf;
  const int status = pipe ? pclose(pipe) : -1;
  EXPECT_EQ(WEXITSTATUS(status), 2);
  EXPECT_NE(out.find("lamda"), std::string::npos) << out;
}

TEST_F(Cli, NonFiniteTrainingExitsWithNumericCode) {
  write(kRoot / "huge.json",
        R"({"epochs": 2, "z": 8, "heads": 2, "layers": 1, "ffn_hidden": 8, "mixing_layers": 1, "lr": 1e300,
            "labeled_ratio": 0.5})");
  const auto data = kRoot / "data_nan";
  ASSERT_EQ(run("gen-data --out " + data.string() + " --n 6 --seed 1 --spec " + (kRoot / "spec.json").string()), 0);
  EXPECT_EQ(run("train --config " + (kRoot / "huge.json").string() + " --out " + (kRoot / "nan").string() +
                " --data " + data.string()),
            3);
}
