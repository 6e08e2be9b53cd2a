#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(CATWM_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("catwm_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "tiny.json") << R"({
      "seed": 3,
      "train": {"steps": 4, "warmup_steps": 1, "batch_size": 4, "eval_interval": 2, "checkpoint_interval": 2,
                "val_images": 4},
      "adversary": {"hidden_dim": 32, "projection_hidden": 16, "head_hidden": 16},
      "watermark": {"channels": 8, "res_blocks": 1},
      "data": {"size": 40},
      "ood": {"size": 8}
    })";
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string cfg() { return (root_ / "tiny.json").string(); }
  static fs::path root_;
};

fs::path Cli::root_;

TEST_F(Cli, UnknownSubcommandPrintsUsage) {
  const auto r = run("frobnicate");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("Usage"), std::string::npos) << r.output;
  EXPECT_NE(run("").code, 0);
}

TEST_F(Cli, HelpListsSubcommands) {
  const auto r = run("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"train", "eval", "report", "ablate"}) EXPECT_NE(r.output.find(sub), std::string::npos) << sub;
}

TEST_F(Cli, InvalidConfigFailsWithValidationError) {
  std::ofstream(root_ / "bad.json") << R"({"adversary": {"lambda_ent": -1}})";
  const auto r = run("train --config " + (root_ / "bad.json").string() + " --out " + (root_ / "bad").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("ValidationError"), std::string::npos) << r.output;
}

TEST_F(Cli, TrainEvalReport) {
  const auto run_dir = root_ / "run";
  const auto t = run("train --config " + cfg() + " --mode cat --depth 2 --out " + run_dir.string());
  ASSERT_EQ(t.code, 0) << t.output;
  EXPECT_TRUE(fs::exists(run_dir / "log.csv"));
  EXPECT_TRUE(fs::exists(run_dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(run_dir / "checkpoints" / "step_00000004" / "model.pt"));
  EXPECT_TRUE(fs::exists(run_dir / "checkpoints" / "step_00000002" / "state.json"));

  const auto e = run("eval --checkpoint " + run_dir.string() + " --mode single --format both --images 4 --out " +
                     (root_ / "eval").string());
  ASSERT_EQ(e.code, 0) << e.output;
  EXPECT_TRUE(fs::exists(root_ / "eval" / "single.csv"));
  EXPECT_TRUE(fs::exists(root_ / "eval" / "single.json"));
  EXPECT_NE(e.output.find("Overall"), std::string::npos);

  const auto p = run("report --log " + run_dir.string() + " --report " + (root_ / "eval" / "single.json").string() +
                     " --out " + (root_ / "plots").string());
  ASSERT_EQ(p.code, 0) << p.output;
  int pngs = 0;
  for (const auto& f : fs::directory_iterator(root_ / "plots")) pngs += f.path().extension() == ".png";
  EXPECT_EQ(pngs, 6 + 2);
  for (const char* metric : {"lr", "alpha", "L_msg", "L_perc", "entropy", "val_bit_error"})
    EXPECT_TRUE(fs::exists(root_ / "plots" / (std::string(metric) + ".png"))) << metric;
}

TEST_F(Cli, EvalMissingCheckpointFails) {
  const auto r = run("eval --checkpoint " + (root_ / "nothing").string() + " --out " + (root_ / "x").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("error"), std::string::npos);
}

TEST_F(Cli, AblateEntropyProducesTwoRuns) {
  const auto out = root_ / "ablate";
  const auto r = run("ablate --which entropy --config " + cfg() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(out / "entropy_0.1" / "log.csv"));
  EXPECT_TRUE(fs::exists(out / "entropy_0" / "log.csv"));
  std::ifstream f(out / "ablation.json");
  const auto j = nlohmann::json::parse(f);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_NE(j[0].at("config_hash"), j[1].at("config_hash"));
}

}  // namespace
