#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "fedrg/cli.hpp"

using namespace fedrg;
namespace fs = std::filesystem;

namespace {

nlohmann::json tiny_manifest_json(const fs::path& out_dir) {
  return {
      {"master_seed", 3},
      {"output_dir", out_dir.string()},
      {"data",
       {{"num_classes", 3},
        {"n_per_class", 20},
        {"n_test_per_class", 10},
        {"input_dim", 5},
        {"num_clients", 3},
        {"dirichlet_alpha", 0.5}}},
      {"noise", {{"flavor", "symmetric"}, {"pattern", "globalized"}, {"rate", 0.4}}},
      {"rounds",
       {{"total_rounds", 3},
        {"stage1_rounds", 1},
        {"local_epochs", 1},
        {"clients_per_round", 3},
        {"clusters", 3},
        {"checkpoint_every", 2}}},
      {"model", {{"hidden", 6}, {"embed_dim", 4}}},
  };
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("fedrg_cli_" + std::to_string(::getpid()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
    unsetenv(cli::kOutputDirEnv);
  }
  void TearDown() override {
    unsetenv(cli::kOutputDirEnv);
    fs::remove_all(root_);
  }

  fs::path write_manifest(const nlohmann::json& j, const std::string& name = "manifest.json") {
    const fs::path p = root_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static int run_binary(const std::string& args) {
    const int status = std::system((std::string(FEDRG_BINARY) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  fs::path root_;
};

}  // namespace

TEST_F(CliTest, ValidateAcceptsGoodManifest) {
  const auto p = write_manifest(tiny_manifest_json(root_ / "out"));
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_validate(p.string(), out, err), cli::kExitOk);
  EXPECT_EQ(out.str(), "manifest ok\n");
}

TEST_F(CliTest, PairflipRateAboveHalfIsValidationError) {
  auto j = tiny_manifest_json(root_ / "out");
  j["noise"]["flavor"] = "pairflip";
  j["noise"]["rate"] = 0.6;
  const auto p = write_manifest(j);
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_run(p.string(), out, err), cli::kExitValidation);
  EXPECT_NE(err.str().find("noise.rate"), std::string::npos);
  EXPECT_NE(err.str().find("rate < 0.5"), std::string::npos);
  EXPECT_FALSE(fs::exists(root_ / "out"));
}

TEST_F(CliTest, UnknownFieldsAreRejected) {
  auto top = tiny_manifest_json(root_ / "out");
  top["master_sed"] = 4;
  auto nested = tiny_manifest_json(root_ / "out");
  nested["rounds"]["total_round"] = 4;
  for (const auto& j : {top, nested}) {
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_validate(write_manifest(j).string(), out, err), cli::kExitValidation);
    EXPECT_NE(err.str().find("unknown field"), std::string::npos) << err.str();
  }
}

TEST_F(CliTest, WrongTypesAreRejected) {
  auto j = tiny_manifest_json(root_ / "out");
  j["rounds"]["total_rounds"] = "ten";
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_validate(write_manifest(j).string(), out, err), cli::kExitValidation);
  EXPECT_NE(err.str().find("rounds.total_rounds"), std::string::npos) << err.str();
}

TEST_F(CliTest, SeedMustBeNonNegativeInteger) {
  for (const nlohmann::json& seed : {nlohmann::json(-1), nlohmann::json(1.5)}) {
    auto j = tiny_manifest_json(root_ / "out");
    j["master_seed"] = seed;
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_validate(write_manifest(j).string(), out, err), cli::kExitValidation);
    EXPECT_NE(err.str().find("master_seed"), std::string::npos);
  }
}

TEST_F(CliTest, MalformedJsonIsValidationError) {
  const fs::path p = root_ / "broken.json";
  std::ofstream(p) << "{\"master_seed\": ";
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_validate(p.string(), out, err), cli::kExitValidation);
}

TEST_F(CliTest, ZeroRoundsWritesSingleMetricsRow) {
  auto j = tiny_manifest_json(root_ / "out");
  j["rounds"]["total_rounds"] = 0;
  j["rounds"]["stage1_rounds"] = 0;
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_run(write_manifest(j).string(), out, err), cli::kExitOk) << err.str();
  const auto csv = slurp(root_ / "out" / "metrics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);  // header + round 0
  EXPECT_EQ(csv.rfind("round,accuracy,macro_precision,macro_fscore,cra\n0,", 0), 0u);
}

TEST_F(CliTest, RunWritesFixedLayout) {
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_run(write_manifest(tiny_manifest_json(root_ / "out")).string(), out, err), cli::kExitOk)
      << err.str();
  const fs::path dir = root_ / "out";
  for (const char* f : {"metrics.csv", "manifest.resolved.json", "kernels.json", "corruption.csv",
                        "shards.csv", "detectors.csv", "absorption.json", "summary.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "round_002.json"));
  EXPECT_FALSE(fs::exists(dir / "checkpoints" / "round_001.json"));
  // Stage II runs in rounds 2 and 3 for all three clients.
  int partitions = 0;
  for (const auto& e : fs::directory_iterator(dir / "partitions")) {
    ++partitions;
    const auto body = slurp(e.path());
    EXPECT_EQ(body.rfind("sample_id,p_clean,is_clean_pred,is_clean_true\n", 0), 0u);
  }
  EXPECT_EQ(partitions, 6);
  const auto csv = slurp(dir / "metrics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST_F(CliTest, IdenticalBytesAcrossRuns) {
  const auto j = tiny_manifest_json(root_ / "a");
  auto j2 = j;
  j2["output_dir"] = (root_ / "b").string();
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_run(write_manifest(j, "a.json").string(), out, err), cli::kExitOk);
  ASSERT_EQ(cli::cmd_run(write_manifest(j2, "b.json").string(), out, err), cli::kExitOk);
  EXPECT_EQ(slurp(root_ / "a" / "metrics.csv"), slurp(root_ / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(root_ / "a" / "partitions" / "round_003_client_01.csv"),
            slurp(root_ / "b" / "partitions" / "round_003_client_01.csv"));
}

TEST_F(CliTest, ResolvedManifestReproducesRun) {
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_run(write_manifest(tiny_manifest_json(root_ / "first")).string(), out, err), cli::kExitOk);
  setenv(cli::kOutputDirEnv, (root_ / "second").string().c_str(), 1);
  ASSERT_EQ(cli::cmd_run((root_ / "first" / "manifest.resolved.json").string(), out, err), cli::kExitOk)
      << err.str();
  EXPECT_EQ(slurp(root_ / "first" / "metrics.csv"), slurp(root_ / "second" / "metrics.csv"));
}

TEST_F(CliTest, EnvironmentOverridesOutputDir) {
  setenv(cli::kOutputDirEnv, (root_ / "override").string().c_str(), 1);
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_run(write_manifest(tiny_manifest_json(root_ / "manifest_dir")).string(), out, err),
            cli::kExitOk);
  EXPECT_TRUE(fs::exists(root_ / "override" / "metrics.csv"));
  EXPECT_FALSE(fs::exists(root_ / "manifest_dir"));
}

TEST_F(CliTest, AblationRewrites) {
  RunManifest base = manifest_from_json(tiny_manifest_json(root_));
  EXPECT_EQ(cli::apply_ablation(base, "no_stage1").rounds.stage1_rounds, 0);
  const auto ce = cli::apply_ablation(base, "ce_instead_of_sce");
  EXPECT_EQ(ce.loss.sce_alpha, 1.0);
  EXPECT_EQ(ce.loss.sce_beta, 0.0);
  EXPECT_EQ(cli::apply_ablation(base, "no_absorption").loss.lambda_n, 0.0);
  EXPECT_TRUE(cli::apply_ablation(base, "aggregate_T").method.aggregate_absorption);
  EXPECT_EQ(cli::apply_ablation(base, "loss_based_detector").method.detector, Detector::kSmallLoss);
  const auto plain = cli::apply_ablation(base, "fedavg_ce");
  EXPECT_EQ(plain.method.detector, Detector::kNone);
  EXPECT_EQ(plain.rounds.stage1_rounds, 0);
  EXPECT_EQ(plain.loss.lambda_n, 0.0);
  EXPECT_THROW(cli::apply_ablation(base, "nope"), std::invalid_argument);
}

TEST_F(CliTest, AblateWritesPairedComparison) {
  std::ostringstream out, err;
  const auto p = write_manifest(tiny_manifest_json(root_ / "abl"));
  ASSERT_EQ(cli::cmd_ablate(p.string(), "no_stage1", out, err), cli::kExitOk) << err.str();
  EXPECT_TRUE(fs::exists(root_ / "abl" / "base" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(root_ / "abl" / "no_stage1" / "metrics.csv"));
  const auto csv = slurp(root_ / "abl" / "ablation_no_stage1.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(cli::cmd_ablate(p.string(), "bogus", out, err), cli::kExitValidation);
}

TEST_F(CliTest, BinaryExitCodes) {
  const auto good = write_manifest(tiny_manifest_json(root_ / "bin"), "good.json");
  auto bad_json = tiny_manifest_json(root_ / "bin");
  bad_json["noise"]["flavor"] = "pairflip";
  bad_json["noise"]["rate"] = 0.6;
  const auto bad = write_manifest(bad_json, "bad.json");
  EXPECT_EQ(run_binary("validate " + good.string()), 0);
  EXPECT_EQ(run_binary("run " + bad.string()), 2);
  EXPECT_EQ(run_binary("frobnicate"), 2);
  EXPECT_EQ(run_binary("ablate " + good.string() + " --variant nonsense"), 2);
  EXPECT_EQ(run_binary("validate " + (root_ / "missing.json").string()), 2);
  EXPECT_EQ(run_binary("run " + good.string()), 0);
  EXPECT_TRUE(fs::exists(root_ / "bin" / "metrics.csv"));
}

TEST_F(CliTest, RuntimeFailureExitsOne) {
  auto j = tiny_manifest_json(root_ / "boom");
  j["rounds"]["learning_rate"] = 1e300;
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_run(write_manifest(j).string(), out, err), cli::kExitRuntime);
  EXPECT_NE(err.str().find("round"), std::string::npos);
  EXPECT_NE(err.str().find("client"), std::string::npos);
}
