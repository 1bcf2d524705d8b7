#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <nlohmann/json.hpp>

#include "hxai/csv.hpp"
#include "test_util.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult hxai_run(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt";
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string("\"") + HXAI_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = test::slurp(out);
  r.err = test::slurp(err);
  return r;
}

json read_json(const fs::path& p) { return json::parse(test::slurp(p)); }

}  // namespace

class Cli : public ::testing::Test {
 protected:
  // One small trained workspace shared by the tests below.
  static void SetUpTestSuite() {
    work_ = new test::TempDir("cli_ws");
    scratch_ = new test::TempDir("cli_scratch");
    const std::string base = "--out \"" + work_->path().string() + "\" --seed 3 --workers 1";
    ASSERT_EQ(hxai_run("gen --n 60 " + base, scratch_->path()).code, 0);
    const CliResult t = hxai_run("train --epochs 2 --batch-size 16 " + base, scratch_->path());
    ASSERT_EQ(t.code, 0) << t.err;
  }
  static void TearDownTestSuite() {
    delete work_;
    delete scratch_;
  }
  static std::string ws() { return "--out \"" + work_->path().string() + "\" --seed 3 --workers 1"; }

  static test::TempDir* work_;
  static test::TempDir* scratch_;
};

test::TempDir* Cli::work_ = nullptr;
test::TempDir* Cli::scratch_ = nullptr;

TEST_F(Cli, HelpExitsZeroAndListsFlags) {
  const std::vector<std::pair<std::string, std::vector<std::string>>> expected{
      {"gen", {"--config", "--profile", "--out", "--seed", "--workers", "--n"}},
      {"train", {"--arch", "--split", "--prep", "--loss", "--epochs", "--batch-size", "--learning-rate"}},
      {"explain",
       {"--method", "--output", "--baseline", "--instance", "--max-instances", "--coalitions", "--permutations",
        "--lime-samples", "--lime-kernel-width", "--epsilon", "--deeplift-reference"}},
      {"report", {"--method", "--output", "--top-k", "--report-instance"}},
      {"all", {"--n", "--epochs", "--method", "--top-k"}}};
  for (const auto& [sub, flags] : expected) {
    const CliResult r = hxai_run(sub + " --help", scratch_->path());
    EXPECT_EQ(r.code, 0) << sub;
    for (const auto& f : flags) EXPECT_NE(r.out.find(f), std::string::npos) << sub << " " << f;
  }
  EXPECT_EQ(hxai_run("--help", scratch_->path()).code, 0);
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(hxai_run("", scratch_->path()).code, 1);
  EXPECT_EQ(hxai_run("gen --n lots", scratch_->path()).code, 1);
  EXPECT_EQ(hxai_run("frobnicate", scratch_->path()).code, 1);
}

TEST_F(Cli, ConfigViolationsNeverPartiallyExecute) {
  test::TempDir out("cli_bad");
  const fs::path target = out / "never";
  const CliResult r = hxai_run("all --split 2 --method nope --arch rnn --out \"" + target.string() + "\"", scratch_->path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("split"), std::string::npos);
  EXPECT_NE(r.err.find("nope"), std::string::npos);
  EXPECT_NE(r.err.find("rnn"), std::string::npos);
  EXPECT_FALSE(fs::exists(target));
}

TEST_F(Cli, ConfigFileWithFlagOverride) {
  test::TempDir out("cli_cfg");
  std::ofstream(out / "c.json") << R"({"n": 4, "seed": 2})";
  const CliResult r = hxai_run("gen --config \"" + (out / "c.json").string() + "\" --n 3 --out \"" + out.path().string() + "\"",
                         scratch_->path());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(hxai::csv::read(out / "data/labels.csv").values.rows(), 3);
  EXPECT_EQ(read_json(out / "data/manifest.json").at("seed"), 2);
}

TEST_F(Cli, GenZeroRowsIsEmpty) {
  test::TempDir out("cli_n0");
  const CliResult r = hxai_run("gen --n 0 --out \"" + out.path().string() + "\"", scratch_->path());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(hxai::csv::read(out / "data/features.csv").values.rows(), 0);
  EXPECT_EQ(hxai::csv::read(out / "data/labels.csv").values.rows(), 0);
}

TEST_F(Cli, GenIsIdempotent) {
  test::TempDir a("cli_ga"), b("cli_gb");
  for (const auto* d : {&a, &b})
    ASSERT_EQ(hxai_run("gen --n 1000 --seed 7 --out \"" + d->path().string() + "\"", scratch_->path()).code, 0);
  for (const char* f : {"data/features.csv", "data/labels.csv", "data/manifest.json"})
    EXPECT_EQ(test::slurp(a / f), test::slurp(b / f)) << f;
  auto ca = read_json(a / "config.json");
  auto cb = read_json(b / "config.json");
  ca.erase("out");
  cb.erase("out");
  EXPECT_EQ(ca, cb);
  const auto m = read_json(a / "data/manifest.json");
  EXPECT_EQ(m.at("feller_accepted"), 1000);
  EXPECT_TRUE(m.contains("feller_rejected"));
}

TEST_F(Cli, TrainRecordsDefaults) {
  const auto cnn = read_json(work_->path() / "models/cnn/model.json");
  EXPECT_EQ(cnn.at("parameter_count"), 19825);
  const auto fcnn = read_json(work_->path() / "models/fcnn/model.json");
  EXPECT_EQ(fcnn.at("config").at("loss"), "msle");
  EXPECT_EQ(fcnn.at("extra").at("preprocessing").at("kind"), "minmax_zca");
  EXPECT_TRUE(fs::exists(work_->path() / "models/fcnn/history.csv"));
}

TEST_F(Cli, TrainTwiceGivesIdenticalCheckpoint) {
  const fs::path model = work_->path() / "models/fcnn/model.json";
  const std::string before = test::slurp(model);
  ASSERT_EQ(hxai_run("train --arch fcnn --epochs 2 --batch-size 16 " + ws(), scratch_->path()).code, 0);
  EXPECT_EQ(test::slurp(model), before);
}

TEST_F(Cli, ExplainSingleLimeInstance) {
  const CliResult r = hxai_run("explain --arch fcnn --method lime --instance 0 --output kappa --lime-samples 300 " + ws(),
                         scratch_->path());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = hxai::csv::read(work_->path() / "attributions/fcnn/lime_kappa.csv");
  EXPECT_EQ(t.values.rows(), 1);
  EXPECT_EQ(t.values.cols(), 88);
}

TEST_F(Cli, ExplainRecordsBaseline) {
  const CliResult r = hxai_run("explain --arch cnn --method deeplift --baseline zeros --output v0 " + ws(), scratch_->path());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto meta = read_json(work_->path() / "attributions/cnn/deeplift_v0.json");
  EXPECT_EQ(meta.at("baseline").at("kind"), "zeros");
  EXPECT_EQ(meta.at("method"), "deeplift");
  // Every test row of the 60-row dataset: 60 - floor(0.85 * 60) = 9.
  EXPECT_EQ(hxai::csv::read(work_->path() / "attributions/cnn/deeplift_v0.csv").values.rows(), 9);
}

TEST_F(Cli, ReportWithoutAttributionsListsMissing) {
  test::TempDir out("cli_rep");
  const CliResult r = hxai_run("report --out \"" + out.path().string() + "\"", scratch_->path());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("missing inputs"), std::string::npos);
  EXPECT_NE(r.err.find("test_errors.csv"), std::string::npos);
  EXPECT_NE(r.err.find("kernel_shap_v0"), std::string::npos);
  EXPECT_NE(r.err.find("lrp_kappa"), std::string::npos);
}
