#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "hxai/errors.hpp"
#include "hxai/pipeline.hpp"
#include "hxai/report.hpp"
#include "test_util.hpp"

using namespace hxai;
using namespace hxai::pipeline;
using nlohmann::json;

namespace {

ExperimentConfig tiny(const std::filesystem::path& out) {
  return resolve_config(std::nullopt, {{"n", 60},
                                       {"epochs", 2},
                                       {"batch_size", 16},
                                       {"max_instances", 3},
                                       {"methods", kMethods},
                                       {"outputs", {"v0", "kappa", "sum"}},
                                       {"coalitions", 64},
                                       {"permutations", 4},
                                       {"lime_samples", 200},
                                       {"workers", 1},
                                       {"out", out.string()}});
}

}  // namespace

TEST(Config, ProfileDefaults) {
  EXPECT_EQ(profile_defaults("desk").n, 2000u);
  EXPECT_EQ(profile_defaults("paper").n, 10000u);
  EXPECT_EQ(profile_defaults("large").n, 100000u);
  EXPECT_EQ(profile_defaults("desk").epochs, 200u);
  EXPECT_THROW(profile_defaults("huge"), ConfigError);
}

TEST(Config, PrecedenceProfileFileOverrides) {
  test::TempDir dir("cfg");
  std::ofstream(dir / "c.json") << R"({"profile": "paper", "epochs": 7, "seed": 3})";
  const auto a = resolve_config(dir / "c.json", json::object());
  EXPECT_EQ(a.n, 10000u);
  EXPECT_EQ(a.epochs, 7u);
  EXPECT_EQ(a.seed, 3u);
  const auto b = resolve_config(dir / "c.json", {{"seed", 9}, {"profile", "desk"}});
  EXPECT_EQ(b.n, 2000u);
  EXPECT_EQ(b.epochs, 7u);
  EXPECT_EQ(b.seed, 9u);
}

TEST(Config, AllViolationsReportedTogether) {
  try {
    resolve_config(std::nullopt, {{"split", 1.5}, {"methods", {"shap"}}, {"bogus", 1}, {"epochs", "many"}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.violations().size(), 4u);
  }
}

TEST(Config, ValidateDefaults) {
  ExperimentConfig c;
  c.out = "somewhere";
  EXPECT_TRUE(c.violations().empty());
  c.explain.lime_samples = 10;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  const auto c = resolve_config(std::nullopt, {{"seed", 4}, {"arch", {"cnn"}}, {"out", "x"}});
  std::vector<std::string> v;
  ExperimentConfig d;
  apply_json(d, c.to_json(), v);
  EXPECT_TRUE(v.empty());
  EXPECT_EQ(d.to_json(), c.to_json());
}

TEST(Config, OutputRootFromEnvironment) {
  ::setenv("HXAI_OUTPUT_ROOT", "/tmp/somewhere", 1);
  EXPECT_EQ(default_output_root(), std::filesystem::path("/tmp/somewhere"));
  ::unsetenv("HXAI_OUTPUT_ROOT");
  EXPECT_EQ(default_output_root(), std::filesystem::path("hxai_out"));
}

TEST(Names, OutputsAndSeeds) {
  EXPECT_EQ(output_index("v0"), 0);
  EXPECT_EQ(output_index("kappa"), 4);
  EXPECT_EQ(output_index("sum"), attrib::kSumOutputs);
  EXPECT_EQ(output_name(attrib::kSumOutputs), "sum");
  EXPECT_THROW(output_index("vol"), InvalidParameter);
  EXPECT_EQ(item_seed(1, 5), item_seed(1, 5));
  EXPECT_NE(item_seed(1, 5), item_seed(1, 6));
  EXPECT_NE(item_seed(1, 5), item_seed(2, 5));
}

TEST(Defaults, PerArchitecture) {
  const ExperimentConfig c;
  EXPECT_EQ(preprocessing_for(c, nnet::Architecture::fcnn), datagen::PreprocessKind::minmax_zca);
  EXPECT_EQ(preprocessing_for(c, nnet::Architecture::cnn), datagen::PreprocessKind::standardize);
  EXPECT_EQ(train_config_for(c, nnet::Architecture::fcnn).loss, nnet::LossKind::msle);
  EXPECT_EQ(train_config_for(c, nnet::Architecture::cnn).loss, nnet::LossKind::rmse);
}

TEST(EndToEnd, SmallRunProducesReport) {
  test::TempDir dir("e2e");
  const auto c = tiny(dir.path());
  std::ostringstream log;
  cmd_all(c, log);
  const Layout l{dir.path()};

  for (const char* arch : {"fcnn", "cnn"}) {
    EXPECT_TRUE(std::filesystem::exists(l.model_file(arch)));
    EXPECT_TRUE(std::filesystem::exists(l.report_dir() / arch / "errors_summary.json")) << arch;
    for (const auto& method : kMethods) {
      const auto a = attrib::load_attribution(l.attribution_stem(arch, method, "v0"));
      EXPECT_EQ(a.values.rows(), 3);
      EXPECT_EQ(a.values.cols(), 88);
      std::size_t heatmaps = 0;
      for (const auto& f : std::filesystem::directory_iterator(l.report_dir() / arch / method))
        if (f.path().extension() == ".csv" && f.path().stem().string().rfind("heatmap_", 0) == 0) ++heatmaps;
      EXPECT_EQ(heatmaps, 4u) << arch << " " << method;  // v0, kappa, sum, overall
    }
  }
  const auto index = json::parse(test::slurp(l.report_dir() / "index.json"));
  EXPECT_GE(index.at("entries").size(), 10u);
  EXPECT_NE(log.str().find("report"), std::string::npos);
}

TEST(EndToEnd, ReRunIsByteIdentical) {
  test::TempDir a("idem_a"), b("idem_b");
  std::ostringstream log;
  for (const auto* d : {&a, &b}) {
    auto c = tiny(d->path());
    c.architectures = {"fcnn"};
    c.explain.methods = {"kernel_shap", "deeplift"};
    cmd_gen(c, log);
    cmd_train(c, log);
    cmd_explain(c, log);
  }
  for (const char* f : {"data/features.csv", "data/labels.csv", "models/fcnn/model.json",
                        "attributions/fcnn/kernel_shap_v0.csv", "attributions/fcnn/deeplift_sum.json"})
    EXPECT_EQ(test::slurp(a / f), test::slurp(b / f)) << f;
}

TEST(EndToEnd, ReportWithoutInputsListsThem) {
  test::TempDir dir("missing");
  auto c = tiny(dir.path());
  std::ostringstream log;
  try {
    cmd_report(c, log);
    FAIL() << "expected MissingInputs";
  } catch (const MissingInputs& e) {
    EXPECT_GT(e.paths().size(), 2u * kMethods.size());
  }
}
