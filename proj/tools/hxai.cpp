// hxai: generate Heston surfaces, train calibration networks, explain them
// and render the report artifacts.
#include <CLI11.hpp>

#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "hxai/errors.hpp"
#include "hxai/pipeline.hpp"

namespace {

using nlohmann::json;

enum Group : unsigned {
  kData = 1,
  kTrain = 2,
  kExplain = 4,
  kReport = 8,
};

struct Options {
  std::optional<std::string> config;
  json overrides = json::object();
};

template <class T>
void flag(CLI::App* app, json& overrides, const std::string& name, const char* key, const std::string& help) {
  app->add_option_function<T>(name, [&overrides, key](const T& v) { overrides[key] = v; }, help);
}

void add_options(CLI::App* app, Options& o, unsigned groups) {
  app->add_option_function<std::string>("--config", [&o](const std::string& v) { o.config = v; },
                                        "JSON experiment config; flags override its values");
  json& ov = o.overrides;
  flag<std::string>(app, ov, "--profile", "profile", "desk (n=2000), paper (n=10000) or large (n=100000)");
  flag<std::string>(app, ov, "--out", "out", "output directory (default: $HXAI_OUTPUT_ROOT or ./hxai_out)");
  flag<std::uint64_t>(app, ov, "--seed", "seed", "seed for sampling, splitting, initialization and attribution");
  flag<unsigned>(app, ov, "--workers", "workers", "worker threads (0 = hardware concurrency)");
  if (groups & kData) flag<std::size_t>(app, ov, "--n", "n", "number of surfaces to generate");
  if (groups & (kTrain | kExplain | kReport)) {
    flag<std::vector<std::string>>(app, ov, "--arch", "architectures", "fcnn and/or cnn (repeatable)");
    flag<double>(app, ov, "--split", "split", "training fraction of the dataset");
  }
  if (groups & kTrain) {
    flag<std::string>(app, ov, "--prep", "preprocessing", "minmax, minmax_zca or standardize (default per architecture)");
    flag<std::string>(app, ov, "--loss", "loss", "msle, rmse or mse (default per architecture)");
    flag<std::size_t>(app, ov, "--epochs", "epochs", "training epochs");
    flag<std::size_t>(app, ov, "--batch-size", "batch_size", "mini-batch size");
    flag<double>(app, ov, "--learning-rate", "learning_rate", "Adam learning rate");
  }
  if (groups & (kExplain | kReport)) {
    flag<std::vector<std::string>>(app, ov, "--method", "methods",
                                   "kernel_shap, sampled_shapley, lime, deeplift, lrp (repeatable)");
    flag<std::vector<std::string>>(app, ov, "--output", "outputs", "v0, rho, sigma, theta, kappa or sum (repeatable)");
  }
  if (groups & kExplain) {
    flag<std::string>(app, ov, "--baseline", "baseline", "zeros or train_mean (default per method)");
    flag<std::size_t>(app, ov, "--instance", "instance", "explain this single test row");
    flag<std::size_t>(app, ov, "--max-instances", "max_instances", "explain at most this many test rows (0 = all)");
    flag<std::size_t>(app, ov, "--coalitions", "coalitions", "kernel SHAP coalition budget");
    flag<std::size_t>(app, ov, "--permutations", "permutations", "sampled Shapley permutations");
    flag<std::size_t>(app, ov, "--lime-samples", "lime_samples", "LIME perturbation samples");
    flag<double>(app, ov, "--lime-kernel-width", "lime_kernel_width", "LIME kernel width (0 = 0.75 sqrt(M))");
    flag<double>(app, ov, "--epsilon", "lrp_epsilon", "epsilon-LRP stabilizer");
    flag<std::string>(app, ov, "--deeplift-reference", "deeplift_reference", "propagate or zero_activations");
  }
  if (groups & kReport) {
    flag<std::size_t>(app, ov, "--top-k", "top_k", "rows per parameter in the importance table");
    flag<std::size_t>(app, ov, "--report-instance", "report_instance", "test row used for force-plot data");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heston calibration networks and their explanations"};
  app.require_subcommand(1);

  Options gen, train, explain, report, all;
  auto* gen_cmd = app.add_subcommand("gen", "generate the synthetic surface dataset");
  add_options(gen_cmd, gen, kData);
  auto* train_cmd = app.add_subcommand("train", "train networks; writes checkpoint, history and error report");
  add_options(train_cmd, train, kTrain);
  auto* explain_cmd = app.add_subcommand("explain", "attribute test-set predictions");
  add_options(explain_cmd, explain, kExplain);
  auto* report_cmd = app.add_subcommand("report", "heat maps, importance tables, force-plot data and index");
  add_options(report_cmd, report, kReport);
  auto* all_cmd = app.add_subcommand("all", "gen, train, explain and report in one run");
  add_options(all_cmd, all, kData | kTrain | kExplain | kReport);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto run = [](const Options& o, void (*cmd)(const hxai::pipeline::ExperimentConfig&, std::ostream&)) {
    try {
      std::optional<std::filesystem::path> file;
      if (o.config) file = *o.config;
      const auto config = hxai::pipeline::resolve_config(file, o.overrides);
      cmd(config, std::cout);
      return 0;
    } catch (const hxai::ConfigError& e) {
      std::cerr << "hxai: " << e.what() << '\n';
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "hxai: error: " << e.what() << '\n';
      return 2;
    }
  };

  if (gen_cmd->parsed()) return run(gen, hxai::pipeline::cmd_gen);
  if (train_cmd->parsed()) return run(train, hxai::pipeline::cmd_train);
  if (explain_cmd->parsed()) return run(explain, hxai::pipeline::cmd_explain);
  if (report_cmd->parsed()) return run(report, hxai::pipeline::cmd_report);
  return run(all, hxai::pipeline::cmd_all);
}
