#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hxai/attrib.hpp"
#include "hxai/nnet.hpp"
#include "hxai/preprocess.hpp"

namespace hxai::pipeline {

/// Attribution methods reachable from the command line.
inline const std::vector<std::string> kMethods{"kernel_shap", "sampled_shapley", "lime", "deeplift", "lrp"};
/// Output names: the five parameters plus "sum" for the parameter vector as a whole.
inline const std::vector<std::string> kOutputs{"v0", "rho", "sigma", "theta", "kappa", "sum"};

int output_index(std::string_view name);  // throws InvalidParameter
std::string output_name(int index);

struct ExplainSettings {
  std::vector<std::string> methods{"kernel_shap", "lime", "deeplift", "lrp"};
  std::vector<std::string> outputs{"v0", "rho", "sigma", "theta", "kappa"};
  /// Empty: zeros for deeplift/lrp, train_mean for the masking methods.
  std::string baseline;
  std::size_t coalitions = 4096;
  std::size_t permutations = 100;
  std::size_t lime_samples = 5000;
  double lime_kernel_width = 0.0;
  double lrp_epsilon = attrib::kDefaultLrpEpsilon;
  std::string deeplift_reference = "propagate";
  /// Explain a single test row instead of the whole test split.
  std::optional<std::size_t> instance;
  /// Cap on explained test rows (0 = all).
  std::size_t max_instances = 0;
};

struct ExperimentConfig {
  std::string profile = "desk";
  std::size_t n = 2000;
  std::uint64_t seed = 1;
  double split = 0.85;
  std::vector<std::string> architectures{"fcnn", "cnn"};
  /// Empty: minmax_zca for fcnn, standardize for cnn.
  std::string preprocessing;
  /// Empty: msle for fcnn, rmse for cnn.
  std::string loss;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  ExplainSettings explain;
  std::size_t top_k = 20;
  std::size_t report_instance = 0;
  unsigned workers = 0;
  std::filesystem::path out;

  /// Every violated constraint, empty when the config is usable.
  std::vector<std::string> violations() const;
  /// Throws ConfigError listing all violations.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Defaults of a named profile: desk (n = 2,000), paper (n = 10,000),
/// large (n = 100,000). Throws ConfigError on an unknown name.
ExperimentConfig profile_defaults(std::string_view name);

/// Applies the keys of `j` onto `c`. Unknown keys and ill-typed values are
/// collected into `violations` rather than thrown.
void apply_json(ExperimentConfig& c, const nlohmann::json& j, std::vector<std::string>& violations);

/// Builds a config: profile defaults (from `overrides`, then `file`, then
/// desk), then the config file, then `overrides`; validates the result.
ExperimentConfig resolve_config(const std::optional<std::filesystem::path>& file, const nlohmann::json& overrides);

/// HXAI_OUTPUT_ROOT when set, otherwise ./hxai_out.
std::filesystem::path default_output_root();

/// File locations under the output directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path model_dir(std::string_view arch) const { return root / "models" / std::string(arch); }
  std::filesystem::path model_file(std::string_view arch) const { return model_dir(arch) / "model.json"; }
  std::filesystem::path attribution_stem(std::string_view arch, std::string_view method,
                                         std::string_view output) const {
    return root / "attributions" / std::string(arch) / (std::string(method) + "_" + std::string(output));
  }
  std::filesystem::path report_dir() const { return root / "report"; }
};

/// Per-item seed derived from a run seed.
std::uint64_t item_seed(std::uint64_t seed, std::uint64_t index);

nnet::Architecture parse_arch(std::string_view s);
datagen::PreprocessKind preprocessing_for(const ExperimentConfig& c, nnet::Architecture arch);
nnet::TrainConfig train_config_for(const ExperimentConfig& c, nnet::Architecture arch);

/// Dataset, split and preprocessed inputs as seen by a trained model.
struct PreparedData {
  datagen::Dataset data;
  datagen::Split split;
  datagen::Preprocessor preprocessor;
  Eigen::MatrixXd x_train, x_test;
};
/// Loads the dataset and splits it; fits the preprocessing unless a fitted
/// one is given (as stored in a checkpoint).
PreparedData prepare(const ExperimentConfig& c, nnet::Architecture arch,
                     const datagen::Preprocessor* fitted = nullptr);

void cmd_gen(const ExperimentConfig& c, std::ostream& log);
void cmd_train(const ExperimentConfig& c, std::ostream& log);
void cmd_explain(const ExperimentConfig& c, std::ostream& log);
void cmd_report(const ExperimentConfig& c, std::ostream& log);
void cmd_all(const ExperimentConfig& c, std::ostream& log);

}  // namespace hxai::pipeline
