#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hxai/grid.hpp"
#include "hxai/nnet.hpp"

namespace hxai::attrib {

/// Black-box model: one input per row in, one output vector per row out.
using Predictor = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

Predictor predictor(const nnet::Model& model);

/// Output selector meaning "sum of all outputs" (the parameter vector as a
/// whole).
inline constexpr int kSumOutputs = -1;

/// Values of `output_index` (or the row sum for kSumOutputs) per row.
Eigen::VectorXd select_output(const Eigen::MatrixXd& outputs, int output_index);

/// Explanation of one instance for every target at once. Targets are the K
/// model outputs followed by their sum, so column K is the kSumOutputs
/// target.
struct Explanation {
  Eigen::MatrixXd phi;            // features x targets
  Eigen::RowVectorXd base;        // phi_0 per target
  Eigen::RowVectorXd prediction;  // f(x) per target
  Eigen::MatrixXd std_error;      // sampled_shapley only
  bool regularized = false;       // kernel_shap fell back to a ridge solve

  /// Column of a target (0..K-1 or kSumOutputs).
  Eigen::Index target_column(int output_index) const;
  Eigen::VectorXd column(int output_index) const { return phi.col(target_column(output_index)); }
};

inline constexpr std::size_t kMaxExactPlayers = 20;

/// Exact Shapley values by enumeration of all coalitions of `players`
/// (default: every feature). Features outside `players` stay at the
/// baseline and get zero attribution. Throws InvalidParameter above
/// kMaxExactPlayers players.
Explanation exact_shapley_all(const Predictor& f, const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& baseline,
                              std::span<const Eigen::Index> players = {});
Eigen::VectorXd exact_shapley(const Predictor& f, const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& baseline,
                              int output_index, std::span<const Eigen::Index> players = {});

/// Permutation-sampling estimate with per-feature standard errors.
Explanation sampled_shapley_all(const Predictor& f, const Eigen::RowVectorXd& x,
                                const Eigen::RowVectorXd& baseline, std::size_t n_permutations,
                                std::uint64_t seed);

struct ShapleyEstimate {
  Eigen::VectorXd phi;
  Eigen::VectorXd std_error;
};
ShapleyEstimate sampled_shapley(const Predictor& f, const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& baseline,
                                std::size_t n_permutations, std::uint64_t seed, int output_index);

/// Kernel SHAP. Absent features take the background column means;
/// phi_0 = mean of f over the background rows and sum(phi) = f(x) - phi_0
/// is imposed as a constraint. Coalition sizes 1 and M-1 are always
/// enumerated; further sizes are enumerated while the budget allows and the
/// remainder is sampled by size stratum. With budget >= 2^M - 2 the
/// enumeration is complete.
Explanation kernel_shap_all(const Predictor& f, const Eigen::RowVectorXd& x, const Eigen::MatrixXd& background,
                            std::size_t n_coalitions, std::uint64_t seed);
Eigen::VectorXd kernel_shap(const Predictor& f, const Eigen::RowVectorXd& x, const Eigen::MatrixXd& background,
                            std::size_t n_coalitions, std::uint64_t seed, int output_index);

struct LimeResult {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double r2 = 0.0;
};

struct LimeOptions {
  std::size_t n_samples = 5000;
  double kernel_width = 0.0;  // <= 0: 0.75 * sqrt(M)
  double huber_delta = 1.35;
  double ridge = 1e-3;
};

/// Local linear surrogate on binary masks. Masked features take `mean`;
/// samples are weighted by exp(-d^2 / w^2), d the Euclidean distance of the
/// mask to the all-ones mask. The fit minimizes the Huber loss with a
/// jointly estimated scale plus ridge * |weights|^2. Throws DegenerateFit
/// when no feature varies across the weighted samples.
LimeResult lime_explain(const Predictor& f, const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& mean,
                        const LimeOptions& options, std::uint64_t seed, int output_index);
/// One fit per target on shared samples. With no `outputs`, K + 1 results,
/// the last for the sum; otherwise one result per listed output.
std::vector<LimeResult> lime_explain_all(const Predictor& f, const Eigen::RowVectorXd& x,
                                         const Eigen::RowVectorXd& mean, const LimeOptions& options,
                                         std::uint64_t seed, std::span<const int> outputs = {});

/// Which reference activations DeepLIFT compares against.
enum class ReferenceMode {
  /// Forward pass of the baseline input.
  propagate,
  /// Every activation-layer output has reference 0; linear layers carry their
  /// input reference forward. With a zero baseline this is the setting under
  /// which epsilon-LRP is the epsilon -> 0 limit of DeepLIFT.
  zero_activations,
};

inline constexpr double kNearZero = 1e-9;

/// DeepLIFT Rescale rule. Multipliers through activations are
/// delta(out) / delta(in), falling back to the derivative when
/// |delta(in)| < kNearZero; max-pooling routes to the winner of x. Biases
/// receive no share. phi sums to f(x) - f_ref per target.
Explanation deeplift_rescale_all(const nnet::Model& model, const Eigen::RowVectorXd& x,
                                 const Eigen::RowVectorXd& baseline,
                                 ReferenceMode mode = ReferenceMode::propagate);
Eigen::VectorXd deeplift_rescale(const nnet::Model& model, const Eigen::RowVectorXd& x,
                                 const Eigen::RowVectorXd& baseline, int output_index,
                                 ReferenceMode mode = ReferenceMode::propagate);

inline constexpr double kDefaultLrpEpsilon = 1e-4;

/// Epsilon-LRP starting from relevance f(x) at the target. Linear layers
/// redistribute with bias-free denominators z + epsilon * sign(z)
/// (sign(0) = +1), activations pass relevance through, max-pooling is
/// winner-take-all. epsilon = 0 with an exactly zero denominator throws
/// NumericalFailure.
Explanation epsilon_lrp_all(const nnet::Model& model, const Eigen::RowVectorXd& x,
                            double epsilon = kDefaultLrpEpsilon);
Eigen::VectorXd epsilon_lrp(const nnet::Model& model, const Eigen::RowVectorXd& x, int output_index,
                            double epsilon = kDefaultLrpEpsilon);

enum class BaselineKind { zeros, train_mean, custom };
std::string_view to_string(BaselineKind k);
BaselineKind parse_baseline_kind(std::string_view s);

struct BaselineSpec {
  BaselineKind kind = BaselineKind::zeros;
  Eigen::RowVectorXd values;

  static BaselineSpec zeros(Eigen::Index n);
  static BaselineSpec train_mean(const Eigen::MatrixXd& train);
  static BaselineSpec custom(Eigen::RowVectorXd v);
};

/// Attributions of many instances for one target.
struct AttributionMatrix {
  std::string method;
  BaselineSpec baseline;
  std::uint64_t seed = 0;
  int output_index = kSumOutputs;
  Grid grid = Grid::canonical();
  Eigen::MatrixXd values;                 // instances x features
  Eigen::VectorXd base_value;             // phi_0 per instance
  Eigen::VectorXd prediction;             // f(x) per instance
  std::vector<std::size_t> instances;     // instance ids (test-row indices)
  nlohmann::json parameters = nlohmann::json::object();

  /// Values of one instance as a (maturity x strike) grid.
  Eigen::MatrixXd instance_grid(std::size_t row) const;
};

/// mean |phi| per feature, as a (maturity x strike) grid.
Eigen::MatrixXd aggregate_importance(const AttributionMatrix& a);
/// Element-wise sum of per-parameter importance grids.
Eigen::MatrixXd overall_importance(std::span<const Eigen::MatrixXd> grids);

inline constexpr int kAttributionSchema = 1;

/// `stem`.csv (instances x features, header of T/K column names) and
/// `stem`.json (metadata).
void save_attribution(const AttributionMatrix& a, const std::filesystem::path& stem);
AttributionMatrix load_attribution(const std::filesystem::path& stem);

}  // namespace hxai::attrib
