#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hxai/attrib.hpp"
#include "hxai/grid.hpp"

namespace hxai::report {

inline constexpr int kReportSchema = 1;

// ---- prediction errors ----

struct HistogramSpec {
  double lo = -0.5;
  double hi = 0.5;
  std::size_t bins = 101;
};

/// Fixed-bin histogram per parameter; values below lo / at or above hi land
/// in the underflow / overflow counters.
struct ErrorHistogram {
  std::vector<double> edges;                  // bins + 1
  std::vector<std::vector<std::size_t>> counts;  // parameter x bin
  std::vector<std::size_t> underflow, overflow, non_finite;
};

struct ErrorReport {
  std::vector<std::string> parameters;
  ErrorHistogram histogram;
  std::vector<double> mean_abs, median_abs, max_abs;
  /// Some |error| exceeds ten times the median |error|.
  std::vector<bool> heavy_tail;
  std::size_t rows = 0;
};

/// `relative` is rows x parameters, columns in (v0, rho, sigma, theta, kappa)
/// order unless other names are given.
ErrorReport error_report(const Eigen::MatrixXd& relative, std::vector<std::string> parameters = {},
                         const HistogramSpec& spec = {});
/// `stem`_histogram.csv (bin_lo, bin_hi, one count column per parameter,
/// with under/overflow rows at +-inf) and `stem`_summary.json.
void write_error_report(const ErrorReport& r, const std::filesystem::path& stem);

// ---- heat maps ----

struct HeatMap {
  Grid grid = Grid::canonical();
  Eigen::MatrixXd values;  // maturity x strike, nonnegative
  std::string method;
  std::string title;
  bool normalized = false;
};

/// Wraps an importance grid; with `normalize` the grid is divided by its max
/// (left unchanged when the max is zero).
HeatMap make_heatmap(const Eigen::MatrixXd& grid_values, std::string method, std::string title, bool normalize = false,
                     const Grid& grid = Grid::canonical());

/// Flat index of the largest cell; ties go to the lowest flat index.
std::size_t argmax_cell(const Eigen::MatrixXd& grid_values);

/// `stem`.csv (first column maturity, header strikes) and `stem`.svg.
void heatmap_emit(const HeatMap& h, const std::filesystem::path& stem);
Eigen::MatrixXd read_heatmap_csv(const std::filesystem::path& path, const Grid& grid = Grid::canonical());
std::string heatmap_svg(const HeatMap& h);

// ---- force plots ----

struct Contribution {
  std::size_t feature = 0;
  std::string label;
  double phi = 0.0;
};

struct ForcePlotData {
  std::size_t instance = 0;
  int output_index = attrib::kSumOutputs;
  std::string output;
  std::string method;
  double base_value = 0.0;
  double prediction = 0.0;
  double mean_test_prediction = 0.0;
  std::vector<Contribution> positive;  // sorted by |phi| descending
  std::vector<Contribution> negative;
  std::optional<double> tolerance;

  double contribution_sum() const;
  double balance_error() const { return base_value + contribution_sum() - prediction; }
  bool balanced() const;
};

/// Conservation tolerance of a method for an instance with the given base and
/// prediction; empty for methods without a conservation property (lime,
/// epsilon_lrp).
std::optional<double> conservation_tolerance(const std::string& method, double base, double prediction);

/// Force data of one instance id. `test_predictions` are the model outputs
/// for the target over the test set (their mean is recorded). Throws
/// InvalidParameter when the instance is not in the matrix.
ForcePlotData force_plot_data(const attrib::AttributionMatrix& a, const Eigen::VectorXd& test_predictions,
                              std::size_t instance);
nlohmann::json to_json(const ForcePlotData& f);

/// Every instance's force data ordered by instance id: CSV with columns
/// instance, base_value, prediction, then one column per feature.
void write_cluster_export(const attrib::AttributionMatrix& a, const std::filesystem::path& path);

// ---- importance tables ----

struct RankedFeature {
  std::size_t parameter = 0;
  std::size_t rank = 0;  // 1-based
  std::size_t flat = 0;
  double maturity = 0.0;
  double strike = 0.0;
  std::string label;
  double importance = 0.0;
};

/// Top-k cells per grid, descending by importance, ties by flat index.
/// k larger than the grid returns every cell.
std::vector<RankedFeature> summary_table(std::span<const Eigen::MatrixXd> grids, std::size_t k,
                                         const Grid& grid = Grid::canonical());
void write_summary_table(const std::vector<RankedFeature>& rows, const std::vector<std::string>& parameters,
                         const std::filesystem::path& stem);

/// Writes `j` with schema_version added, creating parent directories.
void write_json(const std::filesystem::path& path, nlohmann::json j);

}  // namespace hxai::report
