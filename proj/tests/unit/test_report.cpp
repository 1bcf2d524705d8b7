#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <regex>
#include <set>

#include "hxai/csv.hpp"
#include "hxai/errors.hpp"
#include "hxai/report.hpp"
#include "test_util.hpp"

using namespace hxai;
using namespace hxai::report;
using Eigen::MatrixXd;

namespace {

attrib::AttributionMatrix matrix(Eigen::Index rows, std::uint64_t seed, const std::string& method = "exact_shapley") {
  std::mt19937_64 rng(seed);
  attrib::AttributionMatrix a;
  a.method = method;
  a.baseline = attrib::BaselineSpec::zeros(88);
  a.output_index = 0;
  a.values = test::random_matrix(rows, 88, rng);
  a.base_value = test::random_matrix(rows, 1, rng);
  a.prediction = a.base_value + a.values.rowwise().sum();
  for (Eigen::Index i = 0; i < rows; ++i) a.instances.push_back(static_cast<std::size_t>(rows - 1 - i));
  return a;
}

std::set<std::string> cell_fills(const std::string& svg) {
  static const std::regex cell(R"re(fill="([^"]+)" data-flat=)re");
  std::set<std::string> fills;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), cell); it != std::sregex_iterator(); ++it)
    fills.insert((*it)[1]);
  return fills;
}

}  // namespace

TEST(ErrorReport, ZeroErrorsFormOneSpike) {
  const auto r = error_report(MatrixXd::Zero(50, 5));
  ASSERT_EQ(r.parameters, (std::vector<std::string>{"v0", "rho", "sigma", "theta", "kappa"}));
  for (std::size_t p = 0; p < 5; ++p) {
    std::size_t nonzero = 0;
    std::size_t where = 0;
    for (std::size_t b = 0; b < r.histogram.counts[p].size(); ++b)
      if (r.histogram.counts[p][b] > 0) {
        ++nonzero;
        where = b;
      }
    EXPECT_EQ(nonzero, 1u);
    EXPECT_EQ(r.histogram.counts[p][where], 50u);
    EXPECT_LE(r.histogram.edges[where], 0.0);
    EXPECT_GT(r.histogram.edges[where + 1], 0.0);
  }
}

TEST(ErrorReport, OverflowAndSummary) {
  MatrixXd e = MatrixXd::Constant(20, 5, 0.01);
  e(0, 2) = 3.0;
  e(1, 2) = -4.0;
  e(2, 4) = std::numeric_limits<double>::quiet_NaN();
  const auto r = error_report(e);
  EXPECT_EQ(r.histogram.overflow[2], 1u);
  EXPECT_EQ(r.histogram.underflow[2], 1u);
  EXPECT_EQ(r.histogram.non_finite[4], 1u);
  EXPECT_TRUE(r.heavy_tail[2]);
  EXPECT_FALSE(r.heavy_tail[0]);
  for (std::size_t p = 0; p < 5; ++p)
    if (r.heavy_tail[p]) EXPECT_LE(r.median_abs[p], r.mean_abs[p]);
  EXPECT_DOUBLE_EQ(r.max_abs[2], 4.0);
}

TEST(ErrorReport, Files) {
  test::TempDir dir("err");
  write_error_report(error_report(MatrixXd::Constant(4, 5, 0.1)), dir / "fcnn_errors");
  const auto t = csv::read(dir / "fcnn_errors_histogram.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"bin_lo", "bin_hi", "v0", "rho", "sigma", "theta", "kappa"}));
  EXPECT_EQ(t.values.rows(), 103);
  const auto j = nlohmann::json::parse(test::slurp(dir / "fcnn_errors_summary.json"));
  EXPECT_EQ(j.at("schema_version"), kReportSchema);
}

TEST(HeatMap, CsvRoundTripIsExact) {
  test::TempDir dir("hm");
  std::mt19937_64 rng(1);
  MatrixXd g = test::random_matrix(8, 11, rng).cwiseAbs();
  g(0, 0) = 1.0 / 3.0;
  g(7, 10) = 1e-300;
  heatmap_emit(make_heatmap(g, "kernel_shap", "v0"), dir / "heatmap_v0");
  EXPECT_EQ(read_heatmap_csv(dir / "heatmap_v0.csv"), g);
  EXPECT_TRUE(std::filesystem::exists(dir / "heatmap_v0.svg"));
}

TEST(HeatMap, NormalizeDividesByMax) {
  MatrixXd g = MatrixXd::Constant(8, 11, 2.0);
  g(3, 3) = 8.0;
  const auto h = make_heatmap(g, "lime", "x", true);
  EXPECT_DOUBLE_EQ(h.values(3, 3), 1.0);
  EXPECT_DOUBLE_EQ(h.values(0, 0), 0.25);
  EXPECT_EQ(make_heatmap(MatrixXd::Zero(8, 11), "lime", "x", true).values, MatrixXd::Zero(8, 11));
}

TEST(HeatMap, AllEqualIsUniform) {
  const std::string svg = heatmap_svg(make_heatmap(MatrixXd::Constant(8, 11, 0.5), "deeplift", "flat"));
  EXPECT_EQ(cell_fills(svg).size(), 1u);
  EXPECT_NE(svg.find("legend-value"), std::string::npos);
  EXPECT_EQ(svg.find("legend-max"), std::string::npos);
}

TEST(HeatMap, AnnotationIsArgmax) {
  std::mt19937_64 rng(2);
  const MatrixXd g = test::random_matrix(8, 11, rng).cwiseAbs();
  Eigen::Index r, c;
  g.maxCoeff(&r, &c);
  const std::string svg = heatmap_svg(make_heatmap(g, "lrp", "t"));
  EXPECT_NE(svg.find("class=\"argmax\" data-flat=\"" + std::to_string(r * 11 + c) + "\""), std::string::npos);
  EXPECT_GT(cell_fills(svg).size(), 50u);
}

TEST(HeatMap, ArgmaxTiesGoLow) {
  MatrixXd g = MatrixXd::Zero(8, 11);
  g(5, 2) = 1.0;
  g(1, 7) = 1.0;
  EXPECT_EQ(argmax_cell(g), 18u);
  EXPECT_EQ(argmax_cell(MatrixXd::Zero(8, 11)), 0u);
}

TEST(HeatMap, WrongShapeThrows) { EXPECT_THROW(make_heatmap(MatrixXd::Zero(3, 3), "m", "t"), DimensionError); }

TEST(ForcePlot, ExactShapleyBalances) {
  const auto a = matrix(6, 3);
  const Eigen::VectorXd preds = a.prediction;
  for (std::size_t id : a.instances) {
    const auto f = force_plot_data(a, preds, id);
    ASSERT_TRUE(f.tolerance.has_value());
    EXPECT_LE(std::abs(f.balance_error()), 1e-8);
    EXPECT_TRUE(f.balanced());
    EXPECT_EQ(f.positive.size() + f.negative.size(), 88u);
    for (std::size_t i = 1; i < f.positive.size(); ++i) EXPECT_GE(std::abs(f.positive[i - 1].phi), std::abs(f.positive[i].phi));
  }
}

TEST(ForcePlot, ZeroRowPredictsBase) {
  auto a = matrix(2, 4);
  a.values.row(1).setZero();
  a.prediction(1) = a.base_value(1);
  const auto f = force_plot_data(a, a.prediction, a.instances[1]);
  EXPECT_EQ(f.prediction, f.base_value);
  EXPECT_EQ(f.contribution_sum(), 0.0);
  EXPECT_TRUE(f.balanced());
}

TEST(ForcePlot, UnbalancedIsFlagged) {
  auto a = matrix(1, 5, "deeplift");
  a.prediction(0) += 1.0;
  EXPECT_FALSE(force_plot_data(a, a.prediction, a.instances[0]).balanced());
}

TEST(ForcePlot, ToleranceByMethod) {
  EXPECT_TRUE(conservation_tolerance("kernel_shap", 0.0, 1.0).has_value());
  EXPECT_TRUE(conservation_tolerance("deeplift", 0.0, 1.0).has_value());
  EXPECT_FALSE(conservation_tolerance("lime", 0.0, 1.0).has_value());
  EXPECT_FALSE(conservation_tolerance("lrp", 0.0, 1.0).has_value());
}

TEST(ForcePlot, MissingInstanceThrows) {
  const auto a = matrix(3, 6);
  EXPECT_THROW(force_plot_data(a, a.prediction, 99), InvalidParameter);
}

TEST(ForcePlot, JsonCarriesFields) {
  const auto a = matrix(2, 7);
  const auto j = to_json(force_plot_data(a, a.prediction, 0));
  for (const char* k : {"instance", "base_value", "prediction", "positive", "negative", "method"})
    EXPECT_TRUE(j.contains(k)) << k;
}

TEST(ClusterExport, OrderedByInstance) {
  test::TempDir dir("cluster");
  const auto a = matrix(5, 8);
  write_cluster_export(a, dir / "c.csv");
  const auto t = csv::read(dir / "c.csv");
  ASSERT_EQ(t.values.rows(), 5);
  EXPECT_EQ(t.values.cols(), 3 + 88);
  EXPECT_EQ(t.header[0], "instance");
  for (Eigen::Index i = 0; i < 5; ++i) {
    EXPECT_EQ(t.values(i, 0), static_cast<double>(i));
    const Eigen::Index src = 4 - i;
    EXPECT_EQ(t.values(i, 1), a.base_value(src));
    EXPECT_EQ(t.values(i, 3), a.values(src, 0));
  }
}

TEST(SummaryTable, TopK) {
  std::mt19937_64 rng(9);
  std::vector<MatrixXd> grids;
  for (int p = 0; p < 5; ++p) grids.push_back(test::random_matrix(8, 11, rng).cwiseAbs());
  const auto rows = summary_table(grids, 20);
  EXPECT_EQ(rows.size(), 100u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i % 20 != 0) {
      EXPECT_GE(rows[i - 1].importance, rows[i].importance);
      EXPECT_EQ(rows[i].parameter, rows[i - 1].parameter);
    }
    EXPECT_EQ(rows[i].rank, i % 20 + 1);
  }
  EXPECT_EQ(summary_table(grids, 500).size(), 5u * 88);
  EXPECT_THROW(summary_table(grids, 0), InvalidParameter);
}

TEST(SummaryTable, SingleNonzeroFirst) {
  MatrixXd g = MatrixXd::Zero(8, 11);
  g(6, 9) = 0.3;
  const std::vector<MatrixXd> grids{g};
  const auto rows = summary_table(grids, 3);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].flat, 6u * 11 + 9);
  EXPECT_DOUBLE_EQ(rows[0].maturity, 1.8);
  EXPECT_DOUBLE_EQ(rows[0].strike, 1.4);
  EXPECT_EQ(rows[1].flat, 0u);
}

TEST(SummaryTable, Files) {
  test::TempDir dir("summary");
  const std::vector<MatrixXd> grids{MatrixXd::Ones(8, 11)};
  write_summary_table(summary_table(grids, 4), {"v0"}, dir / "top");
  EXPECT_TRUE(std::filesystem::exists(dir / "top.csv"));
  const auto j = nlohmann::json::parse(test::slurp(dir / "top.json"));
  EXPECT_EQ(j.at("schema_version"), kReportSchema);
}
