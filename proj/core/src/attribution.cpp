#include <fstream>

#include "hxai/attrib.hpp"
#include "hxai/csv.hpp"
#include "hxai/datagen.hpp"
#include "hxai/errors.hpp"

namespace hxai::attrib {

using Eigen::Index;
using Eigen::MatrixXd;
using nlohmann::json;

std::string_view to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::zeros: return "zeros";
    case BaselineKind::train_mean: return "train_mean";
    case BaselineKind::custom: return "custom";
  }
  return "?";
}

BaselineKind parse_baseline_kind(std::string_view s) {
  if (s == "zeros") return BaselineKind::zeros;
  if (s == "train_mean") return BaselineKind::train_mean;
  if (s == "custom") return BaselineKind::custom;
  throw InvalidParameter("unknown baseline '" + std::string(s) + "' (zeros, train_mean, custom)");
}

BaselineSpec BaselineSpec::zeros(Index n) { return {BaselineKind::zeros, Eigen::RowVectorXd::Zero(n)}; }

BaselineSpec BaselineSpec::train_mean(const MatrixXd& train) {
  if (train.rows() == 0) throw InvalidParameter("train_mean baseline of an empty matrix");
  return {BaselineKind::train_mean, train.colwise().mean()};
}

BaselineSpec BaselineSpec::custom(Eigen::RowVectorXd v) { return {BaselineKind::custom, std::move(v)}; }

MatrixXd AttributionMatrix::instance_grid(std::size_t row) const {
  if (row >= static_cast<std::size_t>(values.rows())) throw InvalidParameter("instance row out of range");
  if (static_cast<std::size_t>(values.cols()) != grid.size()) throw DimensionError("attribution width != grid size");
  const auto nt = static_cast<Index>(grid.n_maturities());
  const auto nk = static_cast<Index>(grid.n_strikes());
  MatrixXd g(nt, nk);
  for (Index i = 0; i < nt; ++i) g.row(i) = values.row(static_cast<Index>(row)).segment(i * nk, nk);
  return g;
}

MatrixXd aggregate_importance(const AttributionMatrix& a) {
  if (a.values.rows() == 0) throw InvalidParameter("no attributions to aggregate");
  AttributionMatrix mean = a;
  mean.values = a.values.cwiseAbs().colwise().mean();
  return mean.instance_grid(0);
}

MatrixXd overall_importance(std::span<const MatrixXd> grids) {
  if (grids.empty()) throw InvalidParameter("no importance grids to combine");
  MatrixXd total = grids.front();
  for (std::size_t k = 1; k < grids.size(); ++k) {
    if (grids[k].rows() != total.rows() || grids[k].cols() != total.cols())
      throw DimensionError("importance grids differ in shape");
    total += grids[k];
  }
  return total;
}

namespace {

std::vector<double> as_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd as_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

std::string output_name(int index) {
  if (index == kSumOutputs) return "sum";
  return std::string(heston::HestonParams::kNames.at(static_cast<std::size_t>(index)));
}

}  // namespace

void save_attribution(const AttributionMatrix& a, const std::filesystem::path& stem) {
  if (static_cast<std::size_t>(a.values.cols()) != a.grid.size())
    throw DimensionError("attribution width != grid size");
  const auto n = static_cast<std::size_t>(a.values.rows());
  if (a.instances.size() != n || static_cast<std::size_t>(a.base_value.size()) != n ||
      static_cast<std::size_t>(a.prediction.size()) != n)
    throw DimensionError("attribution metadata length != instance count");
  auto csv_path = stem;
  csv_path += ".csv";
  csv::write(csv_path, datagen::feature_names(a.grid), a.values);

  json meta{
      {"schema_version", kAttributionSchema},
      {"kind", "attribution"},
      {"method", a.method},
      {"baseline",
       {{"kind", std::string(to_string(a.baseline.kind))},
        {"values", std::vector<double>(a.baseline.values.data(), a.baseline.values.data() + a.baseline.values.size())}}},
      {"seed", a.seed},
      {"output_index", a.output_index},
      {"output", output_name(a.output_index)},
      {"grid", {{"maturities", a.grid.maturities()}, {"strikes", a.grid.strikes()}}},
      {"instances", a.instances},
      {"base_value", as_vector(a.base_value)},
      {"prediction", as_vector(a.prediction)},
      {"parameters", a.parameters},
  };
  auto json_path = stem;
  json_path += ".json";
  std::ofstream out(json_path);
  if (!out) throw Error("cannot write " + json_path.string());
  out << meta.dump(2) << '\n';
}

AttributionMatrix load_attribution(const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  std::ifstream in(json_path);
  if (!in) throw SchemaError("cannot open " + json_path.string());
  AttributionMatrix a;
  try {
    const json meta = json::parse(in);
    if (meta.at("kind") != "attribution") throw SchemaError(json_path.string() + " is not an attribution file");
    if (meta.at("schema_version").get<int>() != kAttributionSchema)
      throw SchemaError("unsupported attribution schema in " + json_path.string());
    a.method = meta.at("method").get<std::string>();
    a.baseline.kind = parse_baseline_kind(meta.at("baseline").at("kind").get<std::string>());
    a.baseline.values = as_eigen(meta.at("baseline").at("values").get<std::vector<double>>()).transpose();
    a.seed = meta.at("seed").get<std::uint64_t>();
    a.output_index = meta.at("output_index").get<int>();
    a.grid = Grid(meta.at("grid").at("maturities").get<std::vector<double>>(),
                  meta.at("grid").at("strikes").get<std::vector<double>>());
    a.instances = meta.at("instances").get<std::vector<std::size_t>>();
    a.base_value = as_eigen(meta.at("base_value").get<std::vector<double>>());
    a.prediction = as_eigen(meta.at("prediction").get<std::vector<double>>());
    a.parameters = meta.value("parameters", json::object());
  } catch (const json::exception& e) {
    throw SchemaError("malformed " + json_path.string() + ": " + e.what());
  }
  auto csv_path = stem;
  csv_path += ".csv";
  auto table = csv::read(csv_path);
  if (table.header != datagen::feature_names(a.grid)) throw SchemaError(csv_path.string() + " header does not match the grid");
  a.values = std::move(table.values);
  if (a.instances.size() != static_cast<std::size_t>(a.values.rows()))
    throw SchemaError("attribution row count does not match its metadata");
  return a;
}

}  // namespace hxai::attrib
