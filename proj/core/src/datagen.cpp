#include "hxai/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "hxai/csv.hpp"
#include "hxai/errors.hpp"
#include "hxai/parallel.hpp"
#include "hxai/rng.hpp"

namespace hxai::datagen {
namespace {

using heston::HestonParams;

std::string params_text(const HestonParams& p) {
  const auto a = p.to_array();
  std::string s = "(";
  for (std::size_t i = 0; i < a.size(); ++i)
    s += std::string(i ? ", " : "") + std::string(HestonParams::kNames[i]) + "=" + csv::format_double(a[i]);
  return s + ")";
}

nlohmann::json grid_json(const Grid& g) {
  return {{"maturities", g.maturities()}, {"strikes", g.strikes()}};
}

}  // namespace

bool ParamBounds::contains(const HestonParams& p) const {
  const auto a = p.to_array();
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!range[i].contains(a[i])) return false;
  return true;
}

ParamBounds ParamBounds::standard() {
  return ParamBounds{{Interval{0.0001, 0.04}, Interval{-0.95, -0.1}, Interval{0.01, 1.0},
                      Interval{0.01, 0.2}, Interval{1.0, 10.0}}};
}

Rng row_stream(std::uint64_t seed, std::uint64_t index) { return make_stream(seed, index); }

Draw sample_params(Rng& rng, const ParamBounds& bounds, std::uint64_t max_attempts) {
  for (std::size_t i = 0; i < bounds.range.size(); ++i)
    if (!(bounds[i].hi >= bounds[i].lo))
      throw InvalidParameter("empty sampling interval for " + std::string(HestonParams::kNames[i]));
  for (std::uint64_t attempt = 1; attempt <= max_attempts; ++attempt) {
    std::array<double, HestonParams::kCount> a{};
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = bounds[i].lo + bounds[i].width() * uniform01(rng);
    const auto p = HestonParams::from_array(a);
    if (heston::feller_satisfied(p)) return {p, attempt};
  }
  throw SamplingExhausted("no Feller-valid draw in " + std::to_string(max_attempts) + " attempts");
}

HestonParams Dataset::params(std::size_t row) const {
  const Eigen::VectorXd r = labels.row(static_cast<Eigen::Index>(row)).transpose();
  return HestonParams::from_array(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())));
}

Dataset build_dataset(std::size_t n, std::uint64_t seed, const BuildOptions& options) {
  std::vector<HestonParams> rows(n);
  std::vector<std::uint64_t> attempts(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = row_stream(seed, i);
    const auto d = sample_params(rng, options.bounds);
    rows[i] = d.params;
    attempts[i] = d.attempts;
  }
  Dataset out = build_dataset(rows, options.grid, options.workers);
  out.seed = seed;
  out.sampling_attempts = std::accumulate(attempts.begin(), attempts.end(), std::uint64_t{0});
  return out;
}

Dataset build_dataset(std::span<const HestonParams> rows, const Grid& grid, unsigned workers) {
  Dataset out;
  out.grid = grid;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = static_cast<Eigen::Index>(grid.size());
  out.features.resize(n, m);
  out.labels.resize(n, static_cast<Eigen::Index>(HestonParams::kCount));
  out.sampling_attempts = rows.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto a = rows[static_cast<std::size_t>(i)].to_array();
    for (std::size_t j = 0; j < a.size(); ++j) out.labels(i, static_cast<Eigen::Index>(j)) = a[j];
  }
  parallel_for(rows.size(), workers, [&](std::size_t i) {
    heston::Surface s;
    try {
      s = heston::surface(rows[i], grid);
    } catch (const SurfaceError& e) {
      throw SurfaceError("row " + std::to_string(i) + " " + params_text(rows[i]) + ": " + e.what(),
                         e.maturity_index(), e.strike_index());
    } catch (const Error& e) {
      throw NumericalFailure("row " + std::to_string(i) + " " + params_text(rows[i]) + ": " + e.what());
    }
    for (Eigen::Index j = 0; j < m; ++j)
      out.features(static_cast<Eigen::Index>(i), j) = s.values[static_cast<std::size_t>(j)];
  });
  return out;
}

Dataset select_rows(const Dataset& data, std::span<const std::size_t> rows) {
  Dataset out;
  out.grid = data.grid;
  out.seed = data.seed;
  out.sampling_attempts = 0;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), data.features.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()), data.labels.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= data.size()) throw DimensionError("row index " + std::to_string(rows[i]) + " out of range");
    out.features.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.row(static_cast<Eigen::Index>(i)) = data.labels.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

Split split(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidParameter("train fraction must lie in (0, 1)");
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = row_stream(seed, ~std::uint64_t{0});
  shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction));
  Split s;
  s.train_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  s.train = select_rows(data, s.train_rows);
  s.test = select_rows(data, s.test_rows);
  return s;
}

std::vector<std::string> label_names() {
  return {HestonParams::kNames.begin(), HestonParams::kNames.end()};
}

std::vector<std::string> feature_names(const Grid& grid) {
  std::vector<std::string> out;
  out.reserve(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) out.push_back(grid.column_name(k));
  return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir, const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  csv::write(dir / "features.csv", feature_names(data.grid), data.features);
  csv::write(dir / "labels.csv", label_names(), data.labels);
  nlohmann::json m = {
      {"schema_version", kSchemaVersion},
      {"kind", "dataset"},
      {"seed", data.seed},
      {"rows", data.size()},
      {"features", data.grid.size()},
      {"grid", grid_json(data.grid)},
      {"sampling_attempts", data.sampling_attempts},
      {"feller_accepted", data.size()},
      {"feller_rejected", data.sampling_attempts >= data.size() ? data.sampling_attempts - data.size() : 0},
  };
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  os << m.dump(2) << '\n';
  if (!os) throw Error("cannot write " + (dir / "manifest.json").string());
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw Error("cannot open " + (dir / "manifest.json").string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("corrupt manifest: " + std::string(e.what()));
  }
  if (!m.contains("schema_version") || m["schema_version"] != kSchemaVersion)
    throw SchemaError("manifest schema_version missing or unsupported");
  return m;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto m = read_manifest(dir);
  Dataset d;
  try {
    d.grid = Grid(m.at("grid").at("maturities").get<std::vector<double>>(),
                  m.at("grid").at("strikes").get<std::vector<double>>());
    d.seed = m.at("seed").get<std::uint64_t>();
    d.sampling_attempts = m.at("sampling_attempts").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("manifest: " + std::string(e.what()));
  }
  auto f = csv::read(dir / "features.csv");
  auto l = csv::read(dir / "labels.csv");
  if (f.header != feature_names(d.grid)) throw SchemaError("features.csv header does not match the grid");
  if (l.header != label_names()) throw SchemaError("labels.csv header must be v0,rho,sigma,theta,kappa");
  if (f.values.rows() != l.values.rows()) throw SchemaError("features and labels row counts differ");
  d.features = std::move(f.values);
  d.labels = std::move(l.values);
  return d;
}

}  // namespace hxai::datagen
