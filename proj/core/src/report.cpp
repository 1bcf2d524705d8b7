#include "hxai/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "hxai/csv.hpp"
#include "hxai/datagen.hpp"
#include "hxai/errors.hpp"

namespace hxai::report {

using Eigen::Index;
using Eigen::MatrixXd;
using nlohmann::json;

void write_json(const std::filesystem::path& path, json j) {
  j["schema_version"] = kReportSchema;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

namespace {

std::filesystem::path with_suffix(std::filesystem::path stem, const char* suffix) {
  stem += suffix;
  return stem;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  return 0.5 * (*std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)) + upper);
}

std::string output_name(int index) {
  if (index == attrib::kSumOutputs) return "sum";
  return std::string(heston::HestonParams::kNames.at(static_cast<std::size_t>(index)));
}

}  // namespace

// ---- prediction errors ----

ErrorReport error_report(const MatrixXd& relative, std::vector<std::string> parameters, const HistogramSpec& spec) {
  if (parameters.empty()) parameters = datagen::label_names();
  if (static_cast<Index>(parameters.size()) != relative.cols())
    throw DimensionError("error matrix has " + std::to_string(relative.cols()) + " columns for " +
                         std::to_string(parameters.size()) + " parameters");
  if (spec.bins < 1 || !(spec.hi > spec.lo)) throw InvalidParameter("histogram needs bins >= 1 and hi > lo");

  ErrorReport r;
  r.parameters = std::move(parameters);
  r.rows = static_cast<std::size_t>(relative.rows());
  const std::size_t p = r.parameters.size();
  auto& h = r.histogram;
  const double width = (spec.hi - spec.lo) / static_cast<double>(spec.bins);
  for (std::size_t b = 0; b <= spec.bins; ++b) h.edges.push_back(spec.lo + width * static_cast<double>(b));
  h.edges.back() = spec.hi;
  h.counts.assign(p, std::vector<std::size_t>(spec.bins, 0));
  h.underflow.assign(p, 0);
  h.overflow.assign(p, 0);
  h.non_finite.assign(p, 0);

  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> abs_err;
    for (Index i = 0; i < relative.rows(); ++i) {
      const double e = relative(i, static_cast<Index>(j));
      if (!std::isfinite(e)) {
        ++h.non_finite[j];
        continue;
      }
      abs_err.push_back(std::abs(e));
      if (e < spec.lo) {
        ++h.underflow[j];
      } else if (e >= spec.hi) {
        ++h.overflow[j];
      } else {
        auto b = static_cast<std::size_t>(std::floor((e - spec.lo) / width));
        b = std::min(b, spec.bins - 1);
        ++h.counts[j][b];
      }
    }
    const double n = static_cast<double>(abs_err.size());
    const double mean = abs_err.empty() ? std::numeric_limits<double>::quiet_NaN()
                                        : std::accumulate(abs_err.begin(), abs_err.end(), 0.0) / n;
    const double max = abs_err.empty() ? 0.0 : *std::max_element(abs_err.begin(), abs_err.end());
    const double med = median(abs_err);
    r.mean_abs.push_back(mean);
    r.median_abs.push_back(med);
    r.max_abs.push_back(max);
    r.heavy_tail.push_back(!abs_err.empty() && max > 10.0 * med);
  }
  return r;
}

void write_error_report(const ErrorReport& r, const std::filesystem::path& stem) {
  const auto& h = r.histogram;
  const std::size_t bins = h.edges.size() - 1;
  std::vector<std::string> header{"bin_lo", "bin_hi"};
  for (const auto& name : r.parameters) header.push_back(name);
  MatrixXd table(static_cast<Index>(bins + 2), static_cast<Index>(header.size()));
  const double inf = std::numeric_limits<double>::infinity();
  table(0, 0) = -inf;
  table(0, 1) = h.edges.front();
  for (std::size_t b = 0; b < bins; ++b) {
    table(static_cast<Index>(b + 1), 0) = h.edges[b];
    table(static_cast<Index>(b + 1), 1) = h.edges[b + 1];
  }
  table(static_cast<Index>(bins + 1), 0) = h.edges.back();
  table(static_cast<Index>(bins + 1), 1) = inf;
  for (std::size_t j = 0; j < r.parameters.size(); ++j) {
    const auto c = static_cast<Index>(j + 2);
    table(0, c) = static_cast<double>(h.underflow[j]);
    for (std::size_t b = 0; b < bins; ++b) table(static_cast<Index>(b + 1), c) = static_cast<double>(h.counts[j][b]);
    table(static_cast<Index>(bins + 1), c) = static_cast<double>(h.overflow[j]);
  }
  csv::write(with_suffix(stem, "_histogram.csv"), header, table);

  json params = json::array();
  for (std::size_t j = 0; j < r.parameters.size(); ++j)
    params.push_back({{"name", r.parameters[j]},
                      {"mean_abs", r.mean_abs[j]},
                      {"median_abs", r.median_abs[j]},
                      {"max_abs", r.max_abs[j]},
                      {"heavy_tail", static_cast<bool>(r.heavy_tail[j])},
                      {"underflow", h.underflow[j]},
                      {"overflow", h.overflow[j]},
                      {"non_finite", h.non_finite[j]}});
  write_json(with_suffix(stem, "_summary.json"), {{"kind", "error_report"},
                                                  {"rows", r.rows},
                                                  {"bins", bins},
                                                  {"range", {h.edges.front(), h.edges.back()}},
                                                  {"parameters", params}});
}

// ---- heat maps ----

HeatMap make_heatmap(const MatrixXd& grid_values, std::string method, std::string title, bool normalize,
                     const Grid& grid) {
  if (grid_values.rows() != static_cast<Index>(grid.n_maturities()) ||
      grid_values.cols() != static_cast<Index>(grid.n_strikes()))
    throw DimensionError(fmt::format("heat map needs a {}x{} grid, got {}x{}", grid.n_maturities(), grid.n_strikes(),
                                     grid_values.rows(), grid_values.cols()));
  HeatMap h{grid, grid_values, std::move(method), std::move(title), normalize};
  if (normalize) {
    const double max = grid_values.maxCoeff();
    if (max > 0.0) h.values /= max;
  }
  return h;
}

std::size_t argmax_cell(const MatrixXd& g) {
  if (g.size() == 0) throw InvalidParameter("argmax of an empty grid");
  std::size_t best = 0;
  double value = g(0, 0);
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j)
      if (g(i, j) > value) {
        value = g(i, j);
        best = static_cast<std::size_t>(i * g.cols() + j);
      }
  return best;
}

void heatmap_emit(const HeatMap& h, const std::filesystem::path& stem) {
  if (h.values.rows() != static_cast<Index>(h.grid.n_maturities()) ||
      h.values.cols() != static_cast<Index>(h.grid.n_strikes()))
    throw DimensionError("heat map values do not match the grid");
  std::vector<std::string> header{"maturity"};
  for (double k : h.grid.strikes()) header.push_back(csv::format_double(k));
  MatrixXd table(h.values.rows(), h.values.cols() + 1);
  for (Index i = 0; i < h.values.rows(); ++i) table(i, 0) = h.grid.maturities()[static_cast<std::size_t>(i)];
  table.rightCols(h.values.cols()) = h.values;
  csv::write(with_suffix(stem, ".csv"), header, table);

  std::ofstream out(with_suffix(stem, ".svg"));
  if (!out) throw Error("cannot write " + with_suffix(stem, ".svg").string());
  out << heatmap_svg(h);
}

MatrixXd read_heatmap_csv(const std::filesystem::path& path, const Grid& grid) {
  const auto t = csv::read(path);
  if (t.values.rows() != static_cast<Index>(grid.n_maturities()) ||
      t.values.cols() != static_cast<Index>(grid.n_strikes() + 1))
    throw SchemaError(path.string() + " does not hold a maturity x strike grid");
  return t.values.rightCols(t.values.cols() - 1);
}

std::string heatmap_svg(const HeatMap& h) {
  constexpr double cw = 56, ch = 34, left = 78, top = 56, legend_w = 18;
  const auto nt = h.values.rows();
  const auto nk = h.values.cols();
  const double width = left + cw * static_cast<double>(nk) + 110;
  const double height = top + ch * static_cast<double>(nt) + 60;
  const double lo = h.values.minCoeff();
  const double hi = h.values.maxCoeff();
  // Single hue; higher values are lighter.
  auto color = [&](double v) {
    const double t = hi > lo ? (v - lo) / (hi - lo) : 1.0;
    return fmt::format("hsl(215,65%,{:.2f}%)", 12.0 + 80.0 * t);
  };

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:g}\" height=\"{:g}\" font-family=\"sans-serif\" "
      "font-size=\"11\">\n",
      width, height);
  s += fmt::format("<text x=\"{:g}\" y=\"20\" font-size=\"14\">{}</text>\n", left, h.title);
  s += fmt::format("<text x=\"{:g}\" y=\"38\" fill=\"#555\">method: {}{}</text>\n", left, h.method,
                   h.normalized ? " (max-normalized)" : "");
  for (Index i = 0; i < nt; ++i) {
    const double y = top + ch * static_cast<double>(i);
    s += fmt::format("<text x=\"{:g}\" y=\"{:g}\" text-anchor=\"end\">{:g}</text>\n", left - 6, y + ch / 2 + 4,
                     h.grid.maturities()[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < nk; ++j)
      s += fmt::format(
          "<rect x=\"{:g}\" y=\"{:g}\" width=\"{:g}\" height=\"{:g}\" fill=\"{}\" data-flat=\"{}\" "
          "data-value=\"{}\"/>\n",
          left + cw * static_cast<double>(j), y, cw, ch, color(h.values(i, j)), i * nk + j,
          csv::format_double(h.values(i, j)));
  }
  const double bottom = top + ch * static_cast<double>(nt);
  for (Index j = 0; j < nk; ++j)
    s += fmt::format("<text x=\"{:g}\" y=\"{:g}\" text-anchor=\"middle\">{:g}</text>\n",
                     left + cw * (static_cast<double>(j) + 0.5), bottom + 16,
                     h.grid.strikes()[static_cast<std::size_t>(j)]);
  s += fmt::format("<text x=\"{:g}\" y=\"{:g}\" text-anchor=\"middle\">strike K</text>\n",
                   left + cw * static_cast<double>(nk) / 2, bottom + 36);
  s += fmt::format("<text x=\"16\" y=\"{:g}\" transform=\"rotate(-90 16 {:g})\" text-anchor=\"middle\">maturity T"
                   "</text>\n",
                   top + ch * static_cast<double>(nt) / 2, top + ch * static_cast<double>(nt) / 2);

  const std::size_t best = argmax_cell(h.values);
  const auto bi = static_cast<Index>(best) / nk;
  const auto bj = static_cast<Index>(best) % nk;
  s += fmt::format(
      "<rect class=\"argmax\" data-flat=\"{}\" x=\"{:g}\" y=\"{:g}\" width=\"{:g}\" height=\"{:g}\" fill=\"none\" "
      "stroke=\"#d62728\" stroke-width=\"2\"/>\n",
      best, left + cw * static_cast<double>(bj) + 1, top + ch * static_cast<double>(bi) + 1, cw - 2, ch - 2);
  s += fmt::format("<text x=\"{:g}\" y=\"{:g}\" text-anchor=\"middle\" fill=\"#d62728\">max</text>\n",
                   left + cw * (static_cast<double>(bj) + 0.5), top + ch * static_cast<double>(bi) + ch / 2 + 4);

  const double lx = left + cw * static_cast<double>(nk) + 20;
  const double lh = ch * static_cast<double>(nt);
  s += "<defs><linearGradient id=\"scale\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">";
  s += fmt::format("<stop offset=\"0\" stop-color=\"{}\"/><stop offset=\"1\" stop-color=\"{}\"/>", color(lo),
                   color(hi));
  s += "</linearGradient></defs>\n";
  s += fmt::format("<rect class=\"legend\" x=\"{:g}\" y=\"{:g}\" width=\"{:g}\" height=\"{:g}\" fill=\"url(#scale)\"/>\n",
                   lx, top, legend_w, lh);
  if (hi > lo) {
    s += fmt::format("<text class=\"legend-max\" x=\"{:g}\" y=\"{:g}\">{:.4g}</text>\n", lx + legend_w + 4, top + 8, hi);
    s += fmt::format("<text class=\"legend-min\" x=\"{:g}\" y=\"{:g}\">{:.4g}</text>\n", lx + legend_w + 4, top + lh,
                     lo);
  } else {
    s += fmt::format("<text class=\"legend-value\" x=\"{:g}\" y=\"{:g}\">{:.4g}</text>\n", lx + legend_w + 4,
                     top + lh / 2, hi);
  }
  s += "</svg>\n";
  return s;
}

// ---- force plots ----

double ForcePlotData::contribution_sum() const {
  double s = 0.0;
  for (const auto& c : positive) s += c.phi;
  for (const auto& c : negative) s += c.phi;
  return s;
}

bool ForcePlotData::balanced() const { return tolerance && std::abs(balance_error()) <= *tolerance; }

std::optional<double> conservation_tolerance(const std::string& method, double base, double prediction) {
  if (method == "exact_shapley" || method == "kernel_shap" || method == "sampled_shapley")
    return 1e-8 * std::max(1.0, std::abs(prediction));
  if (method == "deeplift") return 1e-6 * std::abs(prediction - base) + 1e-12;
  return std::nullopt;
}

ForcePlotData force_plot_data(const attrib::AttributionMatrix& a, const Eigen::VectorXd& test_predictions,
                              std::size_t instance) {
  const auto it = std::find(a.instances.begin(), a.instances.end(), instance);
  if (it == a.instances.end())
    throw InvalidParameter("instance " + std::to_string(instance) + " has no attribution row");
  const auto row = static_cast<Index>(it - a.instances.begin());

  ForcePlotData f;
  f.instance = instance;
  f.output_index = a.output_index;
  f.output = output_name(a.output_index);
  f.method = a.method;
  f.base_value = a.base_value(row);
  f.prediction = a.prediction(row);
  f.mean_test_prediction = test_predictions.size() > 0 ? test_predictions.mean() : 0.0;
  for (Index j = 0; j < a.values.cols(); ++j) {
    const double phi = a.values(row, j);
    if (phi == 0.0) continue;
    Contribution c{static_cast<std::size_t>(j), a.grid.label(static_cast<std::size_t>(j)), phi};
    (phi > 0.0 ? f.positive : f.negative).push_back(std::move(c));
  }
  auto by_size = [](const Contribution& x, const Contribution& y) {
    if (std::abs(x.phi) != std::abs(y.phi)) return std::abs(x.phi) > std::abs(y.phi);
    return x.feature < y.feature;
  };
  std::sort(f.positive.begin(), f.positive.end(), by_size);
  std::sort(f.negative.begin(), f.negative.end(), by_size);
  f.tolerance = conservation_tolerance(a.method, f.base_value, f.prediction);
  return f;
}

json to_json(const ForcePlotData& f) {
  auto list = [](const std::vector<Contribution>& v) {
    json out = json::array();
    for (const auto& c : v) out.push_back({{"feature", c.feature}, {"label", c.label}, {"phi", c.phi}});
    return out;
  };
  json j{{"kind", "force_plot"},
         {"instance", f.instance},
         {"output_index", f.output_index},
         {"output", f.output},
         {"method", f.method},
         {"base_value", f.base_value},
         {"prediction", f.prediction},
         {"mean_test_prediction", f.mean_test_prediction},
         {"contribution_sum", f.contribution_sum()},
         {"balance_error", f.balance_error()},
         {"positive", list(f.positive)},
         {"negative", list(f.negative)}};
  if (f.tolerance) {
    j["tolerance"] = *f.tolerance;
    j["balanced"] = f.balanced();
  } else {
    j["tolerance"] = nullptr;
  }
  return j;
}

void write_cluster_export(const attrib::AttributionMatrix& a, const std::filesystem::path& path) {
  std::vector<std::size_t> order(a.instances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a.instances[x] < a.instances[y]; });
  std::vector<std::string> header{"instance", "base_value", "prediction"};
  for (const auto& n : datagen::feature_names(a.grid)) header.push_back(n);
  MatrixXd table(static_cast<Index>(order.size()), a.values.cols() + 3);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto src = static_cast<Index>(order[r]);
    const auto dst = static_cast<Index>(r);
    table(dst, 0) = static_cast<double>(a.instances[order[r]]);
    table(dst, 1) = a.base_value(src);
    table(dst, 2) = a.prediction(src);
    table.row(dst).tail(a.values.cols()) = a.values.row(src);
  }
  csv::write(path, header, table);
}

// ---- importance tables ----

std::vector<RankedFeature> summary_table(std::span<const MatrixXd> grids, std::size_t k, const Grid& grid) {
  if (k < 1) throw InvalidParameter("summary table needs k >= 1");
  std::vector<RankedFeature> out;
  for (std::size_t p = 0; p < grids.size(); ++p) {
    const auto& g = grids[p];
    if (static_cast<std::size_t>(g.size()) != grid.size() || g.cols() != static_cast<Index>(grid.n_strikes()))
      throw DimensionError("importance grid does not match the strike/maturity grid");
    std::vector<std::size_t> order(grid.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto value = [&](std::size_t flat) {
      return g(static_cast<Index>(flat) / g.cols(), static_cast<Index>(flat) % g.cols());
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return value(x) > value(y); });
    const std::size_t n = std::min(k, order.size());
    for (std::size_t r = 0; r < n; ++r) {
      const auto pt = grid.point(order[r]);
      out.push_back({p, r + 1, order[r], pt.maturity, pt.strike, grid.label(order[r]), value(order[r])});
    }
  }
  return out;
}

void write_summary_table(const std::vector<RankedFeature>& rows, const std::vector<std::string>& parameters,
                         const std::filesystem::path& stem) {
  MatrixXd table(static_cast<Index>(rows.size()), 6);
  json list = json::array();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& f = rows[r];
    table.row(static_cast<Index>(r)) << static_cast<double>(f.parameter), static_cast<double>(f.rank),
        static_cast<double>(f.flat), f.maturity, f.strike, f.importance;
    list.push_back({{"parameter", f.parameter < parameters.size() ? parameters[f.parameter] : std::to_string(f.parameter)},
                    {"rank", f.rank},
                    {"flat", f.flat},
                    {"label", f.label},
                    {"maturity", f.maturity},
                    {"strike", f.strike},
                    {"importance", f.importance}});
  }
  csv::write(with_suffix(stem, ".csv"), {"parameter", "rank", "flat", "maturity", "strike", "importance"}, table);
  write_json(with_suffix(stem, ".json"), {{"kind", "importance_summary"}, {"parameters", parameters}, {"rows", list}});
}

}  // namespace hxai::report
