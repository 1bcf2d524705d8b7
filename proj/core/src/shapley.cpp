#include <Eigen/Cholesky>
#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "hxai/attrib.hpp"
#include "hxai/errors.hpp"
#include "hxai/rng.hpp"

namespace hxai::attrib {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

constexpr Index kChunkRows = 4096;

/// Model outputs with an extra column holding their row sum.
MatrixXd with_sum(const MatrixXd& out) {
  MatrixXd t(out.rows(), out.cols() + 1);
  t.leftCols(out.cols()) = out;
  t.col(out.cols()) = out.rowwise().sum();
  return t;
}

MatrixXd evaluate_targets(const Predictor& f, const MatrixXd& rows) {
  if (rows.rows() <= kChunkRows) return with_sum(f(rows));
  MatrixXd out;
  for (Index start = 0; start < rows.rows(); start += kChunkRows) {
    const Index n = std::min(kChunkRows, rows.rows() - start);
    const MatrixXd part = with_sum(f(rows.middleRows(start, n)));
    if (out.size() == 0) out.resize(rows.rows(), part.cols());
    out.middleRows(start, n) = part;
  }
  return out;
}

void check_pair(const RowVectorXd& x, const RowVectorXd& baseline) {
  if (x.size() != baseline.size())
    throw DimensionError("instance has " + std::to_string(x.size()) + " features, baseline " +
                         std::to_string(baseline.size()));
}

double log_binomial(double n, double k) { return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1); }

}  // namespace

Predictor predictor(const nnet::Model& model) {
  return [&model](const MatrixXd& x) { return model.predict(x); };
}

VectorXd select_output(const MatrixXd& outputs, int output_index) {
  if (output_index == kSumOutputs) return outputs.rowwise().sum();
  if (output_index < 0 || output_index >= outputs.cols())
    throw InvalidParameter("output index " + std::to_string(output_index) + " out of range");
  return outputs.col(output_index);
}

Index Explanation::target_column(int output_index) const {
  const Index k = phi.cols() - 1;
  if (output_index == kSumOutputs) return k;
  if (output_index < 0 || output_index >= k)
    throw InvalidParameter("output index " + std::to_string(output_index) + " out of range");
  return output_index;
}

// ---- exact ----

Explanation exact_shapley_all(const Predictor& f, const RowVectorXd& x, const RowVectorXd& baseline,
                              std::span<const Index> players_in) {
  check_pair(x, baseline);
  std::vector<Index> players(players_in.begin(), players_in.end());
  if (players.empty()) {
    players.resize(static_cast<std::size_t>(x.size()));
    std::iota(players.begin(), players.end(), Index{0});
  }
  const std::size_t m = players.size();
  if (m > kMaxExactPlayers)
    throw InvalidParameter("exact Shapley enumerates 2^M coalitions; M = " + std::to_string(m) +
                           " exceeds the limit of " + std::to_string(kMaxExactPlayers));
  for (auto p : players)
    if (p < 0 || p >= x.size()) throw InvalidParameter("player index out of range");

  const Index n_coalitions = Index{1} << m;
  MatrixXd rows(n_coalitions, x.size());
  for (Index s = 0; s < n_coalitions; ++s) {
    rows.row(s) = baseline;
    for (std::size_t i = 0; i < m; ++i)
      if (s & (Index{1} << i)) rows(s, players[i]) = x(players[i]);
  }
  const MatrixXd v = evaluate_targets(f, rows);

  // weight(|S|) = |S|! (M - |S| - 1)! / M!
  std::vector<double> weight(m);
  for (std::size_t s = 0; s < m; ++s)
    weight[s] = std::exp(-std::log(static_cast<double>(m)) - log_binomial(static_cast<double>(m - 1), static_cast<double>(s)));

  Explanation e;
  e.phi = MatrixXd::Zero(x.size(), v.cols());
  for (Index s = 0; s < n_coalitions; ++s) {
    const auto size = static_cast<std::size_t>(std::popcount(static_cast<std::uint64_t>(s)));
    for (std::size_t i = 0; i < m; ++i) {
      const Index bit = Index{1} << i;
      if (s & bit) continue;
      e.phi.row(players[i]) += weight[size] * (v.row(s | bit) - v.row(s));
    }
  }
  e.base = v.row(0);
  e.prediction = v.row(n_coalitions - 1);
  return e;
}

VectorXd exact_shapley(const Predictor& f, const RowVectorXd& x, const RowVectorXd& baseline, int output_index,
                       std::span<const Index> players) {
  return exact_shapley_all(f, x, baseline, players).column(output_index);
}

// ---- permutation sampling ----

Explanation sampled_shapley_all(const Predictor& f, const RowVectorXd& x, const RowVectorXd& baseline,
                                std::size_t n_permutations, std::uint64_t seed) {
  check_pair(x, baseline);
  if (n_permutations < 1) throw InvalidParameter("need at least one permutation");
  const Index m = x.size();
  const auto per_batch = static_cast<std::size_t>(std::max<Index>(1, kChunkRows / (m + 1)));

  MatrixXd mean, m2;  // Welford accumulators, features x targets
  std::size_t done = 0;
  std::vector<Index> order(static_cast<std::size_t>(m));
  while (done < n_permutations) {
    const std::size_t count = std::min(per_batch, n_permutations - done);
    MatrixXd rows(static_cast<Index>(count) * (m + 1), m);
    std::vector<std::vector<Index>> orders(count);
    for (std::size_t p = 0; p < count; ++p) {
      std::iota(order.begin(), order.end(), Index{0});
      auto rng = make_stream(seed, done + p);
      shuffle(order.begin(), order.end(), rng);
      orders[p] = order;
      const Index base = static_cast<Index>(p) * (m + 1);
      rows.row(base) = baseline;
      for (Index k = 0; k < m; ++k) {
        rows.row(base + k + 1) = rows.row(base + k);
        rows(base + k + 1, order[static_cast<std::size_t>(k)]) = x(order[static_cast<std::size_t>(k)]);
      }
    }
    const MatrixXd v = evaluate_targets(f, rows);
    if (mean.size() == 0) {
      mean = MatrixXd::Zero(m, v.cols());
      m2 = MatrixXd::Zero(m, v.cols());
    }
    for (std::size_t p = 0; p < count; ++p) {
      const Index base = static_cast<Index>(p) * (m + 1);
      const double n = static_cast<double>(done + p + 1);
      for (Index k = 0; k < m; ++k) {
        const Index feature = orders[p][static_cast<std::size_t>(k)];
        const RowVectorXd c = v.row(base + k + 1) - v.row(base + k);
        const RowVectorXd delta = c - mean.row(feature);
        mean.row(feature) += delta / n;
        m2.row(feature) += delta.cwiseProduct(c - mean.row(feature));
      }
    }
    done += count;
  }
  Explanation e;
  e.phi = mean;
  const double n = static_cast<double>(n_permutations);
  if (n_permutations > 1)
    e.std_error = (m2 / (n - 1.0) / n).cwiseSqrt();
  else
    e.std_error = MatrixXd::Constant(m, mean.cols(), std::numeric_limits<double>::quiet_NaN());
  MatrixXd ends(2, m);
  ends.row(0) = baseline;
  ends.row(1) = x;
  const MatrixXd fe = evaluate_targets(f, ends);
  e.base = fe.row(0);
  e.prediction = fe.row(1);
  return e;
}

ShapleyEstimate sampled_shapley(const Predictor& f, const RowVectorXd& x, const RowVectorXd& baseline,
                                std::size_t n_permutations, std::uint64_t seed, int output_index) {
  const auto e = sampled_shapley_all(f, x, baseline, n_permutations, seed);
  const Index c = e.target_column(output_index);
  return {e.phi.col(c), e.std_error.col(c)};
}

// ---- Kernel SHAP ----

namespace {

struct CoalitionSet {
  std::vector<std::vector<std::uint8_t>> masks;
  std::vector<double> weights;
  std::map<std::vector<std::uint8_t>, std::size_t> index;

  void add(const std::vector<std::uint8_t>& mask, double w) {
    auto [it, inserted] = index.try_emplace(mask, masks.size());
    if (inserted) {
      masks.push_back(mask);
      weights.push_back(w);
    } else {
      weights[it->second] += w;
    }
  }
};

std::vector<std::uint8_t> complement(const std::vector<std::uint8_t>& mask) {
  std::vector<std::uint8_t> c(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) c[i] = mask[i] ? 0 : 1;
  return c;
}

/// Calls fn(mask) for every subset of size s of m players.
template <class Fn>
void for_each_subset(std::size_t m, std::size_t s, Fn&& fn) {
  std::vector<std::uint8_t> mask(m, 0);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(s), 1);
  do {
    fn(mask);
  } while (std::prev_permutation(mask.begin(), mask.end()));
}

CoalitionSet plan_coalitions(std::size_t m, std::size_t budget, std::uint64_t seed) {
  CoalitionSet set;
  const double md = static_cast<double>(m);
  auto kernel = [&](std::size_t s) {  // per-coalition Shapley kernel weight
    const double sd = static_cast<double>(s);
    return std::exp(std::log(md - 1.0) - log_binomial(md, sd) - std::log(sd) - std::log(md - sd));
  };

  const bool full = m < 63 && static_cast<double>(budget) >= std::ldexp(1.0, static_cast<int>(m)) - 2.0;
  const std::size_t n_sizes = (m - 1 + 1) / 2;  // sizes 1..ceil((M-1)/2), paired with M - s
  std::vector<double> group(n_sizes + 1, 0.0);  // kernel mass of each size pair
  for (std::size_t s = 1; s <= n_sizes; ++s) {
    const bool paired = s != m - s;
    group[s] = (md - 1.0) / (static_cast<double>(s) * (md - static_cast<double>(s))) * (paired ? 2.0 : 1.0);
  }

  std::size_t left = budget;
  std::size_t s = 1;
  for (; s <= n_sizes; ++s) {
    const bool paired = s != m - s;
    const double count = std::exp(log_binomial(md, static_cast<double>(s))) * (paired ? 2.0 : 1.0);
    if (!full && s > 1) {
      const double remaining = std::accumulate(group.begin() + static_cast<std::ptrdiff_t>(s), group.end(), 0.0);
      if (static_cast<double>(left) * group[s] / remaining < count - 1e-8) break;
    }
    const double w = kernel(s);
    for_each_subset(m, s, [&](const std::vector<std::uint8_t>& mask) {
      set.add(mask, w);
      if (paired) set.add(complement(mask), w);
    });
    left = left > static_cast<std::size_t>(count) ? left - static_cast<std::size_t>(count) : 0;
  }
  if (s > n_sizes || left == 0) return set;

  // Sample the remaining size strata in proportion to their kernel mass.
  const double remaining = std::accumulate(group.begin() + static_cast<std::ptrdiff_t>(s), group.end(), 0.0);
  std::vector<double> cdf;
  for (std::size_t k = s; k <= n_sizes; ++k) cdf.push_back((cdf.empty() ? 0.0 : cdf.back()) + group[k] / remaining);
  auto rng = make_stream(seed, 0);
  std::vector<std::size_t> perm(m);
  std::vector<std::vector<std::uint8_t>> drawn;
  std::size_t draws = 0;
  while (draws < left) {
    const double u = uniform01(rng);
    std::size_t k = 0;
    while (k + 1 < cdf.size() && u >= cdf[k]) ++k;
    const std::size_t size = s + k;
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<std::uint8_t> mask(m, 0);
    for (std::size_t i = 0; i < size; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_index(rng, m - i));
      std::swap(perm[i], perm[j]);
      mask[perm[i]] = 1;
    }
    drawn.push_back(mask);
    ++draws;
    if (size != m - size) {
      drawn.push_back(complement(mask));
      ++draws;
    }
  }
  const double w = remaining / static_cast<double>(drawn.size());
  for (const auto& mask : drawn) set.add(mask, w);
  return set;
}

}  // namespace

Explanation kernel_shap_all(const Predictor& f, const RowVectorXd& x, const MatrixXd& background,
                            std::size_t n_coalitions, std::uint64_t seed) {
  if (background.rows() < 1) throw InvalidParameter("kernel SHAP needs a non-empty background set");
  if (background.cols() != x.size())
    throw DimensionError("background has " + std::to_string(background.cols()) + " features, instance " +
                         std::to_string(x.size()));
  const RowVectorXd fill = background.colwise().mean();

  MatrixXd ends(1, x.size());
  ends.row(0) = x;
  const RowVectorXd fx = evaluate_targets(f, ends).row(0);
  const RowVectorXd phi0 = evaluate_targets(f, background).colwise().mean();
  const Index targets = fx.size();

  // Features equal to every background value cannot change the prediction.
  std::vector<Index> varying;
  for (Index j = 0; j < x.size(); ++j)
    if ((background.col(j).array() != x(j)).any()) varying.push_back(j);

  Explanation e;
  e.phi = MatrixXd::Zero(x.size(), targets);
  e.base = phi0;
  e.prediction = fx;
  const RowVectorXd delta = fx - phi0;
  const std::size_t m = varying.size();
  if (m == 0) return e;
  if (m == 1) {
    e.phi.row(varying[0]) = delta;
    return e;
  }

  const auto plan = plan_coalitions(m, n_coalitions, seed);
  const auto n = static_cast<Index>(plan.masks.size());
  MatrixXd rows(n, x.size());
  MatrixXd z(n, static_cast<Index>(m));
  for (Index k = 0; k < n; ++k) {
    rows.row(k) = fill;
    for (std::size_t i = 0; i < m; ++i) {
      const bool on = plan.masks[static_cast<std::size_t>(k)][i] != 0;
      z(k, static_cast<Index>(i)) = on ? 1.0 : 0.0;
      if (on) rows(k, varying[i]) = x(varying[i]);
    }
  }
  const MatrixXd v = evaluate_targets(f, rows);
  const VectorXd w = Eigen::Map<const VectorXd>(plan.weights.data(), n);

  // Eliminate the last player through sum(phi) = delta.
  const Index last = static_cast<Index>(m) - 1;
  const MatrixXd a = z.leftCols(last).colwise() - z.col(last);
  const MatrixXd b = (v.rowwise() - phi0) - z.col(last) * delta;
  const MatrixXd aw = a.transpose() * w.asDiagonal();
  MatrixXd normal = aw * a;
  const MatrixXd rhs = aw * b;

  Eigen::LDLT<MatrixXd> ldlt(normal);
  MatrixXd beta;
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.rcond() > 1e-12) {
    beta = ldlt.solve(rhs);
  } else {
    e.regularized = true;
    const double lambda = 1e-8 * std::max(normal.trace() / static_cast<double>(last), 1e-300);
    normal.diagonal().array() += lambda;
    beta = Eigen::LDLT<MatrixXd>(normal).solve(rhs);
  }
  for (Index i = 0; i < last; ++i) e.phi.row(varying[static_cast<std::size_t>(i)]) = beta.row(i);
  e.phi.row(varying[static_cast<std::size_t>(last)]) = delta - beta.colwise().sum();
  return e;
}

VectorXd kernel_shap(const Predictor& f, const RowVectorXd& x, const MatrixXd& background, std::size_t n_coalitions,
                     std::uint64_t seed, int output_index) {
  return kernel_shap_all(f, x, background, n_coalitions, seed).column(output_index);
}

}  // namespace hxai::attrib
