#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "oracles.hpp"

namespace oracle {

Eigen::MatrixXd permutation_shapley(const Function& f, const Eigen::RowVectorXd& x,
                                    const Eigen::RowVectorXd& baseline) {
  const auto m = x.size();
  if (m > 9) throw std::invalid_argument("permutation_shapley: too many features");

  // Value of every coalition, indexed by bit mask.
  const Eigen::Index masks = Eigen::Index{1} << m;
  Eigen::MatrixXd rows = baseline.replicate(masks, 1);
  for (Eigen::Index s = 0; s < masks; ++s)
    for (Eigen::Index i = 0; i < m; ++i)
      if (s & (Eigen::Index{1} << i)) rows(s, i) = x(i);
  const Eigen::MatrixXd value = f(rows);

  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(m, value.cols());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  double count = 0.0;
  do {
    Eigen::Index mask = 0;
    for (Eigen::Index i : order) {
      const Eigen::Index next = mask | (Eigen::Index{1} << i);
      phi.row(i) += value.row(next) - value.row(mask);
      mask = next;
    }
    count += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  return phi / count;
}

}  // namespace oracle
