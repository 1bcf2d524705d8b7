#include <algorithm>

#include "oracles.hpp"

namespace oracle {

Eigen::MatrixXd fd_gradient(const std::function<double()>& f, Eigen::MatrixXd& m, double h) {
  Eigen::MatrixXd g(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double keep = m(i, j);
      m(i, j) = keep + h;
      const double up = f();
      m(i, j) = keep - h;
      const double down = f();
      m(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

}  // namespace oracle
