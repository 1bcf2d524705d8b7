#include <Eigen/SVD>

#include "oracles.hpp"

namespace oracle {

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& c) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeFullU);
  const Eigen::VectorXd s = svd.singularValues().cwiseSqrt().cwiseInverse();
  return svd.matrixU() * s.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace oracle
