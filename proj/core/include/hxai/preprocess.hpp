#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>

namespace hxai::datagen {

enum class PreprocessKind { minmax, minmax_zca, standardize };

std::string_view to_string(PreprocessKind k);
PreprocessKind parse_preprocess_kind(std::string_view s);

inline constexpr double kEigenFloor = 1e-10;

/// Affine feature map y = (x - shift) * A fitted on training rows only.
/// minmax scales each column to [0, 1]; minmax_zca then centres and applies
/// W = C^(-1/2) of the scaled training covariance; standardize centres and
/// divides by the sample standard deviation.
class Preprocessor {
 public:
  Preprocessor() = default;

  /// With ZCA, covariance eigenvalues below `eigen_floor` are raised to the
  /// floor before the inverse square root; the output covariance is then the
  /// identity only on the eigenvectors above the floor. Throws
  /// PreprocessingError for constant columns or a covariance with no
  /// eigenvalue above the floor; the exception carries the rank deficiency.
  static Preprocessor fit(const Eigen::MatrixXd& train, PreprocessKind kind,
                          double eigen_floor = kEigenFloor);

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd inverse(const Eigen::MatrixXd& y) const;

  PreprocessKind kind() const noexcept { return kind_; }
  Eigen::Index dim() const noexcept { return shift_.size(); }

  const Eigen::RowVectorXd& column_min() const noexcept { return min_; }
  const Eigen::RowVectorXd& column_max() const noexcept { return max_; }
  const Eigen::RowVectorXd& column_mean() const noexcept { return mean_; }
  const Eigen::RowVectorXd& column_std() const noexcept { return std_; }
  /// ZCA matrix on min-max scaled features (empty unless minmax_zca).
  const Eigen::MatrixXd& whitening() const noexcept { return whitening_; }
  /// Covariance eigenvalues of the scaled training data, ascending (ZCA only).
  const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
  /// Number of eigenvalues that were raised to the floor.
  std::size_t floored_eigenvalues() const noexcept { return floored_; }

  nlohmann::json to_json() const;
  static Preprocessor from_json(const nlohmann::json& j);

 private:
  void finalize();

  PreprocessKind kind_ = PreprocessKind::minmax;
  Eigen::RowVectorXd min_, max_, mean_, std_;
  Eigen::MatrixXd whitening_, whitening_inv_;
  Eigen::VectorXd eigenvalues_;
  double eigen_floor_ = kEigenFloor;
  std::size_t floored_ = 0;

  Eigen::RowVectorXd shift_;
  Eigen::MatrixXd forward_, backward_;
};

}  // namespace hxai::datagen
