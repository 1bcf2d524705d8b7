#include "hxai/preprocess.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "hxai/errors.hpp"

namespace hxai::datagen {
namespace {

nlohmann::json to_json_vec(const Eigen::RowVectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

nlohmann::json to_json_mat(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Eigen::RowVectorXd r = m.row(i);
    rows.push_back(to_json_vec(r));
  }
  return rows;
}

Eigen::RowVectorXd vec_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd mat_from_json(const nlohmann::json& j) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), j.empty() ? 0 : static_cast<Eigen::Index>(j[0].size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto r = vec_from_json(j[static_cast<std::size_t>(i)]);
    if (r.size() != m.cols()) throw SchemaError("ragged matrix in preprocessor state");
    m.row(i) = r;
  }
  return m;
}

void check_constant_columns(const Eigen::RowVectorXd& spread, const char* what) {
  std::size_t bad = 0;
  std::string cols;
  for (Eigen::Index j = 0; j < spread.size(); ++j)
    if (!(spread(j) > 0.0)) {
      ++bad;
      cols += (cols.empty() ? "" : ",") + std::to_string(j);
    }
  if (bad > 0)
    throw PreprocessingError(std::string(what) + ": " + std::to_string(bad) + " constant column(s) [" + cols + "]",
                             bad);
}

}  // namespace

std::string_view to_string(PreprocessKind k) {
  switch (k) {
    case PreprocessKind::minmax: return "minmax";
    case PreprocessKind::minmax_zca: return "minmax_zca";
    case PreprocessKind::standardize: return "standardize";
  }
  return "?";
}

PreprocessKind parse_preprocess_kind(std::string_view s) {
  if (s == "minmax") return PreprocessKind::minmax;
  if (s == "minmax_zca") return PreprocessKind::minmax_zca;
  if (s == "standardize") return PreprocessKind::standardize;
  throw InvalidParameter("unknown preprocessing kind '" + std::string(s) + "'");
}

Preprocessor Preprocessor::fit(const Eigen::MatrixXd& train, PreprocessKind kind, double eigen_floor) {
  if (train.rows() < 2) throw PreprocessingError("need at least 2 training rows", 0);
  if (!train.allFinite()) throw PreprocessingError("non-finite training features", 0);
  Preprocessor p;
  p.kind_ = kind;
  p.eigen_floor_ = eigen_floor;
  const double n = static_cast<double>(train.rows());

  if (kind == PreprocessKind::standardize) {
    p.mean_ = train.colwise().mean();
    const Eigen::MatrixXd c = train.rowwise() - p.mean_;
    p.std_ = (c.colwise().squaredNorm() / (n - 1.0)).cwiseSqrt();
    check_constant_columns(p.std_, "standardize");
  } else {
    p.min_ = train.colwise().minCoeff();
    p.max_ = train.colwise().maxCoeff();
    check_constant_columns(p.max_ - p.min_, "minmax");
    if (kind == PreprocessKind::minmax_zca) {
      const Eigen::RowVectorXd inv_range = (p.max_ - p.min_).cwiseInverse();
      const Eigen::MatrixXd scaled = (train.rowwise() - p.min_) * inv_range.asDiagonal();
      p.mean_ = scaled.colwise().mean();
      const Eigen::MatrixXd c = scaled.rowwise() - p.mean_;
      const Eigen::MatrixXd cov = (c.transpose() * c) / (n - 1.0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
      if (es.info() != Eigen::Success) throw PreprocessingError("covariance eigendecomposition failed", 0);
      p.eigenvalues_ = es.eigenvalues();
      p.floored_ = 0;
      for (Eigen::Index i = 0; i < p.eigenvalues_.size(); ++i)
        if (!(p.eigenvalues_(i) >= eigen_floor)) ++p.floored_;
      if (p.floored_ == static_cast<std::size_t>(p.eigenvalues_.size()))
        throw PreprocessingError("training covariance is singular: all " + std::to_string(p.floored_) +
                                     " eigenvalues below the floor",
                                 p.floored_);
      const Eigen::MatrixXd& u = es.eigenvectors();
      const Eigen::VectorXd s = p.eigenvalues_.cwiseMax(eigen_floor).cwiseSqrt();
      p.whitening_ = u * s.cwiseInverse().asDiagonal() * u.transpose();
      p.whitening_inv_ = u * s.asDiagonal() * u.transpose();
      // Symmetrize away rounding so W is exactly symmetric.
      p.whitening_ = 0.5 * (p.whitening_ + p.whitening_.transpose()).eval();
      p.whitening_inv_ = 0.5 * (p.whitening_inv_ + p.whitening_inv_.transpose()).eval();
    }
  }
  p.finalize();
  return p;
}

void Preprocessor::finalize() {
  switch (kind_) {
    case PreprocessKind::standardize:
      shift_ = mean_;
      forward_ = std_.cwiseInverse().asDiagonal();
      backward_ = std_.asDiagonal();
      break;
    case PreprocessKind::minmax: {
      const Eigen::RowVectorXd range = max_ - min_;
      shift_ = min_;
      forward_ = range.cwiseInverse().asDiagonal();
      backward_ = range.asDiagonal();
      break;
    }
    case PreprocessKind::minmax_zca: {
      const Eigen::RowVectorXd range = max_ - min_;
      shift_ = min_ + range.cwiseProduct(mean_);
      forward_ = range.cwiseInverse().asDiagonal() * whitening_;
      backward_ = whitening_inv_ * range.asDiagonal();
      break;
    }
  }
}

Eigen::MatrixXd Preprocessor::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != shift_.size())
    throw DimensionError("preprocessor expects " + std::to_string(shift_.size()) + " columns, got " +
                         std::to_string(x.cols()));
  return (x.rowwise() - shift_) * forward_;
}

Eigen::MatrixXd Preprocessor::inverse(const Eigen::MatrixXd& y) const {
  if (y.cols() != shift_.size())
    throw DimensionError("preprocessor expects " + std::to_string(shift_.size()) + " columns, got " +
                         std::to_string(y.cols()));
  return (y * backward_).rowwise() + shift_;
}

nlohmann::json Preprocessor::to_json() const {
  nlohmann::json j = {{"kind", std::string(to_string(kind_))}, {"eigen_floor", eigen_floor_}};
  if (kind_ == PreprocessKind::standardize) {
    j["mean"] = to_json_vec(mean_);
    j["std"] = to_json_vec(std_);
  } else {
    j["min"] = to_json_vec(min_);
    j["max"] = to_json_vec(max_);
  }
  if (kind_ == PreprocessKind::minmax_zca) {
    j["scaled_mean"] = to_json_vec(mean_);
    j["floored_eigenvalues"] = floored_;
    j["eigenvalues"] = std::vector<double>(eigenvalues_.data(), eigenvalues_.data() + eigenvalues_.size());
    j["whitening"] = to_json_mat(whitening_);
    j["whitening_inverse"] = to_json_mat(whitening_inv_);
  }
  return j;
}

Preprocessor Preprocessor::from_json(const nlohmann::json& j) {
  Preprocessor p;
  try {
    p.kind_ = parse_preprocess_kind(j.at("kind").get<std::string>());
    p.eigen_floor_ = j.value("eigen_floor", kEigenFloor);
    p.floored_ = j.value("floored_eigenvalues", std::size_t{0});
    if (p.kind_ == PreprocessKind::standardize) {
      p.mean_ = vec_from_json(j.at("mean"));
      p.std_ = vec_from_json(j.at("std"));
    } else {
      p.min_ = vec_from_json(j.at("min"));
      p.max_ = vec_from_json(j.at("max"));
    }
    if (p.kind_ == PreprocessKind::minmax_zca) {
      p.mean_ = vec_from_json(j.at("scaled_mean"));
      const auto ev = j.at("eigenvalues").get<std::vector<double>>();
      p.eigenvalues_ = Eigen::Map<const Eigen::VectorXd>(ev.data(), static_cast<Eigen::Index>(ev.size()));
      p.whitening_ = mat_from_json(j.at("whitening"));
      p.whitening_inv_ = mat_from_json(j.at("whitening_inverse"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("preprocessor state: " + std::string(e.what()));
  } catch (const InvalidParameter& e) {
    throw SchemaError(e.what());
  }
  p.finalize();
  return p;
}

}  // namespace hxai::datagen
