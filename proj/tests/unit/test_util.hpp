#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "hxai/nnet.hpp"

namespace test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("hxai_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

/// in -> hidden (ELU) -> out (linear) with random weights and biases.
inline hxai::nnet::Model random_mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, std::uint64_t seed) {
  using namespace hxai::nnet;
  std::mt19937_64 rng(seed);
  std::vector<std::unique_ptr<Layer>> layers;
  auto d1 = std::make_unique<Dense>(in, hidden);
  d1->weights() = random_matrix(in, hidden, rng);
  d1->bias() = random_matrix(1, hidden, rng, 0.5);
  auto d2 = std::make_unique<Dense>(hidden, out);
  d2->weights() = random_matrix(hidden, out, rng);
  d2->bias() = random_matrix(1, out, rng, 0.5);
  layers.push_back(std::move(d1));
  layers.push_back(std::make_unique<Activation>(Shape{1, 1, hidden}, ActivationKind::elu));
  layers.push_back(std::move(d2));
  return Model(Architecture::custom, std::move(layers));
}

}  // namespace test
