#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hxai {

struct GridPoint {
  double maturity;  // years
  double strike;    // moneyness, S0 = 1
};

/// Rectangular (maturity x strike) grid. Flattening is maturity-major:
/// flat index = maturity_index * n_strikes + strike_index.
class Grid {
 public:
  Grid() = default;
  Grid(std::vector<double> maturities, std::vector<double> strikes);

  static const Grid& canonical();

  std::size_t n_maturities() const noexcept { return maturities_.size(); }
  std::size_t n_strikes() const noexcept { return strikes_.size(); }
  std::size_t size() const noexcept { return maturities_.size() * strikes_.size(); }

  const std::vector<double>& maturities() const noexcept { return maturities_; }
  const std::vector<double>& strikes() const noexcept { return strikes_; }

  std::size_t flat_index(std::size_t maturity_index, std::size_t strike_index) const noexcept {
    return maturity_index * strikes_.size() + strike_index;
  }
  GridPoint point(std::size_t flat) const;
  std::vector<GridPoint> points() const;

  /// CSV column name, `T<i>_K<j>`.
  std::string column_name(std::size_t flat) const;
  /// Human label with values, e.g. `T=0.1,K=1.0`.
  std::string label(std::size_t flat) const;

  bool operator==(const Grid&) const = default;

 private:
  std::vector<double> maturities_;
  std::vector<double> strikes_;
};

}  // namespace hxai
