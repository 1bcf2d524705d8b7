#include "hxai/grid.hpp"

#include <cstdio>

#include "hxai/errors.hpp"

namespace hxai {

Grid::Grid(std::vector<double> maturities, std::vector<double> strikes)
    : maturities_(std::move(maturities)), strikes_(std::move(strikes)) {
  for (double t : maturities_)
    if (!(t > 0.0)) throw InvalidParameter("grid maturities must be positive");
  for (double k : strikes_)
    if (!(k > 0.0)) throw InvalidParameter("grid strikes must be positive");
}

const Grid& Grid::canonical() {
  static const Grid grid({0.1, 0.3, 0.6, 0.9, 1.2, 1.5, 1.8, 2.0},
                         {0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5});
  return grid;
}

GridPoint Grid::point(std::size_t flat) const {
  if (flat >= size()) throw DimensionError("grid index out of range");
  return {maturities_[flat / strikes_.size()], strikes_[flat % strikes_.size()]};
}

std::vector<GridPoint> Grid::points() const {
  std::vector<GridPoint> out;
  out.reserve(size());
  for (double t : maturities_)
    for (double k : strikes_) out.push_back({t, k});
  return out;
}

std::string Grid::column_name(std::size_t flat) const {
  if (flat >= size()) throw DimensionError("grid index out of range");
  return "T" + std::to_string(flat / strikes_.size()) + "_K" + std::to_string(flat % strikes_.size());
}

std::string Grid::label(std::size_t flat) const {
  const GridPoint p = point(flat);
  char buf[64];
  std::snprintf(buf, sizeof buf, "T=%g,K=%g", p.maturity, p.strike);
  return buf;
}

}  // namespace hxai
