#include "hxai/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "hxai/errors.hpp"

namespace hxai::csv {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write(const std::filesystem::path& path, const std::vector<std::string>& header,
           const Eigen::MatrixXd& values) {
  if (!header.empty() && static_cast<Eigen::Index>(header.size()) != values.cols() &&
      values.rows() > 0)
    throw DimensionError("CSV header has " + std::to_string(header.size()) + " columns, data has " +
                         std::to_string(values.cols()));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
  os << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) os << (j ? "," : "") << format_double(values(i, j));
    os << '\n';
  }
  if (!os) throw Error("write failed for " + path.string());
}

void write(const std::filesystem::path& path, const Table& table) {
  write(path, table.header, table.values);
}

Table read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw SchemaError(path.string() + ": empty file, expected header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = line.empty() ? std::vector<std::string>{} : split_line(line);

  std::vector<double> flat;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw SchemaError(path.string() + ": row " + std::to_string(rows + 1) + " has " +
                        std::to_string(cells.size()) + " cells, header has " +
                        std::to_string(t.header.size()));
    for (const auto& c : cells) {
      double v = 0.0;
      const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (res.ec != std::errc() || res.ptr != c.data() + c.size())
        throw SchemaError(path.string() + ": non-numeric cell '" + c + "'");
      flat.push_back(v);
    }
    ++rows;
  }
  const auto cols = static_cast<Eigen::Index>(t.header.size());
  t.values.resize(static_cast<Eigen::Index>(rows), cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      t.values(static_cast<Eigen::Index>(i), j) = flat[i * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)];
  return t;
}

}  // namespace hxai::csv
