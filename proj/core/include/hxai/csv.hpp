#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

namespace hxai::csv {

/// A numeric table with a header row.
struct Table {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Writes header + rows; every value is printed in round-trip form.
void write(const std::filesystem::path& path, const std::vector<std::string>& header,
           const Eigen::MatrixXd& values);
void write(const std::filesystem::path& path, const Table& table);

/// Parses a numeric CSV written by `write`. Throws SchemaError on malformed
/// input or ragged rows.
Table read(const std::filesystem::path& path);

}  // namespace hxai::csv
