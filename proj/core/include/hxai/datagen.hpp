#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "hxai/grid.hpp"
#include "hxai/heston.hpp"
#include "hxai/rng.hpp"

namespace hxai::datagen {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Per-parameter sampling box in label order (v0, rho, sigma, theta, kappa).
struct ParamBounds {
  std::array<Interval, heston::HestonParams::kCount> range{};

  const Interval& operator[](std::size_t i) const { return range[i]; }
  bool contains(const heston::HestonParams& p) const;

  /// The published sampling box.
  static ParamBounds standard();
};

inline constexpr std::uint64_t kMaxAttempts = 1'000'000;

/// Independent stream for row `index` of a dataset generated with `seed`.
Rng row_stream(std::uint64_t seed, std::uint64_t index);

struct Draw {
  heston::HestonParams params;
  std::uint64_t attempts = 0;  // draws consumed, including the accepted one
};

/// Uniform draw per coordinate, redrawn until the Feller condition holds.
/// Throws SamplingExhausted after `max_attempts` rejections.
Draw sample_params(Rng& rng, const ParamBounds& bounds = ParamBounds::standard(),
                   std::uint64_t max_attempts = kMaxAttempts);

struct Dataset {
  Grid grid = Grid::canonical();
  Eigen::MatrixXd features;  // N x grid.size(), maturity-major
  Eigen::MatrixXd labels;    // N x 5
  std::uint64_t seed = 0;
  std::uint64_t sampling_attempts = 0;  // total draws, accepted or not

  std::size_t size() const { return static_cast<std::size_t>(labels.rows()); }
  heston::HestonParams params(std::size_t row) const;
};

struct BuildOptions {
  Grid grid = Grid::canonical();
  ParamBounds bounds = ParamBounds::standard();
  unsigned workers = 0;  // 0: hardware concurrency
};

/// n surfaces from seeded Feller-valid draws. Output does not depend on the
/// worker count. Pricing failures are rethrown with the offending row.
Dataset build_dataset(std::size_t n, std::uint64_t seed, const BuildOptions& options = {});

/// Dataset for given parameter rows (no sampling).
Dataset build_dataset(std::span<const heston::HestonParams> rows, const Grid& grid = Grid::canonical(),
                      unsigned workers = 0);

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;  // indices into the source dataset
  std::vector<std::size_t> test_rows;
};

/// Shuffled partition with floor(n * train_fraction) training rows.
Split split(const Dataset& data, double train_fraction, std::uint64_t seed);

Dataset select_rows(const Dataset& data, std::span<const std::size_t> rows);

std::vector<std::string> label_names();
std::vector<std::string> feature_names(const Grid& grid);

inline constexpr int kSchemaVersion = 1;

/// Writes features.csv, labels.csv and manifest.json into `dir`. Fields of
/// `extra` are merged into the manifest.
void save_dataset(const Dataset& data, const std::filesystem::path& dir,
                  const nlohmann::json& extra = nlohmann::json::object());

/// Reads a dataset written by save_dataset. Throws SchemaError on mismatch.
Dataset load_dataset(const std::filesystem::path& dir);

nlohmann::json read_manifest(const std::filesystem::path& dir);

}  // namespace hxai::datagen
