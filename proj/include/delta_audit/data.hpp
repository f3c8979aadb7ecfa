#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "delta_audit/matrix.hpp"

namespace delta_audit {

// Feature matrix with integer class labels in [0, class_count).
struct Dataset {
  std::string name;
  Matrix X;
  std::vector<int> y;
  std::vector<std::string> feature_names;
  int class_count = 0;
  // Original label text per class index, in first-appearance order.
  std::vector<std::string> class_labels;

  std::size_t samples() const { return X.rows(); }
  std::size_t features() const { return X.cols(); }

  // Throws DataError if any Dataset invariant is broken.
  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

struct Standardizer {
  static constexpr double kStdFloor = 1e-12;

  std::vector<double> mean;
  std::vector<double> std;
  // Feature indices whose std fell below the floor.
  std::vector<std::size_t> floored;

  std::vector<double> transform(std::span<const double> x) const;
  std::vector<double> inverse_transform(std::span<const double> z) const;
  Matrix transform(const Matrix& X) const;
  Matrix inverse_transform(const Matrix& Z) const;
};

// Labels are re-encoded to 0..C-1 by order of first appearance.
Dataset load_csv(const std::filesystem::path& path, const std::string& label_column);

// Writes features with shortest round-trip formatting plus a trailing label column.
void write_csv(const Dataset& ds, const std::filesystem::path& path,
               const std::string& label_column = "label");

SplitIndices stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed);

Standardizer fit_standardizer(const Dataset& ds, const SplitIndices& idx);

// Desk-scale synthetic datasets generated from a fixed seed:
//   "separable2": 2 classes, n=60, d=6, linearly separable with a margin.
//   "interact3":  3 classes, n=90 (30 each), d=8, class depends on a product term.
std::vector<Dataset> embedded_datasets();
Dataset embedded_dataset(const std::string& name);

}  // namespace delta_audit
