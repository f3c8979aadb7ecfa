#include "delta_audit/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "delta_audit/error.hpp"
#include "delta_audit/rng.hpp"
#include "delta_audit/text.hpp"

namespace delta_audit {

namespace {

std::string trim(std::string_view s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(first, last - first + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string_view rest(line);
  while (true) {
    auto pos = rest.find(',');
    cells.push_back(trim(rest.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    rest.remove_prefix(pos + 1);
  }
  return cells;
}

}  // namespace

void Dataset::validate() const {
  if (class_count < 2) throw DataError("dataset '" + name + "': fewer than 2 classes");
  if (y.size() != X.rows()) throw DataError("dataset '" + name + "': label count != row count");
  if (feature_names.size() != X.cols()) {
    throw DataError("dataset '" + name + "': feature name count != column count");
  }
  std::set<std::string> names(feature_names.begin(), feature_names.end());
  if (names.size() != feature_names.size()) {
    throw DataError("dataset '" + name + "': duplicate feature names");
  }
  for (double v : X.data()) {
    if (!std::isfinite(v)) throw DataError("dataset '" + name + "': non-finite feature value");
  }
  std::vector<int> counts(static_cast<std::size_t>(class_count), 0);
  for (int label : y) {
    if (label < 0 || label >= class_count) {
      throw DataError("dataset '" + name + "': label out of range");
    }
    ++counts[static_cast<std::size_t>(label)];
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw DataError("dataset '" + name + "': class " + std::to_string(c) + " has no samples");
    }
  }
}

std::vector<double> Standardizer::transform(std::span<const double> x) const {
  std::vector<double> z(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x[j] - mean[j]) / std[j];
  return z;
}

std::vector<double> Standardizer::inverse_transform(std::span<const double> z) const {
  std::vector<double> x(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) x[j] = z[j] * std[j] + mean[j];
  return x;
}

Matrix Standardizer::transform(const Matrix& X) const {
  if (X.cols() != mean.size()) throw MismatchError("Standardizer: width mismatch");
  Matrix Z(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    for (std::size_t j = 0; j < X.cols(); ++j) Z(i, j) = (X(i, j) - mean[j]) / std[j];
  }
  return Z;
}

Matrix Standardizer::inverse_transform(const Matrix& Z) const {
  if (Z.cols() != mean.size()) throw MismatchError("Standardizer: width mismatch");
  Matrix X(Z.rows(), Z.cols());
  for (std::size_t i = 0; i < Z.rows(); ++i) {
    for (std::size_t j = 0; j < Z.cols(); ++j) X(i, j) = Z(i, j) * std[j] + mean[j];
  }
  return X;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV file is empty: " + path.string());
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);

  auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw DataError("CSV " + path.string() + ": label column '" + label_column + "' not found");
  }
  const auto label_pos = static_cast<std::size_t>(label_it - header.begin());

  Dataset ds;
  ds.name = path.stem().string();
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_pos) ds.feature_names.push_back(header[c]);
  }

  std::map<std::string, int> label_codes;
  std::vector<double> row(ds.feature_names.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("CSV " + path.string() + " line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " cells, found " +
                      std::to_string(cells.size()));
    }
    std::size_t f = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == label_pos) continue;
      const std::string& cell = cells[c];
      double value = 0.0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() ||
          !std::isfinite(value)) {
        throw DataError("CSV " + path.string() + " line " + std::to_string(line_no) +
                        ", column '" + header[c] + "': invalid numeric cell '" + cell + "'");
      }
      row[f++] = value;
    }
    ds.X.append_row(row);
    const std::string& label = cells[label_pos];
    auto [it, inserted] = label_codes.emplace(label, static_cast<int>(label_codes.size()));
    if (inserted) ds.class_labels.push_back(label);
    ds.y.push_back(it->second);
  }
  if (ds.X.rows() == 0) {
    ds.X = Matrix(0, ds.feature_names.size());
  }
  ds.class_count = static_cast<int>(label_codes.size());
  if (ds.class_count < 2) {
    throw DataError("CSV " + path.string() + ": fewer than 2 classes in '" + label_column + "'");
  }
  ds.validate();
  return ds;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path,
               const std::string& label_column) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write CSV file: " + path.string());
  for (const auto& name : ds.feature_names) out << name << ',';
  out << label_column << '\n';
  for (std::size_t i = 0; i < ds.samples(); ++i) {
    for (double v : ds.X.row(i)) out << format_double(v) << ',';
    const auto label = static_cast<std::size_t>(ds.y[i]);
    out << (label < ds.class_labels.size() ? ds.class_labels[label] : std::to_string(label))
        << '\n';
  }
}

SplitIndices stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("stratified_split: test_fraction must lie in (0, 1)");
  }
  const std::size_t n = ds.samples();
  const auto classes = static_cast<std::size_t>(ds.class_count);
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(ds.y[i])].push_back(i);
  for (std::size_t c = 0; c < classes; ++c) {
    if (members[c].size() < 2) {
      throw DataError("stratified_split: class " + std::to_string(c) +
                      " has fewer than 2 samples");
    }
  }

  const auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n)));
  if (n_test == 0) throw ConfigError("stratified_split: test set would be empty");
  if (n_test >= n) throw ConfigError("stratified_split: training set would be empty");

  // Floor allocation per class, then hand out the remainder by largest
  // fractional part (ties to the lower class index).
  std::vector<std::size_t> alloc(classes);
  std::vector<double> remainder(classes);
  std::size_t allocated = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const double exact = static_cast<double>(members[c].size()) * test_fraction;
    alloc[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(alloc[c]);
    allocated += alloc[c];
  }
  std::vector<std::size_t> order(classes);
  for (std::size_t c = 0; c < classes; ++c) order[c] = c;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t r = 0; allocated < n_test && r < classes; ++r) {
    const std::size_t c = order[r];
    if (alloc[c] + 1 < members[c].size()) {
      ++alloc[c];
      ++allocated;
    }
  }

  SplitIndices out;
  Rng rng(seed);
  for (std::size_t c = 0; c < classes; ++c) {
    auto idx = members[c];
    rng.shuffle(std::span<std::size_t>(idx));
    out.test.insert(out.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(alloc[c]));
    out.train.insert(out.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(alloc[c]), idx.end());
  }
  if (out.test.empty()) throw ConfigError("stratified_split: test set would be empty");
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

Standardizer fit_standardizer(const Dataset& ds, const SplitIndices& idx) {
  if (idx.train.empty()) throw DataError("fit_standardizer: no training rows");
  const std::size_t d = ds.features();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.std.assign(d, 0.0);
  const auto count = static_cast<double>(idx.train.size());
  for (std::size_t j = 0; j < d; ++j) {
    CompensatedSum sum;
    for (auto i : idx.train) sum.add(ds.X(i, j));
    const double mean = sum.value() / count;
    CompensatedSum sq;
    for (auto i : idx.train) {
      const double diff = ds.X(i, j) - mean;
      sq.add(diff * diff);
    }
    double sd = std::sqrt(sq.value() / count);
    if (!(sd > Standardizer::kStdFloor)) {
      sd = Standardizer::kStdFloor;
      s.floored.push_back(j);
    }
    s.mean[j] = mean;
    s.std[j] = sd;
  }
  return s;
}

namespace {

constexpr std::uint64_t kEmbeddedSeed = 20240917;

Dataset make_separable2() {
  // Label is the side of a fixed hyperplane; points near it are rejected so
  // that the classes are separated by a margin.
  constexpr std::size_t kPerClass = 30;
  const double w[6] = {1.0, 0.7, 0.5, 0.3, 0.0, 0.0};
  Rng rng = Rng::stream(kEmbeddedSeed, 1);
  std::vector<std::vector<double>> pools[2];
  while (pools[0].size() < kPerClass || pools[1].size() < kPerClass) {
    std::vector<double> x(6);
    for (auto& v : x) v = rng.normal();
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) s += w[j] * x[j];
    if (std::abs(s) < 0.4) continue;
    const int label = s > 0.0 ? 1 : 0;
    if (pools[label].size() < kPerClass) pools[label].push_back(std::move(x));
  }
  Dataset ds;
  ds.name = "separable2";
  ds.class_count = 2;
  ds.class_labels = {"0", "1"};
  for (std::size_t j = 0; j < 6; ++j) ds.feature_names.push_back("f" + std::to_string(j));
  for (std::size_t i = 0; i < kPerClass; ++i) {
    for (int c = 0; c < 2; ++c) {
      // Unequal per-feature scales so standardization is not a no-op.
      auto row = pools[c][i];
      row[1] = 3.0 * row[1] + 5.0;
      row[4] = 0.5 * row[4] - 2.0;
      ds.X.append_row(row);
      ds.y.push_back(c);
    }
  }
  ds.validate();
  return ds;
}

Dataset make_interact3() {
  constexpr std::size_t kPerClass = 30;
  Rng rng = Rng::stream(kEmbeddedSeed, 2);
  std::vector<std::vector<double>> pools[3];
  while (pools[0].size() < kPerClass || pools[1].size() < kPerClass ||
         pools[2].size() < kPerClass) {
    std::vector<double> x(8);
    for (auto& v : x) v = rng.normal();
    x[4] = 0.6 * x[2] + 0.8 * x[4];
    int label;
    if (x[0] * x[1] > 0.3) {
      label = 0;
    } else if (x[2] + 0.5 * x[3] > 0.2) {
      label = 1;
    } else if (x[2] + 0.5 * x[3] < -0.2 && x[0] * x[1] < 0.1) {
      label = 2;
    } else {
      continue;
    }
    auto& pool = pools[static_cast<std::size_t>(label)];
    if (pool.size() < kPerClass) pool.push_back(std::move(x));
  }
  Dataset ds;
  ds.name = "interact3";
  ds.class_count = 3;
  ds.class_labels = {"0", "1", "2"};
  for (std::size_t j = 0; j < 8; ++j) ds.feature_names.push_back("g" + std::to_string(j));
  for (std::size_t i = 0; i < kPerClass; ++i) {
    for (int c = 0; c < 3; ++c) {
      auto row = pools[static_cast<std::size_t>(c)][i];
      row[6] = 10.0 * row[6];
      ds.X.append_row(row);
      ds.y.push_back(c);
    }
  }
  ds.validate();
  return ds;
}

}  // namespace

std::vector<Dataset> embedded_datasets() { return {make_separable2(), make_interact3()}; }

Dataset embedded_dataset(const std::string& name) {
  if (name == "separable2") return make_separable2();
  if (name == "interact3") return make_interact3();
  throw ConfigError("unknown embedded dataset '" + name + "' (known: separable2, interact3)");
}

}  // namespace delta_audit
