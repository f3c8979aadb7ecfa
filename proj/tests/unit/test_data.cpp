#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "delta_audit/data.hpp"
#include "delta_audit/error.hpp"

using namespace delta_audit;
namespace fs = std::filesystem;

namespace {

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "delta_audit_data_tests";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

Dataset two_class(std::size_t n) {
  Dataset ds;
  ds.name = "toy";
  ds.class_count = 2;
  ds.feature_names = {"x"};
  for (std::size_t i = 0; i < n; ++i) {
    ds.X.append_row(std::vector<double>{static_cast<double>(i)});
    ds.y.push_back(static_cast<int>(i % 2));
  }
  return ds;
}

}  // namespace

TEST(LoadCsv, FirstAppearanceEncoding) {
  const auto p = write_file("abc.csv", "f1,f2,label\n1,2,a\n3,4,b\n5,6,a\n");
  const Dataset ds = load_csv(p, "label");
  EXPECT_EQ(ds.y, (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(ds.class_count, 2);
  EXPECT_EQ(ds.class_labels, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"f1", "f2"}));
  EXPECT_EQ(ds.X(2, 1), 6.0);
}

TEST(LoadCsv, NanCellNamesLineAndColumn) {
  const auto p = write_file("nan.csv", "f1,f2,label\n1,2,a\n3,nan,b\n");
  try {
    load_csv(p, "label");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("f2"), std::string::npos) << msg;
  }
}

TEST(LoadCsv, Errors) {
  EXPECT_THROW(load_csv("/nonexistent/file.csv", "label"), DataError);
  EXPECT_THROW(load_csv(write_file("one.csv", "f,label\n1,a\n2,a\n"), "label"), DataError);
  EXPECT_THROW(load_csv(write_file("nolabel.csv", "f,g\n1,2\n"), "label"), DataError);
  EXPECT_THROW(load_csv(write_file("text.csv", "f,label\nabc,a\n2,b\n"), "label"), DataError);
}

TEST(LoadCsv, RoundTripThroughWriteCsv) {
  const Dataset ds = embedded_dataset("interact3");
  const auto p = fs::temp_directory_path() / "delta_audit_data_tests" / "rt.csv";
  fs::create_directories(p.parent_path());
  write_csv(ds, p);
  const Dataset back = load_csv(p, "label");
  ASSERT_EQ(back.X.rows(), ds.X.rows());
  ASSERT_EQ(back.X.cols(), ds.X.cols());
  for (std::size_t k = 0; k < ds.X.data().size(); ++k) {
    EXPECT_NEAR(back.X.data()[k], ds.X.data()[k], 1e-12);
  }
  EXPECT_EQ(back.class_count, ds.class_count);
}

TEST(StratifiedSplit, OneTestSamplePerClass) {
  const Dataset ds = two_class(10);
  const auto s = stratified_split(ds, 0.2, 42);
  ASSERT_EQ(s.test.size(), 2u);
  EXPECT_NE(ds.y[s.test[0]], ds.y[s.test[1]]);
}

TEST(StratifiedSplit, DeterministicAndPartition) {
  const Dataset ds = embedded_dataset("separable2");
  const auto a = stratified_split(ds, 0.2, 42);
  const auto b = stratified_split(ds, 0.2, 42);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  std::vector<std::size_t> all = a.train;
  all.insert(all.end(), a.test.begin(), a.test.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expected(ds.samples());
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(all, expected);
  EXPECT_EQ(a.test.size(), 12u);
}

TEST(StratifiedSplit, SeedsDiffer) {
  const Dataset ds = embedded_dataset("separable2");
  EXPECT_NE(stratified_split(ds, 0.2, 1).test, stratified_split(ds, 0.2, 2).test);
}

TEST(StratifiedSplit, ClassProportionsPreserved) {
  const Dataset ds = embedded_dataset("interact3");
  const auto s = stratified_split(ds, 0.2, 42);
  std::vector<int> counts(3, 0);
  for (auto i : s.test) ++counts[ds.y[i]];
  EXPECT_EQ(counts, (std::vector<int>{6, 6, 6}));
}

TEST(StratifiedSplit, RejectsTinyClasses) {
  Dataset ds = two_class(4);
  ds.y = {0, 0, 0, 1};
  EXPECT_THROW(stratified_split(ds, 0.5, 1), DataError);
  EXPECT_THROW(stratified_split(two_class(10), 1.5, 1), ConfigError);
}

TEST(Standardizer, PopulationConvention) {
  Dataset ds;
  ds.name = "two";
  ds.class_count = 2;
  ds.feature_names = {"x"};
  ds.X = Matrix{{0}, {2}, {100}, {200}};
  ds.y = {0, 1, 0, 1};
  const SplitIndices idx{{0, 1}, {2, 3}};
  const auto s = fit_standardizer(ds, idx);
  EXPECT_EQ(s.mean[0], 1.0);
  EXPECT_EQ(s.std[0], 1.0);
  EXPECT_EQ(s.transform(std::vector<double>{1.0})[0], 0.0);
}

TEST(Standardizer, FloorsConstantFeatures) {
  Dataset ds;
  ds.name = "const";
  ds.class_count = 2;
  ds.feature_names = {"a", "b"};
  ds.X = Matrix{{3, 3}, {3, 3}, {3, 3}};
  ds.y = {0, 1, 0};
  const auto s = fit_standardizer(ds, SplitIndices{{0, 1, 2}, {}});
  EXPECT_EQ(s.std, (std::vector<double>{Standardizer::kStdFloor, Standardizer::kStdFloor}));
  EXPECT_EQ(s.floored.size(), 2u);
}

TEST(Standardizer, TrainingMatrixIsCentredAndScaled) {
  const Dataset ds = embedded_dataset("interact3");
  const auto split = stratified_split(ds, 0.2, 42);
  const auto s = fit_standardizer(ds, split);
  const Matrix Z = s.transform(ds.X.select_rows(split.train));
  for (std::size_t j = 0; j < Z.cols(); ++j) {
    const auto col = Z.column(j);
    double m = 0, v = 0;
    for (double x : col) m += x;
    m /= col.size();
    for (double x : col) v += (x - m) * (x - m);
    EXPECT_LT(std::abs(m), 1e-9);
    EXPECT_NEAR(std::sqrt(v / col.size()), 1.0, 1e-9);
  }
  const Matrix back = s.inverse_transform(Z);
  const Matrix orig = ds.X.select_rows(split.train);
  for (std::size_t k = 0; k < back.data().size(); ++k) {
    EXPECT_NEAR(back.data()[k], orig.data()[k], 1e-9);
  }
}

TEST(Embedded, ShapesAndDeterminism) {
  const auto a = embedded_datasets();
  const auto b = embedded_datasets();
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].X, b[k].X);
    EXPECT_EQ(a[k].y, b[k].y);
    EXPECT_NO_THROW(a[k].validate());
  }
  const Dataset s = embedded_dataset("separable2");
  EXPECT_EQ(s.samples(), 60u);
  EXPECT_EQ(s.features(), 6u);
  EXPECT_EQ(s.class_count, 2);
  const Dataset t = embedded_dataset("interact3");
  EXPECT_EQ(t.samples(), 90u);
  EXPECT_EQ(t.class_count, 3);
  std::vector<int> counts(3, 0);
  for (int y : t.y) ++counts[y];
  EXPECT_EQ(counts, (std::vector<int>{30, 30, 30}));
  EXPECT_THROW(embedded_dataset("digits"), ConfigError);
}
