#include <gtest/gtest.h>

#include <cmath>
#include <mutex>

#include "delta_audit/error.hpp"
#include "delta_audit/explainer.hpp"
#include "helpers.hpp"

using namespace delta_audit;
using testing_support::CountingModel;
using testing_support::linear_model;
using testing_support::random_matrix;

namespace {

// Records which columns differ from the reference rows in each batch.
class ColumnSpy final : public ScoreModel {
 public:
  ColumnSpy(std::shared_ptr<const ScoreModel> inner, Matrix reference)
      : inner_(std::move(inner)), reference_(std::move(reference)) {}
  Capabilities capabilities() const override { return inner_->capabilities(); }
  int class_count() const override { return inner_->class_count(); }
  std::string tag() const override { return "spy"; }
  Matrix margins(const Matrix& X) const override {
    record(X);
    return inner_->margins(X);
  }
  Matrix probabilities(const Matrix& X) const override {
    record(X);
    return inner_->probabilities(X);
  }
  mutable std::vector<std::vector<std::size_t>> changed;

 private:
  void record(const Matrix& X) const {
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < X.cols(); ++j) {
      for (std::size_t i = 0; i < X.rows(); ++i) {
        if (X(i, j) != reference_(i, j)) {
          cols.push_back(j);
          break;
        }
      }
    }
    changed.push_back(cols);
  }
  std::shared_ptr<const ScoreModel> inner_;
  Matrix reference_;
};

Baseline zero_baseline(std::size_t d) { return {BaselineKind::mean, std::vector<double>(d, 0.0)}; }

}  // namespace

TEST(Baseline, MeanMedianAveraged) {
  const Matrix col{{0}, {0}, {10}};
  EXPECT_NEAR(make_baseline(col, BaselineKind::mean).values[0], 10.0 / 3.0, 1e-15);
  EXPECT_EQ(make_baseline(col, BaselineKind::median).values[0], 0.0);
  EXPECT_NEAR(make_baseline(col, BaselineKind::averaged).values[0], 5.0 / 3.0, 1e-15);
  // Even count: lower median.
  EXPECT_EQ(make_baseline(Matrix{{4}, {1}, {3}, {2}}, BaselineKind::median).values[0], 2.0);
  EXPECT_THROW(make_baseline(Matrix(0, 2), BaselineKind::mean), DataError);
}

TEST(Baseline, StandardizedMeanIsZero) {
  Rng rng(3);
  Matrix X = random_matrix(rng, 40, 5);
  for (std::size_t j = 0; j < 5; ++j) {
    double m = 0;
    for (std::size_t i = 0; i < 40; ++i) m += X(i, j);
    m /= 40;
    for (std::size_t i = 0; i < 40; ++i) X(i, j) -= m;
  }
  for (double b : make_baseline(X, BaselineKind::mean).values) EXPECT_LT(std::abs(b), 1e-9);
}

TEST(Occlusion, LinearHandExample) {
  const auto m = linear_model(Matrix{{0, 0}, {2, -1}}, {0, 0});
  const auto a = occlusion_attributions(*m, Matrix{{1, 1}}, {1}, zero_baseline(2));
  EXPECT_EQ(a.values(0, 0), 2.0);
  EXPECT_EQ(a.values(0, 1), -1.0);
  EXPECT_EQ(a.scores[0], 1.0);
}

TEST(Occlusion, LinearClosedFormRandom) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.index(12), d = 1 + rng.index(8), C = 2 + rng.index(3);
    const Matrix W = random_matrix(rng, C, d), X = random_matrix(rng, n, d);
    std::vector<double> bias(C);
    for (double& b : bias) b = rng.normal();
    const auto m = linear_model(W, bias);
    Baseline base{BaselineKind::averaged, std::vector<double>(d)};
    for (double& b : base.values) b = rng.normal();
    std::vector<int> anchors(n);
    for (int& c : anchors) c = static_cast<int>(rng.index(C));
    const auto a = occlusion_attributions(*m, X, anchors, base);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double expected = W(anchors[i], j) * (X(i, j) - base.values[j]);
        EXPECT_NEAR(a.values(i, j), expected, 1e-10);
      }
  }
}

TEST(Occlusion, PointAtBaselineAndIgnoredFeature) {
  const auto m = linear_model(Matrix{{1, 0, 3}, {-1, 0, 2}}, {0.5, 0});
  const Baseline b{BaselineKind::mean, {0.3, -1, 2}};
  const auto at_base = occlusion_attributions(*m, Matrix{{0.3, -1, 2}}, {0}, b);
  for (double v : at_base.values.data()) EXPECT_EQ(v, 0.0);
  const auto a = occlusion_attributions(*m, Matrix{{1, 5, 1}, {2, -7, 0}}, {0, 1}, b);
  EXPECT_EQ(a.values(0, 1), 0.0);
  EXPECT_EQ(a.values(1, 1), 0.0);
}

TEST(Occlusion, CallCountIsDPlusOneBatches) {
  Rng rng(4);
  const std::size_t n = 7, d = 5;
  auto inner = linear_model(random_matrix(rng, 3, d), {0, 0, 0});
  CountingModel counting(inner);
  const Matrix X = random_matrix(rng, n, d);
  occlusion_attributions(counting, X, std::vector<int>(n, 1), zero_baseline(d));
  EXPECT_EQ(counting.calls.load(), d + 1);
  EXPECT_EQ(counting.rows.load(), n * (d + 1));
}

TEST(Occlusion, ClampingIsLocal) {
  Rng rng(8);
  const std::size_t d = 4;
  const Matrix X = random_matrix(rng, 3, d);
  ColumnSpy spy(linear_model(random_matrix(rng, 2, d), {0, 0}), X);
  occlusion_attributions(spy, X, {0, 1, 0}, zero_baseline(d));
  ASSERT_EQ(spy.changed.size(), d + 1);
  EXPECT_TRUE(spy.changed[0].empty());
  for (std::size_t j = 0; j < d; ++j) EXPECT_EQ(spy.changed[j + 1], (std::vector<std::size_t>{j}));
}

TEST(Delta, IdenticalAndSingleWeightChange) {
  const Matrix WA{{1, 2, 3}, {0, -1, 1}};
  Matrix WB = WA;
  WB(1, 2) = 4;
  const auto A = linear_model(WA, {0, 0}), B = linear_model(WB, {0, 0});
  const Matrix X{{1, 2, 3}, {-1, 0, 2}};
  const std::vector<int> anchors{1, 1};
  const auto b = zero_baseline(3);
  const auto aA = occlusion_attributions(*A, X, anchors, b);
  const auto aB = occlusion_attributions(*B, X, anchors, b);
  const auto same = delta_attributions(aA, aA);
  for (double v : same.values.data()) EXPECT_EQ(v, 0.0);
  const auto d = delta_attributions(aA, aB);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(d.values(i, 0), 0.0);
    EXPECT_EQ(d.values(i, 1), 0.0);
    EXPECT_NEAR(d.values(i, 2), 3.0 * X(i, 2), 1e-12);
  }
  const auto swapped = delta_attributions(aB, aA);
  for (std::size_t k = 0; k < d.values.data().size(); ++k) {
    EXPECT_EQ(swapped.values.data()[k], -d.values.data()[k]);
  }
}

TEST(Delta, ProvenanceChecks) {
  const auto A = linear_model(Matrix{{1, 0}, {0, 1}}, {0, 0});
  const Matrix X{{1, 1}};
  const auto a = occlusion_attributions(*A, X, {0}, {BaselineKind::mean, {0, 0}});
  const auto b = occlusion_attributions(*A, X, {0}, {BaselineKind::median, {0, 0}});
  const auto c = occlusion_attributions(*A, X, {1}, {BaselineKind::mean, {0, 0}});
  EXPECT_THROW(delta_attributions(a, b), MismatchError);
  EXPECT_THROW(delta_attributions(a, c), MismatchError);
  EXPECT_THROW(occlusion_attributions(*A, X, {0}, {BaselineKind::mean, {0}}), MismatchError);
}

TEST(GroupedOcclusion, LinearClosedForm) {
  Rng rng(21);
  const std::size_t n = 10, d = 6;
  const Matrix WA = random_matrix(rng, 3, d), WB = random_matrix(rng, 3, d);
  const auto A = linear_model(WA, {0.1, 0, -0.2}), B = linear_model(WB, {0, 0.3, 0});
  const Matrix X = random_matrix(rng, n, d);
  const auto anchors = B->predict(X);
  const Baseline base{BaselineKind::averaged, {0.1, -0.2, 0, 0.3, 0, 0.05}};
  const auto aA = occlusion_attributions(*A, X, anchors, base);
  const auto aB = occlusion_attributions(*B, X, anchors, base);
  const auto g = grouped_occlusion_ratio(*A, *B, X, aA, aB, 2);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double num = 0, group = 0;
    for (std::size_t j = 0; j < d; ++j) num += std::abs(aB.values(i, j) - aA.values(i, j));
    for (auto j : g.groups[i]) group += aB.values(i, j) - aA.values(i, j);
    EXPECT_NEAR(g.group_delta[i], group, 1e-12);
    total += num / (std::abs(group) + 1e-12);
  }
  EXPECT_NEAR(g.rho, total / n, 1e-9);
}

TEST(GroupedOcclusion, IdenticalModelsGiveZero) {
  const auto A = linear_model(Matrix{{1, 2}, {3, 4}}, {0, 0});
  const Matrix X{{1, 1}, {2, -1}};
  const auto a = occlusion_attributions(*A, X, {0, 1}, zero_baseline(2));
  EXPECT_EQ(grouped_occlusion_ratio(*A, *A, X, a, a, 2).rho, 0.0);
}

TEST(GroupedOcclusion, SingleFeatureModelKOneIsOne) {
  const auto A = linear_model(Matrix{{0, 0, 0}, {1, 0, 0}}, {0, 0});
  const auto B = linear_model(Matrix{{0, 0, 0}, {3, 0, 0}}, {0, 0});
  const Matrix X{{1, 2, 3}, {-2, 1, 1}};
  const std::vector<int> anchors{1, 1};
  const auto aA = occlusion_attributions(*A, X, anchors, zero_baseline(3));
  const auto aB = occlusion_attributions(*B, X, anchors, zero_baseline(3));
  EXPECT_NEAR(grouped_occlusion_ratio(*A, *B, X, aA, aB, 1).rho, 1.0, 1e-12);
}

TEST(GroupedOcclusion, RevectorModeAndValidation) {
  const auto A = linear_model(Matrix{{1, 2, 0}, {3, 4, 1}}, {0, 0});
  const auto B = linear_model(Matrix{{1, 1, 0}, {2, 4, 3}}, {0, 0});
  const Matrix X{{1, 1, 1}, {2, -1, 0.5}};
  const std::vector<int> anchors{1, 0};
  const auto aA = occlusion_attributions(*A, X, anchors, zero_baseline(3));
  const auto aB = occlusion_attributions(*B, X, anchors, zero_baseline(3));
  const auto r = grouped_occlusion_ratio(*A, *B, X, aA, aB, 2, GroupMode::revector);
  // For linear models the clamped group features carry zero attribution at
  // x_G = b_G, so the revector denominator is the remaining feature's delta.
  for (std::size_t i = 0; i < 2; ++i) {
    double num = 0, rest = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double dj = aB.values(i, j) - aA.values(i, j);
      num += std::abs(dj);
      bool grouped = false;
      for (auto g : r.groups[i]) grouped |= g == j;
      if (!grouped) rest += std::abs(dj);
    }
    const double expected = (num == 0 && rest == 0) ? 0.0 : num / (rest + 1e-12);
    EXPECT_NEAR(r.ratios[i], expected, 1e-9 * std::max(1.0, expected));
  }
  EXPECT_THROW(grouped_occlusion_ratio(*A, *B, X, aA, aB, 4), ConfigError);
  EXPECT_THROW(grouped_occlusion_ratio(*A, *B, X, aA, aB, 0), ConfigError);
}

TEST(DeltaExplainer, MatchesDirectComputation) {
  Rng rng(2);
  const auto A = linear_model(random_matrix(rng, 2, 3), {0, 0});
  const auto B = linear_model(random_matrix(rng, 2, 3), {0, 0});
  const Matrix X = random_matrix(rng, 4, 3);
  const std::vector<int> anchors{0, 1, 1, 0};
  const auto base = zero_baseline(3);
  const auto explain = make_delta_explainer(*A, *B, anchors, base);
  const auto direct = delta_attributions(occlusion_attributions(*A, X, anchors, base),
                                         occlusion_attributions(*B, X, anchors, base));
  EXPECT_EQ(explain(X), direct.values);
}
