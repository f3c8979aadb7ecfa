#include <gtest/gtest.h>

#include <cmath>

#include "delta_audit/data.hpp"
#include "delta_audit/error.hpp"
#include "delta_audit/learners.hpp"
#include "delta_audit/rng.hpp"

using namespace delta_audit;

namespace {

struct Split {
  Matrix X_train, X_test;
  std::vector<int> y_train, y_test;
  int classes;
};

Split standardized(const std::string& name) {
  const Dataset ds = embedded_dataset(name);
  const auto idx = stratified_split(ds, 0.2, 42);
  const auto sc = fit_standardizer(ds, idx);
  Split s;
  s.X_train = sc.transform(ds.X.select_rows(idx.train));
  s.X_test = sc.transform(ds.X.select_rows(idx.test));
  for (auto i : idx.train) s.y_train.push_back(ds.y[i]);
  for (auto i : idx.test) s.y_test.push_back(ds.y[i]);
  s.classes = ds.class_count;
  return s;
}

void expect_rows_are_distributions(const Matrix& P) {
  for (std::size_t i = 0; i < P.rows(); ++i) {
    double s = 0;
    for (double v : P.row(i)) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

}  // namespace

TEST(LogReg, SeparableTrainAccuracyAndTestAccuracy) {
  const auto s = standardized("separable2");
  const auto m = fit(LearnerSpec::logreg(1.0), s.X_train, s.y_train, s.classes);
  EXPECT_EQ(accuracy(m.predict(s.X_train), s.y_train), 1.0);
  EXPECT_GE(accuracy(m.predict(s.X_test), s.y_test), 0.9);
  EXPECT_TRUE(m.has_margin());
  const auto& st = std::get<LogRegState>(m.state());
  EXPECT_LT(st.gradient_norm, 1e-6);
  EXPECT_TRUE(m.warnings().empty());
}

TEST(LogReg, IterationBudgetWarns) {
  const auto s = standardized("separable2");
  const auto m = fit(LearnerSpec::logreg(1.0, 2), s.X_train, s.y_train, s.classes);
  EXPECT_FALSE(m.warnings().empty());
}

TEST(LogReg, ZeroWeightsGiveZeroLogits) {
  const auto m = TrainedModel::linear(Matrix(3, 4, 0.0), {0, 0, 0});
  const Matrix z = m.decision_scores(Matrix(5, 4, 1.5));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
  expect_rows_are_distributions(m.probabilities(Matrix(5, 4, 1.5)));
}

TEST(LogReg, StrongerPenaltyShrinksWeights) {
  const auto s = standardized("separable2");
  const auto weak = fit(LearnerSpec::logreg(1.0), s.X_train, s.y_train, s.classes);
  const auto strong = fit(LearnerSpec::logreg(10.0), s.X_train, s.y_train, s.classes);
  auto norm = [](const TrainedModel& m) {
    double t = 0;
    for (double w : std::get<LogRegState>(m.state()).weights.data()) t += w * w;
    return t;
  };
  EXPECT_LT(norm(strong), norm(weak));
}

TEST(Knn, OneNeighbourMemorizes) {
  const auto s = standardized("interact3");
  const auto m = fit(LearnerSpec::knn(1), s.X_train, s.y_train, s.classes);
  EXPECT_EQ(accuracy(m.predict(s.X_train), s.y_train), 1.0);
  EXPECT_FALSE(m.has_margin());
}

TEST(Knn, VoteFractions) {
  const Matrix X{{0.0}, {1.0}, {2.0}, {10.0}};
  const auto m = fit(LearnerSpec::knn(3), X, {0, 0, 1, 1}, 2);
  const Matrix p = m.probabilities(Matrix{{0.5}});
  EXPECT_DOUBLE_EQ(p(0, 0), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(p(0, 1), 1.0 / 3.0);
}

TEST(Knn, DistanceWeightingCoincidentPoint) {
  const Matrix X{{0.0}, {1.0}, {1.1}, {1.2}};
  const auto m = fit(LearnerSpec::knn(4, KnnWeighting::distance), X, {0, 1, 1, 1}, 2);
  EXPECT_EQ(m.predict(Matrix{{0.0}})[0], 0);
}

TEST(Knn, ScanOrderDoesNotChangeScores) {
  const auto s = standardized("interact3");
  const auto f = fit(LearnerSpec::knn(5), s.X_train, s.y_train, s.classes);
  const auto r = fit(LearnerSpec::knn(5, KnnWeighting::uniform, ScanOrder::reverse), s.X_train,
                     s.y_train, s.classes);
  EXPECT_EQ(f.probabilities(s.X_test), r.probabilities(s.X_test));
  const auto fd = fit(LearnerSpec::knn(5, KnnWeighting::distance), s.X_train, s.y_train, s.classes);
  const auto rd = fit(LearnerSpec::knn(5, KnnWeighting::distance, ScanOrder::reverse), s.X_train,
                      s.y_train, s.classes);
  EXPECT_EQ(fd.probabilities(s.X_test), rd.probabilities(s.X_test));
}

TEST(Knn, KLargerThanTrainingSetRejected) {
  EXPECT_THROW(fit(LearnerSpec::knn(10), Matrix{{0.0}, {1.0}}, {0, 1}, 2), ConfigError);
}

TEST(Forest, DepthZeroSingleTreePredictsMajority) {
  const Matrix X{{0.0}, {1.0}, {2.0}, {3.0}, {4.0}};
  const std::vector<int> y{1, 1, 1, 0, 1};
  const auto m = fit(LearnerSpec::forest(1, 0, FeatureRule::all, 3), X, y, 2);
  const auto pred = m.predict(X);
  for (int p : pred) EXPECT_EQ(p, 1);
}

TEST(Forest, DeterministicForSeed) {
  const auto s = standardized("interact3");
  const auto spec = LearnerSpec::forest(20, std::nullopt, FeatureRule::sqrt, 5);
  const auto a = fit(spec, s.X_train, s.y_train, s.classes);
  const auto b = fit(spec, s.X_train, s.y_train, s.classes);
  EXPECT_EQ(a.probabilities(s.X_test), b.probabilities(s.X_test));
  expect_rows_are_distributions(a.probabilities(s.X_test));
  auto other = spec;
  other.seed = 6;
  const auto c = fit(other, s.X_train, s.y_train, s.classes);
  EXPECT_NE(a.probabilities(s.X_test), c.probabilities(s.X_test));
}

TEST(Forest, CandidateCountsFollowFeatureRule) {
  EXPECT_EQ(candidate_feature_count(FeatureRule::sqrt, 8), 3u);
  EXPECT_EQ(candidate_feature_count(FeatureRule::log2, 8), 3u);
  EXPECT_EQ(candidate_feature_count(FeatureRule::sqrt, 64), 8u);
  EXPECT_EQ(candidate_feature_count(FeatureRule::log2, 64), 6u);
  EXPECT_EQ(candidate_feature_count(FeatureRule::all, 64), 64u);
  EXPECT_EQ(candidate_feature_count(FeatureRule::log2, 1), 1u);

  Rng rng(9);
  Matrix X(60, 64);
  std::vector<int> y(60);
  for (std::size_t i = 0; i < 60; ++i) {
    for (std::size_t j = 0; j < 64; ++j) X(i, j) = rng.normal();
    y[i] = X(i, 0) + X(i, 1) > 0 ? 1 : 0;
  }
  for (auto [rule, expected] : {std::pair{FeatureRule::sqrt, 8u}, std::pair{FeatureRule::log2, 6u}}) {
    const auto m = fit(LearnerSpec::forest(3, std::nullopt, rule, 1), X, y, 2);
    std::size_t internal = 0;
    for (const auto& tree : std::get<ForestState>(m.state()).trees) {
      for (const auto& node : tree.nodes) {
        if (node.feature >= 0) {
          EXPECT_EQ(node.candidate_count, expected);
          ++internal;
        }
      }
    }
    EXPECT_GT(internal, 0u);
  }
}

TEST(GbStumps, ZeroRoundsGiveConstantPrior) {
  const auto s = standardized("interact3");
  const auto m = fit(LearnerSpec::gbstumps(0, 0.1, 1), s.X_train, s.y_train, s.classes);
  const Matrix z = m.decision_scores(s.X_test);
  const double prior = std::log((1.0 / 3.0) / (2.0 / 3.0));
  for (double v : z.data()) EXPECT_NEAR(v, prior, 1e-12);
}

TEST(GbStumps, LearnsAndNormalizes) {
  const auto s = standardized("interact3");
  const auto m = fit(LearnerSpec::gbstumps(50, 0.1, 2), s.X_train, s.y_train, s.classes);
  EXPECT_GT(accuracy(m.predict(s.X_train), s.y_train), 0.8);
  expect_rows_are_distributions(m.probabilities(s.X_test));
  EXPECT_TRUE(m.has_margin());
  EXPECT_THROW(LearnerSpec::gbstumps(10, 0.1, 3).validate(), ConfigError);
}

TEST(LearnerSpec, ParamsRoundTrip) {
  for (const auto& spec :
       {LearnerSpec::logreg(0.5, 300), LearnerSpec::knn(7, KnnWeighting::distance, ScanOrder::reverse),
        LearnerSpec::forest(30, std::nullopt, FeatureRule::log2, 11),
        LearnerSpec::forest(30, 2, FeatureRule::all, 0), LearnerSpec::gbstumps(40, 0.05, 2)}) {
    EXPECT_EQ(LearnerSpec::from_params(spec.to_params()), spec) << spec.describe();
  }
  EXPECT_THROW(LearnerSpec::from_params({{"family", "svm"}}), ConfigError);
  EXPECT_THROW(LearnerSpec::from_params({{"family", "knn"}, {"depth", "2"}}), ConfigError);
  EXPECT_THROW(LearnerSpec::logreg(0.0).validate(), ConfigError);
}

TEST(TrainedModel, RejectsWrongWidth) {
  const auto m = TrainedModel::linear(Matrix(2, 3, 1.0), {0, 0});
  EXPECT_THROW(m.decision_scores(Matrix(1, 2)), MismatchError);
}
