#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "delta_audit/matrix.hpp"

namespace delta_audit {

enum class Family { logreg, knn, forest, gbstumps };
enum class KnnWeighting { uniform, distance };
// Order in which the exact neighbour search visits training rows. The result
// does not depend on it; it only exists to build a cosmetic A/B pair.
enum class ScanOrder { forward, reverse };
enum class FeatureRule { sqrt, log2, all };

std::string to_string(Family f);
Family parse_family(const std::string& s);

struct LearnerSpec {
  Family family = Family::logreg;

  // logreg
  double l2_strength = 1.0;
  int max_iterations = 2000;

  // knn
  int k = 5;
  KnnWeighting weighting = KnnWeighting::uniform;
  ScanOrder scan_order = ScanOrder::forward;

  // forest / gbstumps (nullopt = unlimited depth, forest only)
  std::optional<int> max_depth;
  int n_trees = 100;
  FeatureRule feature_rule = FeatureRule::sqrt;
  std::uint64_t seed = 0;

  // gbstumps
  int n_rounds = 100;
  double learning_rate = 0.1;

  static LearnerSpec logreg(double l2_strength, int max_iterations = 2000);
  static LearnerSpec knn(int k, KnnWeighting w = KnnWeighting::uniform,
                         ScanOrder order = ScanOrder::forward);
  static LearnerSpec forest(int n_trees, std::optional<int> max_depth, FeatureRule rule,
                            std::uint64_t seed);
  static LearnerSpec gbstumps(int n_rounds, double learning_rate, int max_depth);

  // Throws ConfigError. train_size = 0 skips the k <= train size check.
  void validate(std::size_t train_size = 0) const;

  // Family-specific key/value view used by the config file.
  std::map<std::string, std::string> to_params() const;
  static LearnerSpec from_params(const std::map<std::string, std::string>& params);

  std::string describe() const;

  bool operator==(const LearnerSpec&) const = default;
};

// Number of candidate features examined per forest node.
std::size_t candidate_feature_count(FeatureRule rule, std::size_t d);

struct LogRegState {
  Matrix weights;  // C x d
  std::vector<double> bias;
  int iterations = 0;
  double gradient_norm = 0.0;
};

struct KnnState {
  Matrix X;
  std::vector<int> y;
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> value;  // class fractions (forest) or leaf output (gbstumps: size 1)
  std::size_t candidate_count = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;
  const TreeNode& leaf_for(std::span<const double> x) const;
};

struct ForestState {
  std::vector<Tree> trees;
};

struct GbState {
  std::vector<double> init;                // per class prior log-odds
  std::vector<std::vector<Tree>> rounds;   // rounds[r][class]
};

class TrainedModel {
 public:
  TrainedModel(LearnerSpec spec, int classes, std::size_t features,
               std::variant<LogRegState, KnnState, ForestState, GbState> state,
               std::vector<std::string> warnings = {});

  // Logistic-regression model with given weights (C x d) and biases.
  static TrainedModel linear(const Matrix& weights, std::vector<double> bias);

  const LearnerSpec& spec() const { return spec_; }
  int class_count() const { return classes_; }
  std::size_t feature_count() const { return features_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  // logreg and gbstumps expose margins; every family exposes probabilities.
  bool has_margin() const;
  bool has_probability() const { return true; }

  // n x C. Margin-path families return raw margins (logits / additive
  // log-odds); probability-path families return class probabilities.
  Matrix decision_scores(const Matrix& X) const;
  Matrix probabilities(const Matrix& X) const;
  std::vector<int> predict(const Matrix& X) const;

  const std::variant<LogRegState, KnnState, ForestState, GbState>& state() const {
    return state_;
  }

 private:
  void check_width(const Matrix& X) const;

  LearnerSpec spec_;
  int classes_;
  std::size_t features_;
  std::variant<LogRegState, KnnState, ForestState, GbState> state_;
  std::vector<std::string> warnings_;
};

TrainedModel fit(const LearnerSpec& spec, const Matrix& X_train, const std::vector<int>& y_train,
                 int class_count);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

}  // namespace delta_audit
