#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "delta_audit/matrix.hpp"
#include "delta_audit/model_iface.hpp"

namespace delta_audit {

enum class BaselineKind { mean, median, averaged };

std::string to_string(BaselineKind k);
BaselineKind parse_baseline_kind(const std::string& s);

// Reference point in standardized space used for clamping.
struct Baseline {
  BaselineKind kind = BaselineKind::mean;
  std::vector<double> values;
};

// Occlusion attributions of one model. `scores` holds the unclamped anchored
// score f(x) for every row, which the occlusion pass computes anyway.
struct AttributionMatrix {
  Matrix values;
  std::vector<double> scores;
  Baseline baseline;
  std::vector<int> anchors;
};

struct DeltaMatrix {
  Matrix values;
  Baseline baseline;
  std::vector<int> anchors;
};

// Column means, lower medians, or their elementwise average.
Baseline make_baseline(const Matrix& X_train_std, BaselineKind kind);

// phi_j(x) = f(x) - f(x with x_j <- b_j). Scores one unclamped batch and one
// batch per feature column: n * (d + 1) rows in total.
AttributionMatrix occlusion_attributions(const ScoreModel& model, const Matrix& X,
                                         const std::vector<int>& anchors,
                                         const Baseline& baseline);

// phi_B - phi_A. Throws MismatchError unless both share baseline and anchors.
DeltaMatrix delta_attributions(const AttributionMatrix& attr_A, const AttributionMatrix& attr_B);

enum class GroupMode { scalar, revector };

std::string to_string(GroupMode m);
GroupMode parse_group_mode(const std::string& s);

struct GroupedOcclusion {
  double rho = 0.0;
  std::vector<double> ratios;                // per sample
  std::vector<std::vector<std::size_t>> groups;  // top-k features by |phi_B|
  std::vector<double> group_delta;           // scalar mode: g_B - g_A
};

inline constexpr double kRatioEpsilon = 1e-12;

// Jointly clamps the top-k features of |phi_B| per sample and compares the
// per-feature delta mass with the group's delta. A sample whose numerator and
// denominator both vanish contributes 0.
GroupedOcclusion grouped_occlusion_ratio(const ScoreModel& model_A, const ScoreModel& model_B,
                                         const Matrix& X, const AttributionMatrix& attr_A,
                                         const AttributionMatrix& attr_B, std::size_t k,
                                         GroupMode mode = GroupMode::scalar);

// Maps a batch of rows to Delta-phi for a fixed model pair, baseline and anchor
// vector (row i uses anchors[i]).
using DeltaExplainer = std::function<Matrix(const Matrix& X)>;

DeltaExplainer make_delta_explainer(const ScoreModel& model_A, const ScoreModel& model_B,
                                    std::vector<int> anchors, Baseline baseline);

}  // namespace delta_audit
