#include "delta_audit/explainer.hpp"

#include <algorithm>
#include <cmath>

#include "delta_audit/error.hpp"

namespace delta_audit {

std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::mean: return "mean";
    case BaselineKind::median: return "median";
    case BaselineKind::averaged: return "averaged";
  }
  return "mean";
}

BaselineKind parse_baseline_kind(const std::string& s) {
  if (s == "mean") return BaselineKind::mean;
  if (s == "median") return BaselineKind::median;
  if (s == "averaged") return BaselineKind::averaged;
  throw ConfigError("unknown baseline kind '" + s + "' (mean|median|averaged)");
}

std::string to_string(GroupMode m) { return m == GroupMode::scalar ? "scalar" : "revector"; }

GroupMode parse_group_mode(const std::string& s) {
  if (s == "scalar") return GroupMode::scalar;
  if (s == "revector") return GroupMode::revector;
  throw ConfigError("unknown group_mode '" + s + "' (scalar|revector)");
}

Baseline make_baseline(const Matrix& X_train_std, BaselineKind kind) {
  if (X_train_std.rows() == 0) throw DataError("make_baseline: empty training matrix");
  const std::size_t d = X_train_std.cols();
  std::vector<double> mean(d), median(d);
  for (std::size_t j = 0; j < d; ++j) {
    auto col = X_train_std.column(j);
    mean[j] = compensated_mean(col);
    std::sort(col.begin(), col.end());
    median[j] = col[(col.size() - 1) / 2];
  }
  Baseline b{kind, {}};
  switch (kind) {
    case BaselineKind::mean: b.values = std::move(mean); break;
    case BaselineKind::median: b.values = std::move(median); break;
    case BaselineKind::averaged:
      b.values.resize(d);
      for (std::size_t j = 0; j < d; ++j) b.values[j] = 0.5 * (mean[j] + median[j]);
      break;
  }
  return b;
}

AttributionMatrix occlusion_attributions(const ScoreModel& model, const Matrix& X,
                                         const std::vector<int>& anchors,
                                         const Baseline& baseline) {
  if (baseline.values.size() != X.cols()) {
    throw MismatchError("occlusion: baseline has " + std::to_string(baseline.values.size()) +
                        " entries for " + std::to_string(X.cols()) + " features");
  }
  AttributionMatrix out;
  out.baseline = baseline;
  out.anchors = anchors;
  out.values = Matrix(X.rows(), X.cols());
  out.scores = anchored_score(model, X, anchors).values;

  Matrix clamped = X;
  for (std::size_t j = 0; j < X.cols(); ++j) {
    for (std::size_t i = 0; i < X.rows(); ++i) clamped(i, j) = baseline.values[j];
    std::vector<double> occluded;
    try {
      occluded = anchored_score(model, clamped, anchors).values;
    } catch (const std::exception& e) {
      throw Error("occlusion of feature " + std::to_string(j) + " failed: " + e.what());
    }
    for (std::size_t i = 0; i < X.rows(); ++i) {
      out.values(i, j) = out.scores[i] - occluded[i];
    }
    for (std::size_t i = 0; i < X.rows(); ++i) clamped(i, j) = X(i, j);
  }
  return out;
}

namespace {

void check_provenance(const Baseline& a, const Baseline& b, const std::vector<int>& anchors_a,
                      const std::vector<int>& anchors_b, const char* where) {
  if (a.kind != b.kind || a.values != b.values) {
    throw MismatchError(std::string(where) + ": attributions use different baselines (" +
                        to_string(a.kind) + " vs " + to_string(b.kind) + ")");
  }
  if (anchors_a != anchors_b) {
    throw MismatchError(std::string(where) + ": attributions use different anchor classes");
  }
}

}  // namespace

DeltaMatrix delta_attributions(const AttributionMatrix& attr_A, const AttributionMatrix& attr_B) {
  check_provenance(attr_A.baseline, attr_B.baseline, attr_A.anchors, attr_B.anchors,
                   "delta_attributions");
  if (attr_A.values.rows() != attr_B.values.rows() ||
      attr_A.values.cols() != attr_B.values.cols()) {
    throw MismatchError("delta_attributions: shape mismatch");
  }
  DeltaMatrix out{Matrix(attr_A.values.rows(), attr_A.values.cols()), attr_A.baseline,
                  attr_A.anchors};
  auto a = attr_A.values.data();
  auto b = attr_B.values.data();
  auto o = out.values.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = b[k] - a[k];
  return out;
}

GroupedOcclusion grouped_occlusion_ratio(const ScoreModel& model_A, const ScoreModel& model_B,
                                         const Matrix& X, const AttributionMatrix& attr_A,
                                         const AttributionMatrix& attr_B, std::size_t k,
                                         GroupMode mode) {
  const DeltaMatrix delta = delta_attributions(attr_A, attr_B);
  const std::size_t n = X.rows();
  const std::size_t d = X.cols();
  if (k < 1) throw ConfigError("grouped occlusion: k must be >= 1");
  if (k > d) {
    throw ConfigError("grouped occlusion: k=" + std::to_string(k) + " exceeds " +
                      std::to_string(d) + " features");
  }
  const auto& b = attr_A.baseline.values;

  GroupedOcclusion out;
  out.ratios.resize(n);
  out.groups.resize(n);
  Matrix clamped = X;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> magnitude(d);
    for (std::size_t j = 0; j < d; ++j) magnitude[j] = std::abs(attr_B.values(i, j));
    out.groups[i] = top_k_indices(magnitude, k);
    for (auto j : out.groups[i]) clamped(i, j) = b[j];
  }

  std::vector<double> denominators(n);
  if (mode == GroupMode::scalar) {
    const auto fa = anchored_score(model_A, clamped, attr_A.anchors).values;
    const auto fb = anchored_score(model_B, clamped, attr_B.anchors).values;
    out.group_delta.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double ga = attr_A.scores[i] - fa[i];
      const double gb = attr_B.scores[i] - fb[i];
      out.group_delta[i] = gb - ga;
      denominators[i] = std::abs(out.group_delta[i]);
    }
  } else {
    const auto ra = occlusion_attributions(model_A, clamped, attr_A.anchors, attr_A.baseline);
    const auto rb = occlusion_attributions(model_B, clamped, attr_B.anchors, attr_B.baseline);
    const auto rd = delta_attributions(ra, rb);
    for (std::size_t i = 0; i < n; ++i) denominators[i] = l1_norm(rd.values.row(i));
  }

  for (std::size_t i = 0; i < n; ++i) {
    const double num = l1_norm(delta.values.row(i));
    out.ratios[i] = (num == 0.0 && denominators[i] == 0.0)
                        ? 0.0
                        : num / (denominators[i] + kRatioEpsilon);
  }
  out.rho = compensated_mean(out.ratios);
  return out;
}

DeltaExplainer make_delta_explainer(const ScoreModel& model_A, const ScoreModel& model_B,
                                    std::vector<int> anchors, Baseline baseline) {
  return [&model_A, &model_B, anchors = std::move(anchors),
          baseline = std::move(baseline)](const Matrix& X) {
    const auto a = occlusion_attributions(model_A, X, anchors, baseline);
    const auto b = occlusion_attributions(model_B, X, anchors, baseline);
    return delta_attributions(a, b).values;
  };
}

}  // namespace delta_audit
