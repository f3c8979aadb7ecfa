#include "delta_audit/model_iface.hpp"

#include <cmath>

#include "delta_audit/error.hpp"

namespace delta_audit {

Matrix ScoreModel::preferred_scores(const Matrix& X) const {
  return capabilities().has_margin ? margins(X) : probabilities(X);
}

std::vector<int> ScoreModel::predict(const Matrix& X) const {
  const Matrix s = preferred_scores(X);
  std::vector<int> out(s.rows());
  for (std::size_t i = 0; i < s.rows(); ++i) out[i] = static_cast<int>(argmax(s.row(i)));
  return out;
}

BuiltinScoreModel::BuiltinScoreModel(std::shared_ptr<const TrainedModel> model)
    : model_(std::move(model)) {
  if (!model_) throw std::invalid_argument("BuiltinScoreModel: null model");
}

Capabilities BuiltinScoreModel::capabilities() const {
  return {model_->has_margin(), model_->has_probability()};
}

Matrix BuiltinScoreModel::margins(const Matrix& X) const {
  if (!model_->has_margin()) throw Error("model has no margin path: " + tag());
  return model_->decision_scores(X);
}

Matrix BuiltinScoreModel::probabilities(const Matrix& X) const {
  return model_->probabilities(X);
}

Matrix expand_binary_margin(const Matrix& single_column) {
  if (single_column.cols() != 1) throw MismatchError("expand_binary_margin: expected one column");
  Matrix out(single_column.rows(), 2);
  for (std::size_t i = 0; i < single_column.rows(); ++i) {
    out(i, 0) = -single_column(i, 0);
    out(i, 1) = single_column(i, 0);
  }
  return out;
}

double anchored_log_odds(double p) {
  const double q = 1.0 - p;
  if (p < kLogOddsEpsilon || q < kLogOddsEpsilon) {
    return std::log((p + kLogOddsEpsilon) / (q + kLogOddsEpsilon));
  }
  return std::log(p / q);
}

std::vector<int> anchor_classes(const ScoreModel& anchor_model, const Matrix& X) {
  return anchor_model.predict(X);
}

AnchoredScore anchored_score(const ScoreModel& model, const Matrix& X,
                             const std::vector<int>& anchors) {
  if (anchors.size() != X.rows()) {
    throw MismatchError("anchored_score: " + std::to_string(anchors.size()) + " anchors for " +
                        std::to_string(X.rows()) + " rows");
  }
  const Capabilities caps = model.capabilities();
  if (!caps.has_margin && !caps.has_probability) {
    throw Error("model '" + model.tag() + "' exposes neither margins nor probabilities");
  }
  const int C = model.class_count();
  for (int a : anchors) {
    if (a < 0 || a >= C) throw MismatchError("anchored_score: anchor class out of range");
  }
  AnchoredScore out{anchors, std::vector<double>(X.rows())};
  if (X.rows() == 0) return out;
  if (caps.has_margin) {
    const Matrix m = model.margins(X);
    for (std::size_t i = 0; i < X.rows(); ++i) {
      out.values[i] = m(i, static_cast<std::size_t>(anchors[i]));
    }
  } else {
    const Matrix p = model.probabilities(X);
    for (std::size_t i = 0; i < X.rows(); ++i) {
      out.values[i] = anchored_log_odds(p(i, static_cast<std::size_t>(anchors[i])));
    }
  }
  for (double v : out.values) {
    if (!std::isfinite(v)) throw Error("anchored_score: non-finite score from " + model.tag());
  }
  return out;
}

std::vector<double> delta_f(const AnchoredScore& score_A, const AnchoredScore& score_B) {
  if (score_A.anchors != score_B.anchors) {
    throw MismatchError("delta_f: scores were computed with different anchors");
  }
  std::vector<double> out(score_A.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = score_B.values[i] - score_A.values[i];
  return out;
}

}  // namespace delta_audit
