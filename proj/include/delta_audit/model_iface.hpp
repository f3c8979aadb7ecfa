#pragma once

#include <memory>
#include <string>
#include <vector>

#include "delta_audit/learners.hpp"
#include "delta_audit/matrix.hpp"

namespace delta_audit {

// Additive guard for the clamped log-odds branch.
inline constexpr double kLogOddsEpsilon = 1e-9;

struct Capabilities {
  bool has_margin = false;
  bool has_probability = false;
};

// Behavioural contract of one model version. Implementations must be safe to
// call concurrently.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual Capabilities capabilities() const = 0;
  virtual int class_count() const = 0;
  virtual std::string tag() const = 0;

  // n x C per-class margins. Only called when capabilities().has_margin.
  virtual Matrix margins(const Matrix& X) const = 0;
  // n x C class probabilities. Only called when capabilities().has_probability.
  virtual Matrix probabilities(const Matrix& X) const = 0;

  // Margins if available, else probabilities.
  Matrix preferred_scores(const Matrix& X) const;
  // Argmax of preferred_scores, ties to the lowest class index.
  std::vector<int> predict(const Matrix& X) const;
};

class BuiltinScoreModel final : public ScoreModel {
 public:
  explicit BuiltinScoreModel(std::shared_ptr<const TrainedModel> model);

  Capabilities capabilities() const override;
  int class_count() const override { return model_->class_count(); }
  std::string tag() const override { return model_->spec().describe(); }
  Matrix margins(const Matrix& X) const override;
  Matrix probabilities(const Matrix& X) const override;

  const TrainedModel& model() const { return *model_; }

 private:
  std::shared_ptr<const TrainedModel> model_;
};

// Per-sample anchor class c(x) and anchored score f(x).
struct AnchoredScore {
  std::vector<int> anchors;
  std::vector<double> values;
};

// Expands a single binary decision column m into per-class margins (-m, m).
Matrix expand_binary_margin(const Matrix& single_column);

// log(p / (1 - p)); switches to log((p + eps) / (1 - p + eps)) whenever p or
// 1 - p falls below eps so the result stays finite.
double anchored_log_odds(double p);

std::vector<int> anchor_classes(const ScoreModel& anchor_model, const Matrix& X);

AnchoredScore anchored_score(const ScoreModel& model, const Matrix& X,
                             const std::vector<int>& anchors);

// f_B - f_A per sample; throws MismatchError if the anchors differ.
std::vector<double> delta_f(const AnchoredScore& score_A, const AnchoredScore& score_B);

}  // namespace delta_audit
