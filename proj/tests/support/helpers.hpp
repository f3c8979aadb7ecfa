#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "delta_audit/learners.hpp"
#include "delta_audit/matrix.hpp"
#include "delta_audit/model_iface.hpp"
#include "delta_audit/rng.hpp"

namespace testing_support {

using delta_audit::Matrix;

inline std::shared_ptr<delta_audit::BuiltinScoreModel> linear_model(const Matrix& W,
                                                                    std::vector<double> b) {
  return std::make_shared<delta_audit::BuiltinScoreModel>(
      std::make_shared<const delta_audit::TrainedModel>(
          delta_audit::TrainedModel::linear(W, std::move(b))));
}

inline Matrix random_matrix(delta_audit::Rng& rng, std::size_t rows, std::size_t cols,
                            double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

// Counts batch calls and rows scored by the wrapped model.
class CountingModel final : public delta_audit::ScoreModel {
 public:
  explicit CountingModel(std::shared_ptr<const delta_audit::ScoreModel> inner)
      : inner_(std::move(inner)) {}

  delta_audit::Capabilities capabilities() const override { return inner_->capabilities(); }
  int class_count() const override { return inner_->class_count(); }
  std::string tag() const override { return inner_->tag(); }
  Matrix margins(const Matrix& X) const override {
    ++calls;
    rows += X.rows();
    return inner_->margins(X);
  }
  Matrix probabilities(const Matrix& X) const override {
    ++calls;
    rows += X.rows();
    return inner_->probabilities(X);
  }

  mutable std::atomic<std::size_t> calls{0};
  mutable std::atomic<std::size_t> rows{0};

 private:
  std::shared_ptr<const delta_audit::ScoreModel> inner_;
};

// Probability-only model returning fixed rows regardless of input values.
class TableModel final : public delta_audit::ScoreModel {
 public:
  explicit TableModel(Matrix table, bool margin = false)
      : table_(std::move(table)), margin_(margin) {}

  delta_audit::Capabilities capabilities() const override { return {margin_, !margin_}; }
  int class_count() const override { return static_cast<int>(table_.cols()); }
  std::string tag() const override { return "table"; }
  Matrix margins(const Matrix& X) const override { return pick(X); }
  Matrix probabilities(const Matrix& X) const override { return pick(X); }

 private:
  Matrix pick(const Matrix& X) const {
    Matrix out(X.rows(), table_.cols());
    for (std::size_t i = 0; i < X.rows(); ++i)
      for (std::size_t c = 0; c < table_.cols(); ++c) out(i, c) = table_(i % table_.rows(), c);
    return out;
  }

  Matrix table_;
  bool margin_;
};

}  // namespace testing_support
