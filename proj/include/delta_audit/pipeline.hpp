#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "delta_audit/config.hpp"
#include "delta_audit/matrix.hpp"
#include "delta_audit/model_iface.hpp"
#include "delta_audit/suite.hpp"

namespace delta_audit {

enum class Verdict { benign, behaviour_aligned, risky, unclassified };

std::string to_string(Verdict v);
Verdict parse_verdict(const std::string& s);

// Magnitude boundaries used by classify_verdict: config values for a single
// pair, quartiles of mag_l1 for a batch.
struct MagnitudeBoundaries {
  double bottom_quartile = 0.0;
  double median = 0.0;
  std::string source = "config";

  static MagnitudeBoundaries from_thresholds(const VerdictThresholds& t);
  bool operator==(const MagnitudeBoundaries&) const = default;
};

struct VerdictResult {
  Verdict verdict = Verdict::unclassified;
  std::vector<std::string> warnings;
};

VerdictResult classify_verdict(const DeltaMetrics& metrics, const VerdictThresholds& thresholds,
                               const MagnitudeBoundaries& boundaries);

struct PerSampleRow {
  std::size_t test_index = 0;  // row index within the test split
  int y_true = 0;
  int pred_A = 0;
  int pred_B = 0;
  int anchor = 0;
  double delta_f = 0.0;
  double delta_l1 = 0.0;
  double jsd = 0.0;
  double rank_overlap = 0.0;
  double group_ratio = 0.0;
  std::vector<double> delta_phi;
};

struct DeltaReport {
  AuditConfig config;
  std::string dataset_name;
  std::vector<std::string> feature_names;
  int class_count = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t n_audited = 0;
  std::string model_tag_A;
  std::string model_tag_B;

  // Full test split; accuracies are recomputable from these.
  std::vector<int> y_test;
  std::vector<int> pred_A_test;
  std::vector<int> pred_B_test;
  double accuracy_A = 0.0;
  double accuracy_B = 0.0;

  // Cohorts on the audited (capped) rows.
  std::size_t fixes = 0;
  std::size_t regressions = 0;

  std::vector<double> perm_importance;
  std::vector<std::size_t> perm_top_features;

  DeltaMetrics metrics;
  MagnitudeBoundaries boundaries;
  Verdict verdict = Verdict::unclassified;
  std::vector<PerSampleRow> per_sample;
  std::vector<std::string> warnings;
};

// Standardized data handed to audit_models.
struct AuditData {
  std::string dataset_name;
  std::vector<std::string> feature_names;
  int class_count = 0;
  Matrix X_train;
  Matrix X_test;
  std::vector<int> y_test;
};

std::vector<std::size_t> permutation_importance_ranking(const std::vector<double>& importance,
                                                        std::size_t m);

// importance_j = mean over repeats of (accuracy - accuracy with column j
// shuffled). Returns the per-feature importances.
std::vector<double> permutation_importance(const ScoreModel& model, const Matrix& X,
                                           const std::vector<int>& y, std::size_t repeats,
                                           std::uint64_t seed);

struct Cohorts {
  std::vector<std::size_t> fixes;
  std::vector<std::size_t> regressions;
};

Cohorts cohorts(const std::vector<int>& pred_A, const std::vector<int>& pred_B,
                const std::vector<int>& y_true);

// At most `cap` row indices, allocated across strata by largest remainder
// and drawn with a seeded shuffle. Returned sorted.
std::vector<std::size_t> stratified_cap(const std::vector<int>& strata, std::size_t cap,
                                        std::uint64_t seed);

// Runs the suite on already-built models. Stages are tagged in StageError.
DeltaReport audit_models(const AuditConfig& config, const ScoreModel& model_A,
                         const ScoreModel& model_B, const AuditData& data);

// Loads data, trains or attaches both models, and audits them.
DeltaReport run_audit(const AuditConfig& config);

struct BatchFailure {
  std::string name;
  std::string stage;
  std::string message;
};

struct FamilyAggregate {
  std::string family;
  std::size_t audits = 0;
  double mag_mean = 0.0;
  double mag_std = 0.0;
  double dce_mean = 0.0;
  double dce_std = 0.0;
  // Over audits with a defined BAC.
  std::size_t bac_count = 0;
  std::optional<double> bac_mean;
  std::optional<double> bac_std;
};

struct BatchResult {
  std::vector<DeltaReport> reports;
  std::vector<BatchFailure> failures;
  std::vector<FamilyAggregate> aggregates;
  MagnitudeBoundaries boundaries;
};

// Linear-interpolation quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> values, double q);

// Reclassifies `reports` against quartiles of their mag_l1 and aggregates by family.
void finalize_batch(BatchResult& batch);

BatchResult run_batch(const std::vector<AuditConfig>& configs);

}  // namespace delta_audit
