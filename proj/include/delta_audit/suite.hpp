#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "delta_audit/explainer.hpp"
#include "delta_audit/matrix.hpp"

namespace delta_audit {

// All quality-suite values for one audit. std::nullopt is the undefined
// marker (zero-variance BAC, empty cohorts, all-zero delta rows) and is
// serialized as null.
struct DeltaMetrics {
  double mag_l1 = 0.0;
  std::optional<double> topk;
  std::optional<double> entropy;
  double rank_overlap = 1.0;
  double rank_overlap_median = 1.0;
  double jsd = 0.0;
  double dce = 0.0;
  std::optional<double> bac;
  std::optional<double> codf_fixes;
  std::optional<double> codf_regressions;
  std::map<double, double> stability;
  double baseline_sensitivity = 0.0;
  double group_ratio = 0.0;
};

// Mean over rows of ||row||_1.
double delta_magnitude(const Matrix& delta);

// Mean over non-zero rows of the share of |delta| mass on the K largest entries.
std::optional<double> topk_concentration(const Matrix& delta, std::size_t K = 10);

// Mean Shannon entropy (nats) of s = |delta| / ||delta||_1 over non-zero rows.
std::optional<double> delta_entropy(const Matrix& delta);

struct RankOverlap {
  double mean = 1.0;
  double median = 1.0;
  std::vector<double> per_sample;
};

// Jaccard overlap of the top-K index sets of |phi_A| and |phi_B| per row.
RankOverlap rank_overlap(const Matrix& phi_A, const Matrix& phi_B, std::size_t K = 10);

// Jensen-Shannon divergence (natural log) of two probability vectors.
double jsd_distributions(std::span<const double> p, std::span<const double> q);

// Per-row JSD of the normalized |phi| profiles. Both-zero rows give 0,
// exactly-one-zero rows give ln 2.
std::vector<double> jsd_per_sample(const Matrix& phi_A, const Matrix& phi_B);
double jsd(const Matrix& phi_A, const Matrix& phi_B);

// Mean |sum_j delta_j - delta_f|.
double dce(const Matrix& delta, const std::vector<double>& delta_f);

double pearson_or_nan(std::span<const double> a, std::span<const double> b);

// Pearson correlation of ||delta||_1 and |delta_f| across samples.
std::optional<double> bac(const Matrix& delta, const std::vector<double>& delta_f);

struct CohortFocus {
  std::optional<double> fixes;
  std::optional<double> regressions;
};

// Mean share of |delta| mass on `top_features` over each cohort. Zero rows
// contribute 0.
CohortFocus codf(const Matrix& delta, const std::vector<std::size_t>& top_features,
                 const std::vector<std::size_t>& fixes,
                 const std::vector<std::size_t>& regressions);

struct StabilityTrace {
  double sigma = 0.0;
  std::vector<Matrix> noise;                 // one n x d matrix per draw
  std::vector<std::vector<double>> ratios;   // [draw][sample]
  double mean = 0.0;
};

struct StabilityResult {
  std::map<double, double> by_sigma;
  std::vector<StabilityTrace> traces;
};

// For each sigma: perturb every row with N(0, sigma^2 I) noise, recompute
// Delta-phi through `explain`, and average
// ||dphi(x + e) - dphi(x)||_1 / (||e||_2 + 1e-12).
StabilityResult delta_stability(const DeltaExplainer& explain, const Matrix& X,
                                const Matrix& delta_at_X, const std::vector<double>& sigmas,
                                std::size_t draws_per_sample, std::uint64_t seed);

// Mean over rows of ||delta_mean - delta_median||_1.
double baseline_sensitivity(const Matrix& delta_mean, const Matrix& delta_median);
double baseline_sensitivity(const DeltaMatrix& delta_mean, const DeltaMatrix& delta_median);

}  // namespace delta_audit
