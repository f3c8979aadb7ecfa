#include "delta_audit/suite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "delta_audit/error.hpp"
#include "delta_audit/rng.hpp"

namespace delta_audit {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw MismatchError(std::string(where) + ": shape mismatch");
  }
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

std::vector<double> abs_normalized(std::span<const double> row, double norm) {
  std::vector<double> s(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) s[j] = std::abs(row[j]) / norm;
  return s;
}

}  // namespace

double delta_magnitude(const Matrix& delta) {
  CompensatedSum total;
  for (std::size_t i = 0; i < delta.rows(); ++i) total.add(l1_norm(delta.row(i)));
  return delta.rows() == 0 ? 0.0 : total.value() / static_cast<double>(delta.rows());
}

std::optional<double> topk_concentration(const Matrix& delta, std::size_t K) {
  if (K < 1) throw ConfigError("topk_concentration: K must be >= 1");
  CompensatedSum total;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < delta.rows(); ++i) {
    const double norm = l1_norm(delta.row(i));
    if (norm == 0.0) continue;
    const auto s = abs_normalized(delta.row(i), norm);
    CompensatedSum mass;
    for (auto j : top_k_indices(s, K)) mass.add(s[j]);
    total.add(mass.value());
    ++counted;
  }
  if (counted == 0) return std::nullopt;
  return total.value() / static_cast<double>(counted);
}

std::optional<double> delta_entropy(const Matrix& delta) {
  CompensatedSum total;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < delta.rows(); ++i) {
    const double norm = l1_norm(delta.row(i));
    if (norm == 0.0) continue;
    CompensatedSum h;
    for (double s : abs_normalized(delta.row(i), norm)) {
      if (s > 0.0) h.add(-s * std::log(s));
    }
    total.add(h.value());
    ++counted;
  }
  if (counted == 0) return std::nullopt;
  return total.value() / static_cast<double>(counted);
}

RankOverlap rank_overlap(const Matrix& phi_A, const Matrix& phi_B, std::size_t K) {
  require_same_shape(phi_A, phi_B, "rank_overlap");
  RankOverlap out;
  out.per_sample.resize(phi_A.rows());
  std::vector<double> a(phi_A.cols()), b(phi_B.cols());
  for (std::size_t i = 0; i < phi_A.rows(); ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      a[j] = std::abs(phi_A(i, j));
      b[j] = std::abs(phi_B(i, j));
    }
    auto ta = top_k_indices(a, K);
    auto tb = top_k_indices(b, K);
    std::sort(ta.begin(), ta.end());
    std::sort(tb.begin(), tb.end());
    std::vector<std::size_t> inter, uni;
    std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(inter));
    std::set_union(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(uni));
    out.per_sample[i] =
        uni.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
  }
  if (!out.per_sample.empty()) {
    out.mean = compensated_mean(out.per_sample);
    out.median = median_of(out.per_sample);
  }
  return out;
}

double jsd_distributions(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw MismatchError("jsd: length mismatch");
  // Each term is symmetric in (p_j, q_j), so jsd(p, q) == jsd(q, p) bitwise.
  CompensatedSum total;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double m = 0.5 * (p[j] + q[j]);
    double term = 0.0;
    if (p[j] > 0.0) term += p[j] * std::log(p[j] / m);
    if (q[j] > 0.0) term += q[j] * std::log(q[j] / m);
    total.add(0.5 * term);
  }
  return std::clamp(total.value(), 0.0, std::numbers::ln2);
}

std::vector<double> jsd_per_sample(const Matrix& phi_A, const Matrix& phi_B) {
  require_same_shape(phi_A, phi_B, "jsd");
  std::vector<double> out(phi_A.rows());
  for (std::size_t i = 0; i < phi_A.rows(); ++i) {
    const double na = l1_norm(phi_A.row(i));
    const double nb = l1_norm(phi_B.row(i));
    if (na == 0.0 && nb == 0.0) {
      out[i] = 0.0;
    } else if (na == 0.0 || nb == 0.0) {
      out[i] = std::numbers::ln2;
    } else {
      out[i] = jsd_distributions(abs_normalized(phi_A.row(i), na), abs_normalized(phi_B.row(i), nb));
    }
  }
  return out;
}

double jsd(const Matrix& phi_A, const Matrix& phi_B) {
  const auto per = jsd_per_sample(phi_A, phi_B);
  return compensated_mean(per);
}

double dce(const Matrix& delta, const std::vector<double>& delta_f) {
  if (delta.rows() != delta_f.size()) throw MismatchError("dce: length mismatch");
  std::vector<double> gaps(delta.rows());
  for (std::size_t i = 0; i < delta.rows(); ++i) {
    CompensatedSum s;
    for (double v : delta.row(i)) s.add(v);
    gaps[i] = std::abs(s.value() - delta_f[i]);
  }
  return compensated_mean(gaps);
}

double pearson_or_nan(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw MismatchError("pearson: length mismatch");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (a.size() < 2) return nan;
  const double ma = compensated_mean(a);
  const double mb = compensated_mean(b);
  CompensatedSum saa, sbb, sab;
  double max_a = 0.0, max_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    saa.add(da * da);
    sbb.add(db * db);
    sab.add(da * db);
    max_a = std::max(max_a, std::abs(a[i]));
    max_b = std::max(max_b, std::abs(b[i]));
  }
  const auto n = static_cast<double>(a.size());
  const double sd_a = std::sqrt(saa.value() / n);
  const double sd_b = std::sqrt(sbb.value() / n);
  // Spread at rounding level of the values themselves counts as constant.
  if (sd_a <= 1e-12 * max_a || sd_b <= 1e-12 * max_b || sd_a == 0.0 || sd_b == 0.0) return nan;
  return std::clamp(sab.value() / std::sqrt(saa.value() * sbb.value()), -1.0, 1.0);
}

std::optional<double> bac(const Matrix& delta, const std::vector<double>& delta_f) {
  if (delta.rows() != delta_f.size()) throw MismatchError("bac: length mismatch");
  std::vector<double> mass(delta.rows()), behaviour(delta.rows());
  for (std::size_t i = 0; i < delta.rows(); ++i) {
    mass[i] = l1_norm(delta.row(i));
    behaviour[i] = std::abs(delta_f[i]);
  }
  const double r = pearson_or_nan(mass, behaviour);
  if (std::isnan(r)) return std::nullopt;
  return r;
}

CohortFocus codf(const Matrix& delta, const std::vector<std::size_t>& top_features,
                 const std::vector<std::size_t>& fixes,
                 const std::vector<std::size_t>& regressions) {
  auto focus = [&](const std::vector<std::size_t>& cohort) -> std::optional<double> {
    if (cohort.empty()) return std::nullopt;
    std::vector<double> shares(cohort.size(), 0.0);
    for (std::size_t c = 0; c < cohort.size(); ++c) {
      const auto row = delta.row(cohort[c]);
      const double norm = l1_norm(row);
      if (norm == 0.0) continue;
      CompensatedSum on_top;
      for (auto j : top_features) on_top.add(std::abs(row[j]) / norm);
      shares[c] = on_top.value();
    }
    return compensated_mean(shares);
  };
  return {focus(fixes), focus(regressions)};
}

StabilityResult delta_stability(const DeltaExplainer& explain, const Matrix& X,
                                const Matrix& delta_at_X, const std::vector<double>& sigmas,
                                std::size_t draws_per_sample, std::uint64_t seed) {
  require_same_shape(X, delta_at_X, "delta_stability");
  if (draws_per_sample < 1) throw ConfigError("delta_stability: draws_per_sample must be >= 1");
  StabilityResult out;
  for (std::size_t s = 0; s < sigmas.size(); ++s) {
    const double sigma = sigmas[s];
    if (!(sigma > 0.0)) throw ConfigError("delta_stability: sigma must be > 0");
    StabilityTrace trace;
    trace.sigma = sigma;
    std::vector<double> all;
    for (std::size_t draw = 0; draw < draws_per_sample; ++draw) {
      Rng rng = Rng::stream(seed, (static_cast<std::uint64_t>(s) << 32) | draw);
      Matrix noise(X.rows(), X.cols());
      for (double& e : noise.data()) e = sigma * rng.normal();
      Matrix perturbed = X;
      auto pd = perturbed.data();
      auto nd = noise.data();
      for (std::size_t k = 0; k < pd.size(); ++k) pd[k] += nd[k];
      const Matrix moved = explain(perturbed);
      require_same_shape(moved, delta_at_X, "delta_stability");
      std::vector<double> ratios(X.rows());
      for (std::size_t i = 0; i < X.rows(); ++i) {
        CompensatedSum diff;
        for (std::size_t j = 0; j < X.cols(); ++j) {
          diff.add(std::abs(moved(i, j) - delta_at_X(i, j)));
        }
        ratios[i] = diff.value() / (l2_norm(noise.row(i)) + kRatioEpsilon);
      }
      all.insert(all.end(), ratios.begin(), ratios.end());
      trace.noise.push_back(std::move(noise));
      trace.ratios.push_back(std::move(ratios));
    }
    trace.mean = compensated_mean(all);
    out.by_sigma[sigma] = trace.mean;
    out.traces.push_back(std::move(trace));
  }
  return out;
}

double baseline_sensitivity(const Matrix& delta_mean, const Matrix& delta_median) {
  require_same_shape(delta_mean, delta_median, "baseline_sensitivity");
  std::vector<double> gaps(delta_mean.rows());
  for (std::size_t i = 0; i < delta_mean.rows(); ++i) {
    CompensatedSum s;
    for (std::size_t j = 0; j < delta_mean.cols(); ++j) {
      s.add(std::abs(delta_mean(i, j) - delta_median(i, j)));
    }
    gaps[i] = s.value();
  }
  return compensated_mean(gaps);
}

double baseline_sensitivity(const DeltaMatrix& delta_mean, const DeltaMatrix& delta_median) {
  if (delta_mean.anchors != delta_median.anchors) {
    throw MismatchError("baseline_sensitivity: deltas use different anchor classes");
  }
  return baseline_sensitivity(delta_mean.values, delta_median.values);
}

}  // namespace delta_audit
