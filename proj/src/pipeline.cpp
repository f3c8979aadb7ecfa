#include "delta_audit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

#include "delta_audit/data.hpp"
#include "delta_audit/error.hpp"
#include "delta_audit/explainer.hpp"
#include "delta_audit/learners.hpp"
#include "delta_audit/protocol.hpp"
#include "delta_audit/rng.hpp"

namespace delta_audit {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::benign: return "benign";
    case Verdict::behaviour_aligned: return "behaviour_aligned";
    case Verdict::risky: return "risky";
    case Verdict::unclassified: return "unclassified";
  }
  return "unclassified";
}

Verdict parse_verdict(const std::string& s) {
  if (s == "benign") return Verdict::benign;
  if (s == "behaviour_aligned") return Verdict::behaviour_aligned;
  if (s == "risky") return Verdict::risky;
  if (s == "unclassified") return Verdict::unclassified;
  throw ConfigError("unknown verdict '" + s + "'");
}

MagnitudeBoundaries MagnitudeBoundaries::from_thresholds(const VerdictThresholds& t) {
  return {t.mag_bottom_quartile, t.mag_median, "config"};
}

VerdictResult classify_verdict(const DeltaMetrics& m, const VerdictThresholds& t,
                               const MagnitudeBoundaries& bounds) {
  VerdictResult out;
  if (m.jsd > t.jsd_risky) {
    out.verdict = Verdict::risky;
    return out;
  }
  std::optional<double> bac = m.bac;
  if (!bac) {
    if (m.mag_l1 <= t.dce_zero_tol) {
      // No attribution change at all: the correlation is vacuous.
      bac = 0.0;
      out.warnings.push_back("bac undefined with zero attribution change; treated as 0 for the verdict");
    } else {
      out.warnings.push_back("bac undefined (zero variance); verdict unclassified");
      out.verdict = Verdict::unclassified;
      return out;
    }
  }
  const double b = *bac;
  if (b < t.bac_low && m.mag_l1 >= bounds.median && m.mag_l1 > bounds.bottom_quartile) {
    out.verdict = Verdict::risky;
  } else if (b < t.bac_low && m.mag_l1 <= bounds.bottom_quartile && m.rank_overlap > t.rank_overlap_min &&
             m.dce <= t.dce_zero_tol) {
    out.verdict = Verdict::benign;
  } else if (b > t.bac_high && m.mag_l1 >= bounds.median) {
    out.verdict = Verdict::behaviour_aligned;
  } else {
    out.verdict = Verdict::unclassified;
  }
  return out;
}

std::vector<std::size_t> permutation_importance_ranking(const std::vector<double>& importance,
                                                        std::size_t m) {
  return top_k_indices(importance, m);
}

std::vector<double> permutation_importance(const ScoreModel& model, const Matrix& X,
                                           const std::vector<int>& y, std::size_t repeats,
                                           std::uint64_t seed) {
  if (repeats < 1) throw ConfigError("permutation_importance: repeats must be >= 1");
  if (X.rows() != y.size()) throw MismatchError("permutation_importance: length mismatch");
  const std::size_t d = X.cols();
  const double base = accuracy(model.predict(X), y);
  std::vector<double> importance(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> drops(repeats);
    for (std::size_t r = 0; r < repeats; ++r) {
      Rng rng = Rng::stream(seed, (static_cast<std::uint64_t>(r) << 32) | j);
      std::vector<std::size_t> order(X.rows());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(std::span<std::size_t>(order));
      Matrix shuffled = X;
      for (std::size_t i = 0; i < X.rows(); ++i) shuffled(i, j) = X(order[i], j);
      drops[r] = base - accuracy(model.predict(shuffled), y);
    }
    importance[j] = compensated_mean(drops);
  }
  return importance;
}

Cohorts cohorts(const std::vector<int>& pred_A, const std::vector<int>& pred_B,
                const std::vector<int>& y_true) {
  if (pred_A.size() != y_true.size() || pred_B.size() != y_true.size()) {
    throw MismatchError("cohorts: length mismatch");
  }
  Cohorts out;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const bool a_ok = pred_A[i] == y_true[i];
    const bool b_ok = pred_B[i] == y_true[i];
    if (b_ok && !a_ok) out.fixes.push_back(i);
    if (a_ok && !b_ok) out.regressions.push_back(i);
  }
  return out;
}

std::vector<std::size_t> stratified_cap(const std::vector<int>& strata, std::size_t cap,
                                        std::uint64_t seed) {
  const std::size_t n = strata.size();
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  if (n <= cap) return all;

  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[strata[i]].push_back(i);

  struct Share {
    int key;
    std::size_t take;
    double remainder;
  };
  std::vector<Share> shares;
  std::size_t assigned = 0;
  for (const auto& [key, members] : groups) {
    const double exact = static_cast<double>(cap) * static_cast<double>(members.size()) /
                         static_cast<double>(n);
    const auto take = static_cast<std::size_t>(std::floor(exact));
    shares.push_back({key, take, exact - static_cast<double>(take)});
    assigned += take;
  }
  std::vector<std::size_t> order(shares.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return shares[a].remainder > shares[b].remainder;
  });
  for (std::size_t r = 0; assigned < cap; r = (r + 1) % order.size()) {
    auto& s = shares[order[r]];
    if (s.take < groups[s.key].size()) {
      ++s.take;
      ++assigned;
    }
  }

  std::vector<std::size_t> out;
  std::uint64_t stream = 0;
  for (const auto& s : shares) {
    auto members = groups[s.key];
    Rng rng = Rng::stream(seed, stream++);
    rng.shuffle(std::span<std::size_t>(members));
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(s.take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

// Fixed stream offsets so that stages draw from independent generators.
constexpr std::uint64_t kCapStream = 0x4341505f;
constexpr std::uint64_t kPermStream = 0x5045524d;
constexpr std::uint64_t kNoiseStream = 0x4e4f4953;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return Rng::stream(seed, stream).next();
}

template <typename F>
auto staged(const char* stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const BridgeTimeout& e) {
    throw StageError(stage, e.what(), true);
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

std::vector<int> select(const std::vector<int>& v, const std::vector<std::size_t>& idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

}  // namespace

DeltaReport audit_models(const AuditConfig& config, const ScoreModel& model_A,
                         const ScoreModel& model_B, const AuditData& data) {
  staged("config", [&] { config.validate_settings(); });
  DeltaReport report;
  report.config = config;
  report.dataset_name = data.dataset_name;
  report.feature_names = data.feature_names;
  report.class_count = data.class_count;
  report.n_train = data.X_train.rows();
  report.n_test = data.X_test.rows();
  report.model_tag_A = model_A.tag();
  report.model_tag_B = model_B.tag();
  const std::size_t d = data.X_test.cols();

  staged("attach", [&] {
    if (model_A.class_count() != data.class_count || model_B.class_count() != data.class_count) {
      throw MismatchError("model class counts (" + std::to_string(model_A.class_count()) + ", " +
                          std::to_string(model_B.class_count()) + ") differ from the dataset's " +
                          std::to_string(data.class_count));
    }
    if (data.X_test.rows() == 0) throw DataError("empty test split");
    if (config.group_k > d) {
      throw ConfigError("group_k=" + std::to_string(config.group_k) + " exceeds " +
                        std::to_string(d) + " features");
    }
  });

  staged("predict", [&] {
    report.y_test = data.y_test;
    report.pred_A_test = model_A.predict(data.X_test);
    report.pred_B_test = model_B.predict(data.X_test);
    report.accuracy_A = accuracy(report.pred_A_test, data.y_test);
    report.accuracy_B = accuracy(report.pred_B_test, data.y_test);
  });

  const auto rows = staged("cap", [&] {
    return stratified_cap(data.y_test, config.sample_cap, derive_seed(config.seed, kCapStream));
  });
  report.n_audited = rows.size();
  if (rows.size() < data.X_test.rows()) {
    report.warnings.push_back("suite metrics use " + std::to_string(rows.size()) + " of " +
                              std::to_string(data.X_test.rows()) +
                              " test rows (stratified cap); accuracies use the full test split");
  }
  const Matrix X = data.X_test.select_rows(rows);
  const auto y = select(data.y_test, rows);
  const auto pred_A = select(report.pred_A_test, rows);
  const auto pred_B = select(report.pred_B_test, rows);

  const auto anchors = staged("anchor", [&] {
    return config.anchor == AnchorSource::B ? pred_B : pred_A;
  });

  struct Bases {
    Baseline mean, median, configured;
  };
  const Bases bases = staged("baseline", [&] {
    return Bases{make_baseline(data.X_train, BaselineKind::mean),
                 make_baseline(data.X_train, BaselineKind::median),
                 make_baseline(data.X_train, config.baseline)};
  });

  struct Attributions {
    AttributionMatrix A, B;
    DeltaMatrix delta, delta_mean, delta_median;
  };
  Attributions at = staged("attribution", [&] {
    auto explain_pair = [&](const Baseline& b) {
      return std::pair{occlusion_attributions(model_A, X, anchors, b),
                       occlusion_attributions(model_B, X, anchors, b)};
    };
    auto [a, b] = explain_pair(bases.configured);
    if (config.inject_fault) {
      for (std::size_t i = 0; i < b.values.rows(); ++i) b.values(i, 0) += 1e-3;
    }
    Attributions out{a, b, delta_attributions(a, b), {}, {}};
    const auto delta_for = [&](BaselineKind kind, const Baseline& base) {
      if (kind == config.baseline) return out.delta;
      auto [pa, pb] = explain_pair(base);
      return delta_attributions(pa, pb);
    };
    out.delta_mean = delta_for(BaselineKind::mean, bases.mean);
    out.delta_median = delta_for(BaselineKind::median, bases.median);
    return out;
  });

  const auto df = staged("attribution", [&] {
    return delta_f(AnchoredScore{anchors, at.A.scores}, AnchoredScore{anchors, at.B.scores});
  });

  RankOverlap overlap;
  std::vector<double> jsd_rows;
  GroupedOcclusion grouped;
  staged("suite", [&] {
    auto& m = report.metrics;
    m.mag_l1 = delta_magnitude(at.delta.values);
    m.topk = topk_concentration(at.delta.values, config.top_k);
    m.entropy = delta_entropy(at.delta.values);
    overlap = rank_overlap(at.A.values, at.B.values, config.top_k);
    m.rank_overlap = overlap.mean;
    m.rank_overlap_median = overlap.median;
    jsd_rows = jsd_per_sample(at.A.values, at.B.values);
    m.jsd = compensated_mean(jsd_rows);
    m.dce = dce(at.delta.values, df);
    m.bac = bac(at.delta.values, df);
    const auto explain = make_delta_explainer(model_A, model_B, anchors, bases.configured);
    const Matrix& reference = at.delta.values;
    if (!config.inject_fault) {
      m.stability = delta_stability(explain, X, reference, config.sigmas, config.stability_draws,
                                    derive_seed(config.seed, kNoiseStream))
                        .by_sigma;
    } else {
      // The fault lives in B's attributions only, so compare against the clean delta.
      const Matrix clean = explain(X);
      m.stability = delta_stability(explain, X, clean, config.sigmas, config.stability_draws,
                                    derive_seed(config.seed, kNoiseStream))
                        .by_sigma;
    }
    m.baseline_sensitivity = baseline_sensitivity(at.delta_mean, at.delta_median);
    grouped = grouped_occlusion_ratio(model_A, model_B, X, at.A, at.B, config.group_k,
                                      config.group_mode);
    m.group_ratio = grouped.rho;
  });

  staged("permutation", [&] {
    report.perm_importance = permutation_importance(model_B, data.X_test, data.y_test,
                                                    config.perm_repeats,
                                                    derive_seed(config.seed, kPermStream));
    report.perm_top_features = permutation_importance_ranking(report.perm_importance, config.perm_m);
  });

  staged("cohorts", [&] {
    const auto c = cohorts(pred_A, pred_B, y);
    report.fixes = c.fixes.size();
    report.regressions = c.regressions.size();
    const auto focus = codf(at.delta.values, report.perm_top_features, c.fixes, c.regressions);
    report.metrics.codf_fixes = focus.fixes;
    report.metrics.codf_regressions = focus.regressions;
  });

  report.per_sample.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& r = report.per_sample[i];
    r.test_index = rows[i];
    r.y_true = y[i];
    r.pred_A = pred_A[i];
    r.pred_B = pred_B[i];
    r.anchor = anchors[i];
    r.delta_f = df[i];
    r.delta_l1 = l1_norm(at.delta.values.row(i));
    r.jsd = jsd_rows[i];
    r.rank_overlap = overlap.per_sample[i];
    r.group_ratio = grouped.ratios[i];
    const auto row = at.delta.values.row(i);
    r.delta_phi.assign(row.begin(), row.end());
  }

  staged("verdict", [&] {
    report.boundaries = MagnitudeBoundaries::from_thresholds(config.thresholds);
    auto v = classify_verdict(report.metrics, config.thresholds, report.boundaries);
    report.verdict = v.verdict;
    report.warnings.insert(report.warnings.end(), v.warnings.begin(), v.warnings.end());
  });
  return report;
}

namespace {

Dataset load_dataset(const AuditConfig& config) {
  if (config.dataset.rfind("embedded:", 0) == 0) {
    return embedded_dataset(config.dataset.substr(9));
  }
  return load_csv(config.dataset.substr(4), config.label_column);
}

std::shared_ptr<ScoreModel> build_model(const ModelSource& src, const Matrix& X_train,
                                        const std::vector<int>& y_train, int classes,
                                        std::vector<std::string>& warnings, const char* role) {
  if (src.is_bridge()) {
    const auto ms = std::chrono::milliseconds(
        static_cast<long long>(std::llround(src.bridge_timeout_s * 1000.0)));
    auto client = std::make_shared<BridgeClient>(src.bridge_command, ms);
    return std::make_shared<BridgeScoreModel>(std::move(client));
  }
  src.learner->validate(X_train.rows());
  auto trained = std::make_shared<const TrainedModel>(fit(*src.learner, X_train, y_train, classes));
  for (const auto& w : trained->warnings()) warnings.push_back(std::string(role) + ": " + w);
  return std::make_shared<BuiltinScoreModel>(std::move(trained));
}

}  // namespace

DeltaReport run_audit(const AuditConfig& config) {
  staged("config", [&] { config.validate(); });
  const Dataset ds = staged("data", [&] {
    auto d = load_dataset(config);
    d.validate();
    return d;
  });
  const auto split = staged("split", [&] {
    return stratified_split(ds, config.test_fraction, config.seed);
  });

  AuditData data;
  staged("standardize", [&] {
    const auto scaler = fit_standardizer(ds, split);
    data.dataset_name = ds.name;
    data.feature_names = ds.feature_names;
    data.class_count = ds.class_count;
    data.X_train = scaler.transform(ds.X.select_rows(split.train));
    data.X_test = scaler.transform(ds.X.select_rows(split.test));
    data.y_test.reserve(split.test.size());
    for (auto i : split.test) data.y_test.push_back(ds.y[i]);
  });
  std::vector<int> y_train;
  for (auto i : split.train) y_train.push_back(ds.y[i]);

  std::vector<std::string> warnings;
  const auto model_A = staged(config.model_a.is_bridge() ? "bridge_A" : "train_A", [&] {
    return build_model(config.model_a, data.X_train, y_train, ds.class_count, warnings, "model_a");
  });
  const auto model_B = staged(config.model_b.is_bridge() ? "bridge_B" : "train_B", [&] {
    return build_model(config.model_b, data.X_train, y_train, ds.class_count, warnings, "model_b");
  });

  DeltaReport report = audit_models(config, *model_A, *model_B, data);
  report.warnings.insert(report.warnings.begin(), warnings.begin(), warnings.end());

  for (const auto& m : {model_A, model_B}) {
    if (auto* bridged = dynamic_cast<BridgeScoreModel*>(m.get())) bridged->client().shutdown();
  }
  return report;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  const double mean = compensated_mean(v);
  if (v.size() < 2) return {mean, 0.0};
  CompensatedSum ss;
  for (double x : v) ss.add((x - mean) * (x - mean));
  return {mean, std::sqrt(ss.value() / static_cast<double>(v.size() - 1))};
}

}  // namespace

void finalize_batch(BatchResult& batch) {
  batch.aggregates.clear();
  if (batch.reports.empty()) return;
  std::vector<double> mags;
  for (const auto& r : batch.reports) mags.push_back(r.metrics.mag_l1);
  batch.boundaries = {quantile(mags, 0.25), quantile(mags, 0.5), "batch"};

  for (auto& r : batch.reports) {
    r.boundaries = batch.boundaries;
    auto v = classify_verdict(r.metrics, r.config.thresholds, r.boundaries);
    r.verdict = v.verdict;
  }

  std::map<std::string, std::vector<const DeltaReport*>> by_family;
  for (const auto& r : batch.reports) by_family[r.config.family()].push_back(&r);
  for (const auto& [family, reports] : by_family) {
    FamilyAggregate agg;
    agg.family = family;
    agg.audits = reports.size();
    std::vector<double> mag, dce_v, bac_v;
    for (const auto* r : reports) {
      mag.push_back(r->metrics.mag_l1);
      dce_v.push_back(r->metrics.dce);
      if (r->metrics.bac) bac_v.push_back(*r->metrics.bac);
    }
    std::tie(agg.mag_mean, agg.mag_std) = mean_std(mag);
    std::tie(agg.dce_mean, agg.dce_std) = mean_std(dce_v);
    agg.bac_count = bac_v.size();
    if (!bac_v.empty()) {
      const auto [m, s] = mean_std(bac_v);
      agg.bac_mean = m;
      agg.bac_std = s;
    }
    batch.aggregates.push_back(agg);
  }
}

BatchResult run_batch(const std::vector<AuditConfig>& configs) {
  if (configs.empty()) throw ConfigError("batch: no configs");
  BatchResult batch;
  for (const auto& cfg : configs) {
    try {
      batch.reports.push_back(run_audit(cfg));
    } catch (const StageError& e) {
      batch.failures.push_back({cfg.name, e.stage(), e.what()});
    } catch (const std::exception& e) {
      batch.failures.push_back({cfg.name, "unknown", e.what()});
    }
  }
  finalize_batch(batch);
  return batch;
}

}  // namespace delta_audit
