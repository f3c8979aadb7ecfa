#include "delta_audit/report.hpp"

#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "delta_audit/error.hpp"
#include "delta_audit/text.hpp"

namespace delta_audit {

namespace {

using ojson = nlohmann::ordered_json;

ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::string cell(double v) { return format_double(v); }
std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::optional<double> stability_at(const DeltaMetrics& m, double sigma) {
  const auto it = m.stability.find(sigma);
  if (it == m.stability.end()) return std::nullopt;
  return it->second;
}

ojson metrics_json(const DeltaMetrics& m) {
  ojson j;
  j["mag_l1"] = m.mag_l1;
  j["topk"] = opt(m.topk);
  j["entropy"] = opt(m.entropy);
  j["rank_overlap"] = m.rank_overlap;
  j["rank_overlap_median"] = m.rank_overlap_median;
  j["jsd"] = m.jsd;
  j["dce"] = m.dce;
  j["bac"] = opt(m.bac);
  j["codf_fixes"] = opt(m.codf_fixes);
  j["codf_regressions"] = opt(m.codf_regressions);
  ojson stab = ojson::array();
  for (const auto& [sigma, value] : m.stability) stab.push_back({{"sigma", sigma}, {"value", value}});
  j["stability"] = stab;
  j["baseline_sensitivity"] = m.baseline_sensitivity;
  j["group_ratio"] = m.group_ratio;
  return j;
}

ojson report_object(const DeltaReport& r) {
  ojson j;
  j["name"] = r.config.name;
  j["family"] = r.config.family();
  ojson cfg = ojson::object();
  for (const auto& [k, v] : config_to_map(r.config)) cfg[k] = v;
  j["config"] = cfg;
  j["dataset"] = {{"name", r.dataset_name},
                  {"features", r.feature_names},
                  {"class_count", r.class_count},
                  {"n_train", r.n_train},
                  {"n_test", r.n_test},
                  {"n_audited", r.n_audited}};
  j["models"] = {{"A", r.model_tag_A}, {"B", r.model_tag_B}};
  j["accuracy_A"] = r.accuracy_A;
  j["accuracy_B"] = r.accuracy_B;
  j["fixes"] = r.fixes;
  j["regressions"] = r.regressions;
  j["metrics"] = metrics_json(r.metrics);
  j["boundaries"] = {{"source", r.boundaries.source},
                     {"mag_bottom_quartile", r.boundaries.bottom_quartile},
                     {"mag_median", r.boundaries.median}};
  j["verdict"] = to_string(r.verdict);
  j["permutation_importance"] = r.perm_importance;
  j["perm_top_features"] = r.perm_top_features;
  j["predictions"] = {{"y_test", r.y_test}, {"A", r.pred_A_test}, {"B", r.pred_B_test}};
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{
      "name",         "family",          "dataset",         "verdict",
      "accuracy_A",   "accuracy_B",      "n_test",          "n_audited",
      "fixes",        "regressions",     "mag_l1",          "topk",
      "entropy",      "rank_overlap",    "rank_overlap_median", "jsd",
      "dce",          "bac",             "codf_fixes",      "codf_regressions",
      "stability_0.01", "stability_0.05", "baseline_sensitivity", "group_ratio",
      "mag_bottom_quartile", "mag_median", "boundaries_source"};
  return cols;
}

std::string report_json(const DeltaReport& report) { return report_object(report).dump(2) + "\n"; }

std::string metrics_csv(const std::vector<DeltaReport>& reports) {
  std::ostringstream out;
  const auto& cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : reports) {
    const auto& m = r.metrics;
    const std::vector<std::string> row{
        csv_escape(r.config.name), csv_escape(r.config.family()), csv_escape(r.dataset_name),
        to_string(r.verdict), cell(r.accuracy_A), cell(r.accuracy_B),
        std::to_string(r.n_test), std::to_string(r.n_audited), std::to_string(r.fixes),
        std::to_string(r.regressions), cell(m.mag_l1), cell(m.topk), cell(m.entropy),
        cell(m.rank_overlap), cell(m.rank_overlap_median), cell(m.jsd), cell(m.dce), cell(m.bac),
        cell(m.codf_fixes), cell(m.codf_regressions), cell(stability_at(m, 0.01)),
        cell(stability_at(m, 0.05)), cell(m.baseline_sensitivity), cell(m.group_ratio),
        cell(r.boundaries.bottom_quartile), cell(r.boundaries.median), r.boundaries.source};
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
  return out.str();
}

std::string per_sample_csv(const DeltaReport& r) {
  std::ostringstream out;
  out << "test_index,y_true,pred_A,pred_B,anchor,delta_f,delta_l1,jsd,rank_overlap,group_ratio";
  for (const auto& f : r.feature_names) out << ",dphi_" << csv_escape(f);
  out << '\n';
  for (const auto& s : r.per_sample) {
    out << s.test_index << ',' << s.y_true << ',' << s.pred_A << ',' << s.pred_B << ','
        << s.anchor << ',' << cell(s.delta_f) << ',' << cell(s.delta_l1) << ',' << cell(s.jsd)
        << ',' << cell(s.rank_overlap) << ',' << cell(s.group_ratio);
    for (double v : s.delta_phi) out << ',' << cell(v);
    out << '\n';
  }
  return out.str();
}

std::string aggregate_csv(const std::vector<FamilyAggregate>& aggregates) {
  std::ostringstream out;
  out << "family,audits,mag_mean,mag_std,dce_mean,dce_std,bac_count,bac_mean,bac_std\n";
  for (const auto& a : aggregates) {
    out << csv_escape(a.family) << ',' << a.audits << ',' << cell(a.mag_mean) << ','
        << cell(a.mag_std) << ',' << cell(a.dce_mean) << ',' << cell(a.dce_std) << ','
        << a.bac_count << ',' << cell(a.bac_mean) << ',' << cell(a.bac_std) << '\n';
  }
  return out.str();
}

std::string batch_json(const BatchResult& batch) {
  ojson j;
  j["boundaries"] = {{"source", batch.boundaries.source},
                     {"mag_bottom_quartile", batch.boundaries.bottom_quartile},
                     {"mag_median", batch.boundaries.median}};
  ojson audits = ojson::array();
  for (const auto& r : batch.reports) {
    audits.push_back({{"name", r.config.name}, {"verdict", to_string(r.verdict)}});
  }
  j["audits"] = audits;
  ojson failures = ojson::array();
  for (const auto& f : batch.failures) {
    failures.push_back({{"name", f.name}, {"stage", f.stage}, {"message", f.message}});
  }
  j["failures"] = failures;
  return j.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

void write_audit_outputs(const DeltaReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", report_json(report));
  write_text(dir / "metrics.csv", metrics_csv({report}));
  write_text(dir / "per_sample.csv", per_sample_csv(report));
}

void write_batch_outputs(const BatchResult& batch, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::set<std::string> used;
  for (const auto& r : batch.reports) {
    std::string sub = r.config.name;
    for (int k = 2; !used.insert(sub).second; ++k) sub = r.config.name + "-" + std::to_string(k);
    write_audit_outputs(r, dir / sub);
  }
  write_text(dir / "metrics.csv", metrics_csv(batch.reports));
  write_text(dir / "aggregate_by_family.csv", aggregate_csv(batch.aggregates));
  write_text(dir / "batch.json", batch_json(batch));
}

}  // namespace delta_audit
