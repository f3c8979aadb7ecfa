#include "delta_audit/sanity.hpp"

#include <sstream>

#include "delta_audit/data.hpp"
#include "delta_audit/pipeline.hpp"
#include "delta_audit/text.hpp"

namespace delta_audit {

std::vector<AuditConfig> sanity_configs(bool inject_fault) {
  const std::vector<LearnerSpec> specs{
      LearnerSpec::logreg(1.0), LearnerSpec::knn(5),
      LearnerSpec::forest(50, std::nullopt, FeatureRule::sqrt, 7),
      LearnerSpec::gbstumps(50, 0.1, 1)};
  std::vector<AuditConfig> out;
  for (const auto& ds : embedded_datasets()) {
    for (const auto& spec : specs) {
      AuditConfig cfg;
      cfg.name = "sanity-" + to_string(spec.family) + "-" + ds.name;
      cfg.dataset = "embedded:" + ds.name;
      cfg.model_a.learner = spec;
      cfg.model_b.learner = spec;
      cfg.inject_fault = inject_fault;
      out.push_back(cfg);
    }
  }
  return out;
}

std::vector<SanityRow> run_sanity(bool inject_fault) {
  std::vector<SanityRow> rows;
  for (const auto& cfg : sanity_configs(inject_fault)) {
    SanityRow row;
    row.family = cfg.family();
    row.dataset = cfg.dataset.substr(9);
    try {
      const auto r = run_audit(cfg);
      const auto& m = r.metrics;
      row.mag_l1 = m.mag_l1;
      row.dce = m.dce;
      row.rank_overlap = m.rank_overlap;
      row.jsd = m.jsd;
      if (!(m.mag_l1 <= kSanityTolerance)) row.failing.push_back("mag_l1");
      if (!(m.dce <= kSanityTolerance)) row.failing.push_back("dce");
      if (m.rank_overlap != 1.0) row.failing.push_back("rank_overlap");
      if (!(m.jsd <= kSanityTolerance)) row.failing.push_back("jsd");
    } catch (const std::exception& e) {
      row.failing.push_back(std::string("error: ") + e.what());
    }
    rows.push_back(row);
  }
  return rows;
}

std::string sanity_csv(const std::vector<SanityRow>& rows) {
  std::ostringstream out;
  out << "family,dataset,mag_l1,dce,rank_overlap,jsd,status,failing\n";
  for (const auto& r : rows) {
    std::string failing;
    for (const auto& f : r.failing) failing += (failing.empty() ? "" : ";") + f;
    for (char& c : failing) {
      if (c == ',' || c == '\n') c = ' ';
    }
    out << r.family << ',' << r.dataset << ',' << format_double(r.mag_l1) << ','
        << format_double(r.dce) << ',' << format_double(r.rank_overlap) << ','
        << format_double(r.jsd) << ',' << (r.passed() ? "pass" : "fail") << ',' << failing << '\n';
  }
  return out.str();
}

}  // namespace delta_audit
