#pragma once

#include <string>
#include <vector>

#include "delta_audit/config.hpp"

namespace delta_audit {

inline constexpr double kSanityTolerance = 1e-9;

struct SanityRow {
  std::string family;
  std::string dataset;
  double mag_l1 = 0.0;
  double dce = 0.0;
  double rank_overlap = 0.0;
  double jsd = 0.0;
  std::vector<std::string> failing;  // metric names, or "error: ..."

  bool passed() const { return failing.empty(); }
};

// Identity configs (A = B) for every built-in family on every embedded dataset.
std::vector<AuditConfig> sanity_configs(bool inject_fault = false);

std::vector<SanityRow> run_sanity(bool inject_fault = false);

std::string sanity_csv(const std::vector<SanityRow>& rows);

}  // namespace delta_audit
