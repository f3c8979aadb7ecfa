#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "delta_audit/explainer.hpp"
#include "delta_audit/learners.hpp"

namespace delta_audit {

// Where a model version comes from: a built-in learner trained in-process,
// or an external process speaking the bridge protocol.
struct ModelSource {
  std::optional<LearnerSpec> learner;
  std::string bridge_command;
  double bridge_timeout_s = 10.0;

  bool is_bridge() const { return !bridge_command.empty(); }
  bool operator==(const ModelSource&) const = default;
};

enum class AnchorSource { A, B };

struct VerdictThresholds {
  double bac_low = 0.2;
  double bac_high = 0.6;
  double rank_overlap_min = 0.9;
  double jsd_risky = 0.15;
  double dce_zero_tol = 1e-6;
  // Absolute magnitude boundaries for single-pair audits (quartiles of the
  // built-in preset batch, rounded). Batches replace them with quartiles of
  // the batch.
  double mag_bottom_quartile = 0.4;
  double mag_median = 0.7;

  void validate() const;
  bool operator==(const VerdictThresholds&) const = default;
};

struct AuditConfig {
  std::string name = "audit";
  std::string description;
  // Aggregation key in batch tables; empty means model A's family.
  std::string family_label;
  // "embedded:<name>" or "csv:<path>".
  std::string dataset = "embedded:separable2";
  std::string label_column = "label";
  std::uint64_t seed = 42;
  double test_fraction = 0.2;
  std::size_t sample_cap = 256;
  BaselineKind baseline = BaselineKind::averaged;
  std::vector<double> sigmas{0.01, 0.05};
  std::size_t stability_draws = 1;
  std::size_t group_k = 2;
  GroupMode group_mode = GroupMode::scalar;
  std::size_t top_k = 10;
  std::size_t perm_m = 10;
  std::size_t perm_repeats = 5;
  AnchorSource anchor = AnchorSource::B;
  ModelSource model_a;
  ModelSource model_b;
  VerdictThresholds thresholds;

  // Test hook: perturbs model B's attributions after the explainer runs.
  bool inject_fault = false;

  void validate() const;
  // Everything except the model sources.
  void validate_settings() const;
  std::string family() const;
  bool operator==(const AuditConfig&) const = default;
};

// Flat view of a config file: top-level keys as-is, section keys as
// "section.key".
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_map(std::string_view text);
AuditConfig config_from_map(const ConfigMap& map);
ConfigMap config_to_map(const AuditConfig& cfg);

AuditConfig parse_config(std::string_view text);
AuditConfig load_config(const std::filesystem::path& path);
std::string to_text(const AuditConfig& cfg);

// Applies "key=value" (e.g. "model_b.k=10", "thresholds.jsd_risky=0.2").
void apply_override(AuditConfig& cfg, std::string_view assignment);

struct Preset {
  std::string name;
  std::string knobs;
  bool bridge_template = false;
  AuditConfig config;
};

// A/B pair catalog: logreg, knn, forest and gbstumps P1..P3 plus svc bridge
// templates P1..P3.
const std::vector<Preset>& presets();
const Preset& find_preset(const std::string& name);

}  // namespace delta_audit
