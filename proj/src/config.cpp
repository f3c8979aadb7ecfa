#include "delta_audit/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "delta_audit/error.hpp"
#include "delta_audit/text.hpp"

namespace delta_audit {

void VerdictThresholds::validate() const {
  if (!(bac_low < bac_high)) throw ConfigError("thresholds: bac_low must be < bac_high");
  if (!(rank_overlap_min > 0.0)) throw ConfigError("thresholds: rank_overlap_min must be > 0");
  if (!(jsd_risky > 0.0)) throw ConfigError("thresholds: jsd_risky must be > 0");
  if (!(dce_zero_tol > 0.0)) throw ConfigError("thresholds: dce_zero_tol must be > 0");
  if (!(mag_bottom_quartile > 0.0) || !(mag_median > 0.0)) {
    throw ConfigError("thresholds: magnitude boundaries must be > 0");
  }
  if (mag_bottom_quartile > mag_median) {
    throw ConfigError("thresholds: mag_bottom_quartile must not exceed mag_median");
  }
}

namespace {

void validate_source(const ModelSource& src, const char* which) {
  if (src.is_bridge() == src.learner.has_value()) {
    throw ConfigError(std::string(which) + ": specify exactly one of 'family' or 'bridge'");
  }
  if (src.learner) src.learner->validate();
  if (!(src.bridge_timeout_s > 0.0)) throw ConfigError(std::string(which) + ": timeout_s must be > 0");
}

}  // namespace

void AuditConfig::validate() const {
  validate_settings();
  validate_source(model_a, "model_a");
  validate_source(model_b, "model_b");
}

void AuditConfig::validate_settings() const {
  if (name.empty()) throw ConfigError("config: name must not be empty");
  if (dataset.rfind("embedded:", 0) != 0 && dataset.rfind("csv:", 0) != 0) {
    throw ConfigError("config: dataset must be 'embedded:<name>' or 'csv:<path>'");
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("config: test_fraction must lie in (0, 1)");
  }
  if (sample_cap < 1) throw ConfigError("config: sample_cap must be >= 1");
  for (double s : sigmas) {
    if (!(s > 0.0)) throw ConfigError("config: sigmas must be > 0");
  }
  if (stability_draws < 1) throw ConfigError("config: stability_draws must be >= 1");
  if (group_k < 1) throw ConfigError("config: group_k must be >= 1");
  if (top_k < 1) throw ConfigError("config: top_k must be >= 1");
  if (perm_m < 1) throw ConfigError("config: perm_m must be >= 1");
  if (perm_repeats < 1) throw ConfigError("config: perm_repeats must be >= 1");
  thresholds.validate();
}

std::string AuditConfig::family() const {
  if (!family_label.empty()) return family_label;
  if (model_a.learner) return to_string(model_a.learner->family);
  return "bridge";
}

ConfigMap parse_config_map(std::string_view text) {
  ConfigMap map;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim_copy(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section");
      }
      section = trim_copy(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError("config line " + std::to_string(line_no) + ": empty section name");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim_copy(std::string_view(line).substr(0, eq));
    const std::string value = trim_copy(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (!map.emplace(full, value).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + full + "'");
    }
  }
  return map;
}

namespace {

std::size_t parse_count(const std::string& v, const std::string& what) {
  const long long n = parse_int(v, what);
  if (n < 0) throw ConfigError(what + ": must be >= 0");
  return static_cast<std::size_t>(n);
}

ModelSource source_from_map(const ConfigMap& map, const std::string& section) {
  ModelSource src;
  std::map<std::string, std::string> params;
  const std::string prefix = section + ".";
  for (auto it = map.lower_bound(prefix); it != map.end() && it->first.rfind(prefix, 0) == 0; ++it) {
    const std::string key = it->first.substr(prefix.size());
    if (key == "bridge") {
      src.bridge_command = it->second;
    } else if (key == "timeout_s") {
      src.bridge_timeout_s = parse_double(it->second, it->first);
    } else {
      params[key] = it->second;
    }
  }
  if (!params.empty()) {
    if (src.is_bridge()) {
      throw ConfigError(section + ": learner keys are not allowed next to 'bridge'");
    }
    try {
      src.learner = LearnerSpec::from_params(params);
    } catch (const ConfigError& e) {
      throw ConfigError(section + ": " + e.what());
    }
  }
  return src;
}

}  // namespace

AuditConfig config_from_map(const ConfigMap& map) {
  AuditConfig cfg;
  static const std::set<std::string> sections{"model_a", "model_b", "thresholds"};
  for (const auto& [key, value] : map) {
    const auto dot = key.find('.');
    if (dot != std::string::npos) {
      const std::string section = key.substr(0, dot);
      if (!sections.contains(section)) throw ConfigError("config: unknown section '" + section + "'");
      if (section != "thresholds") continue;
      const std::string k = key.substr(dot + 1);
      auto& t = cfg.thresholds;
      const double v = parse_double(value, key);
      if (k == "bac_low") t.bac_low = v;
      else if (k == "bac_high") t.bac_high = v;
      else if (k == "rank_overlap_min") t.rank_overlap_min = v;
      else if (k == "jsd_risky") t.jsd_risky = v;
      else if (k == "dce_zero_tol") t.dce_zero_tol = v;
      else if (k == "mag_bottom_quartile") t.mag_bottom_quartile = v;
      else if (k == "mag_median") t.mag_median = v;
      else throw ConfigError("config: unknown key '" + key + "'");
      continue;
    }
    if (key == "name") cfg.name = value;
    else if (key == "description") cfg.description = value;
    else if (key == "family_label") cfg.family_label = value;
    else if (key == "dataset") cfg.dataset = value;
    else if (key == "label_column") cfg.label_column = value;
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_count(value, key));
    else if (key == "test_fraction") cfg.test_fraction = parse_double(value, key);
    else if (key == "sample_cap") cfg.sample_cap = parse_count(value, key);
    else if (key == "baseline") cfg.baseline = parse_baseline_kind(value);
    else if (key == "sigmas") {
      cfg.sigmas.clear();
      if (!value.empty()) {
        for (const auto& s : split(value, ',')) cfg.sigmas.push_back(parse_double(s, key));
      }
    }
    else if (key == "stability_draws") cfg.stability_draws = parse_count(value, key);
    else if (key == "group_k") cfg.group_k = parse_count(value, key);
    else if (key == "group_mode") cfg.group_mode = parse_group_mode(value);
    else if (key == "top_k") cfg.top_k = parse_count(value, key);
    else if (key == "perm_m") cfg.perm_m = parse_count(value, key);
    else if (key == "perm_repeats") cfg.perm_repeats = parse_count(value, key);
    else if (key == "anchor") {
      if (value == "A") cfg.anchor = AnchorSource::A;
      else if (value == "B") cfg.anchor = AnchorSource::B;
      else throw ConfigError("config: anchor must be A or B");
    }
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  cfg.model_a = source_from_map(map, "model_a");
  cfg.model_b = source_from_map(map, "model_b");
  cfg.validate();
  return cfg;
}

ConfigMap config_to_map(const AuditConfig& cfg) {
  ConfigMap m;
  m["name"] = cfg.name;
  if (!cfg.description.empty()) m["description"] = cfg.description;
  if (!cfg.family_label.empty()) m["family_label"] = cfg.family_label;
  m["dataset"] = cfg.dataset;
  m["label_column"] = cfg.label_column;
  m["seed"] = std::to_string(cfg.seed);
  m["test_fraction"] = format_double(cfg.test_fraction);
  m["sample_cap"] = std::to_string(cfg.sample_cap);
  m["baseline"] = to_string(cfg.baseline);
  std::string sig;
  for (std::size_t i = 0; i < cfg.sigmas.size(); ++i) {
    if (i) sig += ", ";
    sig += format_double(cfg.sigmas[i]);
  }
  m["sigmas"] = sig;
  m["stability_draws"] = std::to_string(cfg.stability_draws);
  m["group_k"] = std::to_string(cfg.group_k);
  m["group_mode"] = to_string(cfg.group_mode);
  m["top_k"] = std::to_string(cfg.top_k);
  m["perm_m"] = std::to_string(cfg.perm_m);
  m["perm_repeats"] = std::to_string(cfg.perm_repeats);
  m["anchor"] = cfg.anchor == AnchorSource::A ? "A" : "B";
  auto put_source = [&](const ModelSource& src, const std::string& section) {
    if (src.learner) {
      for (const auto& [k, v] : src.learner->to_params()) m[section + "." + k] = v;
    }
    if (src.is_bridge()) {
      m[section + ".bridge"] = src.bridge_command;
      m[section + ".timeout_s"] = format_double(src.bridge_timeout_s);
    }
  };
  put_source(cfg.model_a, "model_a");
  put_source(cfg.model_b, "model_b");
  const auto& t = cfg.thresholds;
  m["thresholds.bac_low"] = format_double(t.bac_low);
  m["thresholds.bac_high"] = format_double(t.bac_high);
  m["thresholds.rank_overlap_min"] = format_double(t.rank_overlap_min);
  m["thresholds.jsd_risky"] = format_double(t.jsd_risky);
  m["thresholds.dce_zero_tol"] = format_double(t.dce_zero_tol);
  m["thresholds.mag_bottom_quartile"] = format_double(t.mag_bottom_quartile);
  m["thresholds.mag_median"] = format_double(t.mag_median);
  return m;
}

AuditConfig parse_config(std::string_view text) { return config_from_map(parse_config_map(text)); }

AuditConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_text(const AuditConfig& cfg) {
  const ConfigMap m = config_to_map(cfg);
  std::ostringstream out;
  std::string current;
  // Top-level keys first, then one block per section.
  for (const auto& [key, value] : m) {
    if (key.find('.') == std::string::npos) out << key << " = " << value << '\n';
  }
  for (const char* section : {"model_a", "model_b", "thresholds"}) {
    out << "\n[" << section << "]\n";
    const std::string prefix = std::string(section) + ".";
    for (auto it = m.lower_bound(prefix); it != m.end() && it->first.rfind(prefix, 0) == 0; ++it) {
      out << it->first.substr(prefix.size()) << " = " << it->second << '\n';
    }
  }
  return out.str();
}

void apply_override(AuditConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "': expected key=value");
  }
  const std::string key = trim_copy(assignment.substr(0, eq));
  const std::string value = trim_copy(assignment.substr(eq + 1));
  ConfigMap m = config_to_map(cfg);
  // Switching a model's family or source resets that model's keys.
  for (const char* section : {"model_a", "model_b"}) {
    const std::string prefix = std::string(section) + ".";
    if (key == prefix + "family" || key == prefix + "bridge") {
      for (auto it = m.lower_bound(prefix); it != m.end() && it->first.rfind(prefix, 0) == 0;) {
        it = m.erase(it);
      }
    }
  }
  m[key] = value;
  cfg = config_from_map(m);
}

// ---------------------------------------------------------------------------
// Presets

namespace {

Preset builtin_preset(std::string name, std::string knobs, std::string dataset, LearnerSpec a,
                      LearnerSpec b) {
  Preset p;
  p.name = name;
  p.knobs = knobs;
  p.config.name = std::move(name);
  p.config.description = std::move(knobs);
  p.config.dataset = std::move(dataset);
  p.config.model_a.learner = std::move(a);
  p.config.model_b.learner = std::move(b);
  return p;
}

Preset svc_template(std::string name, std::string knobs, const std::string& params_a,
                    const std::string& params_b) {
  Preset p;
  p.name = name;
  p.knobs = knobs;
  p.bridge_template = true;
  p.config.name = std::move(name);
  p.config.description = std::move(knobs);
  p.config.family_label = "svc";
  p.config.dataset = "csv:breast_cancer.csv";
  p.config.label_column = "target";
  const std::string serve = "python3 -m sklearn_bridge serve --family svc --dataset breast_cancer";
  p.config.model_a.bridge_command = serve + " --params '" + params_a +
                                    "' --role A --scaler-sidecar scaler.json";
  p.config.model_b.bridge_command = serve + " --params '" + params_b +
                                    "' --role B --scaler-sidecar scaler.json";
  return p;
}

std::vector<Preset> build_presets() {
  constexpr std::uint64_t kForestSeed = 7;
  std::vector<Preset> out;
  out.push_back(builtin_preset("logreg-P1", "l2_strength 1.0 -> 10.0 (inverse-C 1 -> 0.1)",
                               "embedded:separable2", LearnerSpec::logreg(1.0),
                               LearnerSpec::logreg(10.0)));
  out.push_back(builtin_preset("logreg-P2", "l2_strength 1.0 -> 0.1 (penalty weakened)",
                               "embedded:separable2", LearnerSpec::logreg(1.0),
                               LearnerSpec::logreg(0.1)));
  out.push_back(builtin_preset("logreg-P3", "max_iterations 2000 -> 5 (optimizer budget)",
                               "embedded:separable2", LearnerSpec::logreg(1.0, 2000),
                               LearnerSpec::logreg(1.0, 5)));
  out.push_back(builtin_preset("knn-P1", "k 5 -> 10 (uniform)", "embedded:interact3",
                               LearnerSpec::knn(5), LearnerSpec::knn(10)));
  out.push_back(builtin_preset("knn-P2", "weighting uniform -> distance (k=5)",
                               "embedded:interact3", LearnerSpec::knn(5),
                               LearnerSpec::knn(5, KnnWeighting::distance)));
  out.push_back(builtin_preset("knn-P3", "scan_order forward -> reverse (k=5, exact search)",
                               "embedded:interact3", LearnerSpec::knn(5),
                               LearnerSpec::knn(5, KnnWeighting::uniform, ScanOrder::reverse)));
  out.push_back(builtin_preset("forest-P1", "n_trees 100 -> 300 (max_depth none)",
                               "embedded:interact3",
                               LearnerSpec::forest(100, std::nullopt, FeatureRule::sqrt, kForestSeed),
                               LearnerSpec::forest(300, std::nullopt, FeatureRule::sqrt, kForestSeed)));
  out.push_back(builtin_preset("forest-P2", "max_depth none -> 1 (n_trees 100)",
                               "embedded:interact3",
                               LearnerSpec::forest(100, std::nullopt, FeatureRule::sqrt, kForestSeed),
                               LearnerSpec::forest(100, 1, FeatureRule::sqrt, kForestSeed)));
  out.push_back(builtin_preset("forest-P3", "feature_rule sqrt -> log2 (n_trees 100)",
                               "embedded:interact3",
                               LearnerSpec::forest(100, std::nullopt, FeatureRule::sqrt, kForestSeed),
                               LearnerSpec::forest(100, std::nullopt, FeatureRule::log2, kForestSeed)));
  out.push_back(builtin_preset("gbstumps-P1", "learning_rate 0.1 -> 0.05 (50 rounds, depth 1)",
                               "embedded:interact3", LearnerSpec::gbstumps(50, 0.1, 1),
                               LearnerSpec::gbstumps(50, 0.05, 1)));
  out.push_back(builtin_preset("gbstumps-P2", "n_rounds 50 -> 100 (lr 0.1, depth 1)",
                               "embedded:interact3", LearnerSpec::gbstumps(50, 0.1, 1),
                               LearnerSpec::gbstumps(100, 0.1, 1)));
  out.push_back(builtin_preset("gbstumps-P3", "max_depth 1 -> 2 (lr 0.1, 50 rounds)",
                               "embedded:interact3", LearnerSpec::gbstumps(50, 0.1, 1),
                               LearnerSpec::gbstumps(50, 0.1, 2)));
  out.push_back(svc_template("svc-P1", "kernel rbf (C=1, gamma=scale) -> linear (C=1)",
                             R"({"kernel":"rbf","C":1.0,"gamma":"scale"})",
                             R"({"kernel":"linear","C":1.0})"));
  out.push_back(svc_template("svc-P2", "gamma scale -> auto (rbf)",
                             R"({"kernel":"rbf","gamma":"scale"})",
                             R"({"kernel":"rbf","gamma":"auto"})"));
  out.push_back(svc_template("svc-P3", "kernel poly (degree 3, C=1) -> rbf (C=1, gamma=scale)",
                             R"({"kernel":"poly","degree":3,"C":1.0})",
                             R"({"kernel":"rbf","C":1.0,"gamma":"scale"})"));
  return out;
}

}  // namespace

const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = build_presets();
  return all;
}

const Preset& find_preset(const std::string& name) {
  for (const auto& p : presets()) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace delta_audit
