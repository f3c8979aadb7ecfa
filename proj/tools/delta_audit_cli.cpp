// delta-audit: audit, batch, sanity and presets subcommands.
//
// Exit codes: 0 benign / behaviour_aligned (or risky with --no-gate),
// 1 execution error, 2 sanity failure, 3 risky, 4 unclassified.

#include <fnmatch.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "delta_audit/config.hpp"
#include "delta_audit/error.hpp"
#include "delta_audit/pipeline.hpp"
#include "delta_audit/report.hpp"
#include "delta_audit/sanity.hpp"
#include "delta_audit/text.hpp"

namespace fs = std::filesystem;
using namespace delta_audit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitSanity = 2;
constexpr int kExitRisky = 3;
constexpr int kExitUnclassified = 4;

int exit_code_for(Verdict v, bool no_gate) {
  switch (v) {
    case Verdict::benign:
    case Verdict::behaviour_aligned: return kExitOk;
    case Verdict::risky: return no_gate ? kExitOk : kExitRisky;
    case Verdict::unclassified: return kExitUnclassified;
  }
  return kExitError;
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output path exists and is not a directory: " + dir.string());
    if (!fs::is_empty(dir) && !force) {
      throw ConfigError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
    }
  }
  fs::create_directories(dir);
}

void apply_environment(AuditConfig& cfg) {
  if (const char* seed = std::getenv("DELTA_AUDIT_SEED"); seed && *seed) {
    const long long v = parse_int(seed, "DELTA_AUDIT_SEED");
    if (v < 0) throw ConfigError("DELTA_AUDIT_SEED must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(v);
  }
}

std::vector<fs::path> expand_configs(const std::string& spec) {
  std::vector<fs::path> out;
  const fs::path p(spec);
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_regular_file() && e.path().extension() == ".cfg") out.push_back(e.path());
    }
  } else if (spec.find_first_of("*?[") != std::string::npos) {
    const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
    const std::string pattern = p.filename().string();
    if (fs::is_directory(dir)) {
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() &&
            fnmatch(pattern.c_str(), e.path().filename().c_str(), 0) == 0) {
          out.push_back(e.path());
        }
      }
    }
  } else if (fs::is_regular_file(p)) {
    out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ConfigError("no config files match '" + spec + "'");
  return out;
}

void print_summary(const DeltaReport& r) {
  auto show = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("null"); };
  std::cout << r.config.name << ": verdict=" << to_string(r.verdict)
            << " mag_l1=" << format_double(r.metrics.mag_l1) << " dce=" << format_double(r.metrics.dce)
            << " bac=" << show(r.metrics.bac) << " jsd=" << format_double(r.metrics.jsd)
            << " rank_overlap=" << format_double(r.metrics.rank_overlap)
            << " acc_A=" << format_double(r.accuracy_A) << " acc_B=" << format_double(r.accuracy_B)
            << '\n';
}

struct AuditArgs {
  std::string config;
  std::string preset;
  std::string out;
  std::vector<std::string> sets;
  bool no_gate = false;
  bool force = false;
};

int cmd_audit(const AuditArgs& a, bool verbose) {
  AuditConfig cfg;
  if (!a.config.empty()) {
    cfg = load_config(a.config);
  } else {
    const auto& preset = find_preset(a.preset);
    if (preset.bridge_template) {
      std::cerr << "note: " << preset.name
                << " is a bridge template; it needs an external model server\n";
    }
    cfg = preset.config;
  }
  apply_environment(cfg);
  for (const auto& s : a.sets) apply_override(cfg, s);
  cfg.validate();
  prepare_out_dir(a.out, a.force);

  const DeltaReport report = run_audit(cfg);
  write_audit_outputs(report, a.out);
  print_summary(report);
  if (verbose) {
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  }
  if (report.verdict == Verdict::risky && a.no_gate) {
    std::cerr << "warning: verdict is risky; gate disabled by --no-gate\n";
  }
  return exit_code_for(report.verdict, a.no_gate);
}

struct BatchArgs {
  std::string configs;
  bool all_presets = false;
  std::string out;
  std::vector<std::string> sets;
  bool no_gate = false;
  bool force = false;
};

int cmd_batch(const BatchArgs& a) {
  std::vector<AuditConfig> configs;
  if (a.all_presets) {
    for (const auto& p : presets()) {
      if (!p.bridge_template) configs.push_back(p.config);
    }
  }
  if (!a.configs.empty()) {
    for (const auto& path : expand_configs(a.configs)) configs.push_back(load_config(path));
  }
  if (configs.empty()) throw ConfigError("batch: pass --configs or --all-presets");
  for (auto& cfg : configs) {
    apply_environment(cfg);
    for (const auto& s : a.sets) apply_override(cfg, s);
  }
  prepare_out_dir(a.out, a.force);

  const BatchResult batch = run_batch(configs);
  write_batch_outputs(batch, a.out);
  bool risky = false, unclassified = false;
  for (const auto& r : batch.reports) {
    print_summary(r);
    risky |= r.verdict == Verdict::risky;
    unclassified |= r.verdict == Verdict::unclassified;
  }
  for (const auto& f : batch.failures) std::cerr << "failed: " << f.name << ": " << f.message << '\n';
  if (!batch.failures.empty()) return kExitError;
  if (risky && !a.no_gate) return kExitRisky;
  if (risky) std::cerr << "warning: risky verdicts present; gate disabled by --no-gate\n";
  if (unclassified) return kExitUnclassified;
  return kExitOk;
}

int cmd_sanity(const std::string& out, bool force, bool inject_fault) {
  prepare_out_dir(out, force);
  const auto rows = run_sanity(inject_fault);
  write_text(fs::path(out) / "sanity.csv", sanity_csv(rows));
  bool ok = true;
  for (const auto& r : rows) {
    std::cout << (r.passed() ? "pass " : "FAIL ") << r.family << " / " << r.dataset
              << "  mag_l1=" << format_double(r.mag_l1) << " dce=" << format_double(r.dce)
              << " rank_overlap=" << format_double(r.rank_overlap)
              << " jsd=" << format_double(r.jsd) << '\n';
    if (!r.passed()) {
      ok = false;
      for (const auto& f : r.failing) {
        std::cerr << "sanity failure: " << r.family << " / " << r.dataset << ": " << f << '\n';
      }
    }
  }
  return ok ? kExitOk : kExitSanity;
}

int cmd_presets(bool as_json, const std::string& show) {
  if (!show.empty()) {
    std::cout << to_text(find_preset(show).config);
    return kExitOk;
  }
  if (as_json) {
    auto list = nlohmann::ordered_json::array();
    for (const auto& p : presets()) {
      list.push_back({{"name", p.name},
                      {"family", p.config.family()},
                      {"knobs", p.knobs},
                      {"dataset", p.config.dataset},
                      {"bridge_template", p.bridge_template}});
    }
    std::cout << list.dump(2) << '\n';
    return kExitOk;
  }
  for (const auto& p : presets()) {
    std::cout << p.name << (p.bridge_template ? "  [bridge template]" : "") << "\n    "
              << p.knobs << "  (" << p.config.dataset << ")\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delta-attribution audit of two model versions"};
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Print warnings");

  AuditArgs audit;
  auto* audit_cmd = app.add_subcommand("audit", "Audit one A/B pair");
  auto* cfg_opt = audit_cmd->add_option("--config", audit.config, "Config file");
  auto* preset_opt = audit_cmd->add_option("--preset", audit.preset, "Built-in preset name");
  cfg_opt->excludes(preset_opt);
  audit_cmd->add_option("--out", audit.out, "Output directory")->required();
  audit_cmd->add_option("--set", audit.sets, "Override key=value (repeatable)");
  audit_cmd->add_flag("--no-gate", audit.no_gate, "Exit 0 on a risky verdict");
  audit_cmd->add_flag("--force", audit.force, "Allow a non-empty output directory");

  BatchArgs batch;
  auto* batch_cmd = app.add_subcommand("batch", "Audit many pairs and aggregate by family");
  batch_cmd->add_option("--configs", batch.configs, "Directory of *.cfg files, glob, or file");
  batch_cmd->add_flag("--all-presets", batch.all_presets, "Include every built-in preset");
  batch_cmd->add_option("--out", batch.out, "Output directory")->required();
  batch_cmd->add_option("--set", batch.sets, "Override key=value for every config (repeatable)");
  batch_cmd->add_flag("--no-gate", batch.no_gate, "Do not fail on risky verdicts");
  batch_cmd->add_flag("--force", batch.force, "Allow a non-empty output directory");

  std::string sanity_out;
  bool sanity_force = false, inject_fault = false;
  auto* sanity_cmd = app.add_subcommand("sanity", "Identity audits for every family and dataset");
  sanity_cmd->add_option("--out", sanity_out, "Output directory")->required();
  sanity_cmd->add_flag("--force", sanity_force, "Allow a non-empty output directory");
  sanity_cmd->add_flag("--inject-fault", inject_fault)->group("");

  bool presets_json = false;
  std::string presets_show;
  auto* presets_cmd = app.add_subcommand("presets", "List the built-in A/B presets");
  presets_cmd->add_flag("--json", presets_json, "Machine-readable listing");
  presets_cmd->add_option("--show", presets_show, "Print one preset as a config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitError;
  }

  try {
    if (*audit_cmd) {
      if (audit.config.empty() && audit.preset.empty()) {
        throw ConfigError("audit: pass --config or --preset");
      }
      return cmd_audit(audit, verbose);
    }
    if (*batch_cmd) return cmd_batch(batch);
    if (*sanity_cmd) return cmd_sanity(sanity_out, sanity_force, inject_fault);
    if (*presets_cmd) return cmd_presets(presets_json, presets_show);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
