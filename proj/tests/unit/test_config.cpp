#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "delta_audit/config.hpp"
#include "delta_audit/error.hpp"

using namespace delta_audit;

namespace {

const char* kSample = R"(# comment
; another comment
name = sample
dataset = embedded:interact3
seed = 11
sigmas = 0.02, 0.1
baseline = median
group_k = 3
group_mode = revector
anchor = A

[model_a]
family = knn
k = 5

[model_b]
family = knn
k = 9
weighting = distance

[thresholds]
jsd_risky = 0.2
mag_median = 1.5
)";

}  // namespace

TEST(ConfigParse, SampleFile) {
  const AuditConfig c = parse_config(kSample);
  EXPECT_EQ(c.name, "sample");
  EXPECT_EQ(c.dataset, "embedded:interact3");
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.sigmas, (std::vector<double>{0.02, 0.1}));
  EXPECT_EQ(c.baseline, BaselineKind::median);
  EXPECT_EQ(c.group_k, 3u);
  EXPECT_EQ(c.group_mode, GroupMode::revector);
  EXPECT_EQ(c.anchor, AnchorSource::A);
  EXPECT_EQ(*c.model_a.learner, LearnerSpec::knn(5));
  EXPECT_EQ(*c.model_b.learner, LearnerSpec::knn(9, KnnWeighting::distance));
  EXPECT_EQ(c.thresholds.jsd_risky, 0.2);
  EXPECT_EQ(c.thresholds.mag_median, 1.5);
  EXPECT_EQ(c.thresholds.bac_low, 0.2);
  EXPECT_EQ(c.family(), "knn");
}

TEST(ConfigParse, Defaults) {
  const AuditConfig c = parse_config("[model_a]\nfamily = logreg\n[model_b]\nfamily = logreg\n");
  EXPECT_EQ(c.test_fraction, 0.2);
  EXPECT_EQ(c.sample_cap, 256u);
  EXPECT_EQ(c.baseline, BaselineKind::averaged);
  EXPECT_EQ(c.sigmas, (std::vector<double>{0.01, 0.05}));
  EXPECT_EQ(c.group_k, 2u);
  EXPECT_EQ(c.top_k, 10u);
  EXPECT_EQ(c.perm_m, 10u);
  EXPECT_EQ(c.perm_repeats, 5u);
  EXPECT_EQ(c.anchor, AnchorSource::B);
  const VerdictThresholds t;
  EXPECT_EQ(t.bac_low, 0.2);
  EXPECT_EQ(t.bac_high, 0.6);
  EXPECT_EQ(t.rank_overlap_min, 0.9);
  EXPECT_EQ(t.jsd_risky, 0.15);
  EXPECT_EQ(t.dce_zero_tol, 1e-6);
}

TEST(ConfigParse, Errors) {
  const std::string models = "[model_a]\nfamily = logreg\n[model_b]\nfamily = logreg\n";
  EXPECT_THROW(parse_config("bogus = 1\n" + models), ConfigError);
  EXPECT_THROW(parse_config("seed = 1\nseed = 2\n" + models), ConfigError);
  EXPECT_THROW(parse_config("no equals sign\n" + models), ConfigError);
  EXPECT_THROW(parse_config("[model_c]\nfamily = logreg\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = x\n" + models), ConfigError);
  EXPECT_THROW(parse_config("test_fraction = 1.5\n" + models), ConfigError);
  EXPECT_THROW(parse_config("sigmas = 0.01, -1\n" + models), ConfigError);
  EXPECT_THROW(parse_config("[model_a]\nfamily = logreg\n"), ConfigError);
  EXPECT_THROW(parse_config("[thresholds]\nbac_low = 0.7\n" + models), ConfigError);
  EXPECT_THROW(parse_config("[model_a]\nfamily = knn\nk = 0\n[model_b]\nfamily = knn\n"),
               ConfigError);
  EXPECT_THROW(load_config("/nonexistent/x.cfg"), ConfigError);
}

TEST(ConfigParse, BridgeSource) {
  const AuditConfig c = parse_config(
      "[model_a]\nfamily = logreg\n[model_b]\nbridge = ./server --x 1\ntimeout_s = 2.5\n");
  EXPECT_TRUE(c.model_b.is_bridge());
  EXPECT_EQ(c.model_b.bridge_command, "./server --x 1");
  EXPECT_EQ(c.model_b.bridge_timeout_s, 2.5);
  EXPECT_FALSE(c.model_b.learner.has_value());
}

TEST(ConfigRoundTrip, TextAndMap) {
  const AuditConfig c = parse_config(kSample);
  EXPECT_EQ(parse_config(to_text(c)), c);
  EXPECT_EQ(config_from_map(config_to_map(c)), c);
  EXPECT_EQ(parse_config_map(to_text(c)), config_to_map(c));
}

TEST(ConfigOverrides, Apply) {
  AuditConfig c = parse_config(kSample);
  apply_override(c, "model_b.k=10");
  EXPECT_EQ(c.model_b.learner->k, 10);
  apply_override(c, "thresholds.jsd_risky = 0.3");
  EXPECT_EQ(c.thresholds.jsd_risky, 0.3);
  apply_override(c, "seed=5");
  EXPECT_EQ(c.seed, 5u);
  apply_override(c, "model_a.family=forest");
  EXPECT_EQ(c.model_a.learner->family, Family::forest);
  EXPECT_THROW(apply_override(c, "nokey"), ConfigError);
  EXPECT_THROW(apply_override(c, "model_b.depth=3"), ConfigError);
  EXPECT_THROW(apply_override(c, "whatever=3"), ConfigError);
}

TEST(Presets, CatalogShape) {
  const auto& all = presets();
  std::size_t builtin = 0, templates = 0;
  std::set<std::string> names;
  for (const auto& p : all) {
    names.insert(p.name);
    (p.bridge_template ? templates : builtin)++;
    EXPECT_FALSE(p.knobs.empty()) << p.name;
    EXPECT_EQ(p.config.name, p.name);
  }
  EXPECT_EQ(builtin, 12u);
  EXPECT_EQ(templates, 3u);
  for (const char* fam : {"logreg", "knn", "forest", "gbstumps", "svc"})
    for (int k = 1; k <= 3; ++k)
      EXPECT_TRUE(names.count(std::string(fam) + "-P" + std::to_string(k))) << fam << k;
  EXPECT_THROW(find_preset("logreg-P9"), ConfigError);
}

TEST(Presets, EachRoundTripsAndValidates) {
  for (const auto& p : presets()) {
    EXPECT_EQ(parse_config(to_text(p.config)), p.config) << p.name;
    EXPECT_NO_THROW(p.config.validate()) << p.name;
    if (p.bridge_template) {
      EXPECT_TRUE(p.config.model_a.is_bridge() && p.config.model_b.is_bridge()) << p.name;
      EXPECT_EQ(p.config.family(), "svc");
    } else {
      EXPECT_FALSE(p.config.model_a == p.config.model_b) << p.name;
      EXPECT_EQ(p.config.model_a.learner->family, p.config.model_b.learner->family) << p.name;
    }
  }
}

TEST(Presets, ShippedFilesMatchCatalog) {
  const std::filesystem::path dir = std::filesystem::path(DELTA_AUDIT_SOURCE_DIR) / "configs";
  for (const auto& p : presets()) {
    const auto sub = p.bridge_template ? "bridge_templates" : "presets";
    const auto path = dir / sub / (p.name + ".cfg");
    ASSERT_TRUE(std::filesystem::exists(path)) << path;
    EXPECT_EQ(load_config(path), p.config) << p.name;
  }
  for (const char* f : {"identity.cfg", "structural_risky.cfg", "bridge_loopback.cfg"}) {
    EXPECT_NO_THROW(load_config(dir / f)) << f;
  }
}
