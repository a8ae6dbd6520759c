// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "laf/experiment.hpp"
#include "test_util.hpp"

namespace laf {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json tiny_blobs(const fs::path& out) {
  return {{"name", "tiny"},
          {"dataset", {{"kind", "blobs"}, {"num_classes", 4}, {"per_class", 40}, {"dim", 6},
                       {"spread", 0.6}, {"seed", 3}}},
          {"arch", {{"id", "mlp"}, {"rep_dim", 8}, {"mlp_hidden", {12}}}},
          {"scenario", {{"kind", "class-removal"}, {"target_class", 1}}},
          {"original", {{"epochs", 3}}},
          {"retrain", {{"epochs", 3}}},
          {"vae", {{"epochs", 2}, {"latent_dim", 3}}},
          {"unlearn", {{"epochs_r", 2}, {"batch_size", 8}}},
          {"seeds", {0, 1}},
          {"output_dir", out.string()}};
}

// Unsets LAF_CACHE_DIR for the lifetime of the guard.
struct CacheEnvGuard {
  std::optional<std::string> saved;
  CacheEnvGuard() {
    if (const char* v = std::getenv("LAF_CACHE_DIR")) saved = v;
    unsetenv("LAF_CACHE_DIR");
  }
  ~CacheEnvGuard() {
    if (saved) setenv("LAF_CACHE_DIR", saved->c_str(), 1);
    else unsetenv("LAF_CACHE_DIR");
  }
};

TEST(Config, DefaultsFollowArchitectureFamily) {
  const auto cnn = config_from_json(
      {{"dataset", {{"kind", "idx"}, {"dir", "d"}}}, {"scenario", {{"kind", "data-removal"}}}});
  const auto u = resolve_unlearn(cnn, 0);
  EXPECT_EQ(u.epochs_r, 5);
  EXPECT_DOUBLE_EQ(u.tau, 2.0);
  EXPECT_DOUBLE_EQ(u.lr_ue, 1e-3);
  EXPECT_EQ(u.batch_size, 32);
  EXPECT_EQ(cnn.vae.latent_dim, 8);
  EXPECT_DOUBLE_EQ(cnn.scenario.fraction, 0.4);
  EXPECT_EQ(cnn.scenario.class_lo, 5);

  const auto res = config_from_json({{"dataset", {{"kind", "idx"}, {"dir", "d"}}},
                                     {"arch", {{"id", "resnet18-like"}}},
                                     {"scenario", {{"kind", "noisy-label"}}}});
  EXPECT_DOUBLE_EQ(resolve_unlearn(res, 0).lr_ue, 5e-5);
  EXPECT_DOUBLE_EQ(resolve_unlearn(res, 0).tau, 5.0);
  EXPECT_EQ(res.vae.latent_dim, 16);
  EXPECT_DOUBLE_EQ(res.scenario.fraction, 0.6);
  EXPECT_EQ(res.scenario.class_hi, 4);
}

TEST(Config, DefaultTauTable) {
  EXPECT_DOUBLE_EQ(default_tau(ArchId::SmallCnn, Scenario::DataRemoval), 2.0);
  EXPECT_DOUBLE_EQ(default_tau(ArchId::SmallCnn, Scenario::ClassRemoval), 20.0);
  EXPECT_DOUBLE_EQ(default_tau(ArchId::SmallCnn, Scenario::NoisyLabel), 20.0);
  EXPECT_DOUBLE_EQ(default_tau(ArchId::Resnet18Like, Scenario::DataRemoval), 20.0);
  EXPECT_DOUBLE_EQ(default_tau(ArchId::Resnet18Like, Scenario::NoisyLabel), 5.0);
}

TEST(Config, MethodsMapToFlags) {
  auto c = config_from_json(tiny_blobs("/tmp/x"));
  auto flags = [&](Method m) {
    c.method = m;
    return resolve_unlearn(c, 0);
  };
  EXPECT_TRUE(flags(Method::NoneL1).disable_ue);
  EXPECT_TRUE(flags(Method::NoneL2).disable_ra);
  EXPECT_TRUE(flags(Method::AddKl).keep_kl_terms);
  EXPECT_EQ(flags(Method::VaeDr).vae_train_set, "remaining");
  EXPECT_EQ(flags(Method::TwoStage).strategy, Strategy::TwoStage);
  EXPECT_TRUE(flags(Method::LafR).repair);
  const auto laf = flags(Method::Laf);
  EXPECT_FALSE(laf.disable_ue || laf.disable_ra || laf.repair || laf.keep_kl_terms);
  for (const char* name : {"laf", "laf_r", "retrain", "neggrad", "none_l1", "none_l2", "add_kl",
                           "vae_dr", "two_stage", "original"}) {
    EXPECT_EQ(to_string(method_from_string(name)), name);
  }
}

TEST(Config, RejectsBadInput) {
  auto j = tiny_blobs("/tmp/x");
  j["unlearn"]["tau"] = -1.0;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = tiny_blobs("/tmp/x");
  j["arch"]["id"] = "vgg";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = tiny_blobs("/tmp/x");
  j["method"] = "fisher";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = tiny_blobs("/tmp/x");
  j["seeds"] = json::array();
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = tiny_blobs("/tmp/x");
  j.erase("scenario");
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, RelativePathsResolveAgainstConfigFile) {
  const auto dir = testing::scratch_dir("cfg_paths");
  fs::create_directories(dir / "configs");
  json j = {{"dataset", {{"kind", "idx"}, {"dir", "../data/set"}}},
            {"scenario", {{"kind", "data-removal"}}},
            {"output_dir", "../runs/a"}};
  std::ofstream(dir / "configs" / "c.json") << j.dump();
  const auto c = load_config(dir / "configs" / "c.json");
  EXPECT_EQ(c.dataset.dir, (dir / "data" / "set").lexically_normal());
  EXPECT_EQ(c.output_dir, (dir / "runs" / "a").lexically_normal());
}

TEST(Config, HashIgnoresSeedsAndOutput) {
  const auto a = config_from_json(tiny_blobs("/tmp/a"));
  auto jb = tiny_blobs("/tmp/b");
  jb["seeds"] = {5};
  const auto b = config_from_json(jb);
  EXPECT_EQ(config_hash(a), config_hash(b));
  jb["unlearn"]["tau"] = 3.0;
  EXPECT_NE(config_hash(a), config_hash(config_from_json(jb)));
  EXPECT_EQ(config_hash(config_from_json(to_json(a))), config_hash(a));
}

TEST(Config, CacheDirPrecedence) {
  CacheEnvGuard guard;
  auto c = config_from_json(tiny_blobs("/tmp/out"));
  EXPECT_EQ(cache_dir(c), fs::path("/tmp/out/cache"));
  c.cache_dir = "/tmp/cfgcache";
  EXPECT_EQ(cache_dir(c), fs::path("/tmp/cfgcache"));
  setenv("LAF_CACHE_DIR", "/tmp/envcache", 1);
  EXPECT_EQ(cache_dir(c), fs::path("/tmp/envcache"));
}

TEST(Aggregate, MeanAndSampleStd) {
  EXPECT_EQ(format_mean_std({1.0, 2.0, 3.0}), "2.00±1.00");
  EXPECT_EQ(format_mean_std({4.0}), "4.00±0.00");
  MetricsReport a, b;
  a.method = b.method = "laf";
  a.train_r = 90.0;
  b.train_r = 94.0;
  a.test = 80.0;
  b.test = 84.0;
  const json agg = aggregate_reports({a, b});
  EXPECT_DOUBLE_EQ(agg["train_r"]["mean"].get<double>(), 92.0);
  EXPECT_NEAR(agg["test"]["std"].get<double>(), std::sqrt(8.0), 1e-12);
  EXPECT_EQ(agg["method"], "laf");
}

class EndToEnd : public ::testing::Test {
 protected:
  CacheEnvGuard guard;
};

TEST_F(EndToEnd, RunWritesArtifactsAndReusesCache) {
  const auto dir = testing::scratch_dir("e2e");
  auto cfg = config_from_json(tiny_blobs(dir / "laf"));
  const auto first = run_experiment(cfg);
  ASSERT_EQ(first.seeds.size(), 2u);
  for (const auto& s : first.seeds) {
    ASSERT_TRUE(s.report) << (s.error ? *s.error : "");
    EXPECT_EQ(s.report->settings["label_reads_during_unlearning"], 0);
    EXPECT_TRUE(s.cached_stages.empty());
  }
  for (const char* f : {"config.json", "metrics.csv", "aggregate.json", "aggregate.csv",
                        "split_seed0.json", "epochs_seed0.csv", "model_seed0.bin",
                        "model_seed0.bin.json", "report_seed1.json", "metrics_seed1.csv",
                        "timing_seed1.log"}) {
    EXPECT_TRUE(fs::exists(dir / "laf" / f)) << f;
  }
  EXPECT_FALSE(fs::exists(dir / "laf" / "failures.json"));

  // Same config into a second directory sharing the cache: the original
  // model and h are reused and the results are identical.
  cfg.output_dir = dir / "laf2";
  cfg.cache_dir = dir / "laf" / "cache";
  const auto second = run_experiment(cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& c = second.seeds[i].cached_stages;
    EXPECT_NE(std::find(c.begin(), c.end(), "original"), c.end());
    EXPECT_NE(std::find(c.begin(), c.end(), "vae_h"), c.end());
    EXPECT_EQ(second.seeds[i].report->model_hash, first.seeds[i].report->model_hash);
    EXPECT_EQ(second.seeds[i].report->asr, first.seeds[i].report->asr);
  }
}

TEST_F(EndToEnd, RetrainAndCompare) {
  const auto dir = testing::scratch_dir("e2e_compare");
  auto cfg = config_from_json(tiny_blobs(dir / "retrain"));
  cfg.method = Method::Retrain;
  const auto r = run_experiment(cfg);
  for (const auto& s : r.seeds) {
    ASSERT_TRUE(s.report);
    EXPECT_EQ(s.report->settings["forgetting_input_reads"], 0);
    EXPECT_DOUBLE_EQ(*s.report->test_f, 0.0);
  }
  cfg.method = Method::Original;
  cfg.output_dir = dir / "original";
  run_experiment(cfg);

  const auto t = compare_runs({dir / "original", dir / "retrain"});
  EXPECT_EQ(t.columns, (std::vector<std::string>{"Train_r", "Train_f", "Test_r", "Test_f", "ASR"}));
  EXPECT_EQ(t.methods, (std::vector<std::string>{"original", "retrain"}));
  EXPECT_NE(t.text.find("**"), std::string::npos);
  EXPECT_EQ(std::count(t.csv.begin(), t.csv.end(), '\n'), 3);

  auto other = config_from_json(tiny_blobs(dir / "dr"));
  other.scenario.kind = Scenario::DataRemoval;
  other.scenario.class_lo = 0;
  other.scenario.class_hi = 1;
  other.method = Method::Original;
  other.seeds = {0};
  run_experiment(other);
  EXPECT_THROW(compare_runs({dir / "original", dir / "dr"}), PreconditionError);
  EXPECT_THROW(compare_runs({}), PreconditionError);
}

TEST_F(EndToEnd, FailingSeedIsRecorded) {
  const auto dir = testing::scratch_dir("e2e_fail");
  auto j = tiny_blobs(dir / "bad");
  j["scenario"]["target_class"] = 9;  // absent from a 4-class set
  const auto r = run_experiment(config_from_json(j));
  for (const auto& s : r.seeds) {
    EXPECT_FALSE(s.report);
    EXPECT_EQ(*s.failed_stage, "scenario");
  }
  EXPECT_TRUE(fs::exists(dir / "bad" / "failures.json"));
}

}  // namespace
}  // namespace laf
