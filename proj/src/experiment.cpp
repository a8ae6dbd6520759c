// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include "laf/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <type_traits>

#include <spdlog/spdlog.h>

#include "laf/checkpoint.hpp"
#include "laf/hash.hpp"

namespace laf {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::map<std::string, Method>& method_names() {
  static const std::map<std::string, Method> names = {
      {"laf", Method::Laf},         {"laf_r", Method::LafR},       {"retrain", Method::Retrain},
      {"neggrad", Method::NegGrad}, {"none_l1", Method::NoneL1},   {"none_l2", Method::NoneL2},
      {"add_kl", Method::AddKl},    {"vae_dr", Method::VaeDr},     {"two_stage", Method::TwoStage},
      {"original", Method::Original}};
  return names;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  Fnv1a h;
  h.update(&seed, sizeof seed);
  h.update(stage);
  return h.digest();
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

json train_options_json(const TrainOptions& o) {
  return {{"epochs", o.epochs}, {"lr", o.lr}, {"batch_size", o.batch_size}};
}

json baseline_json(const BaselineSpec& s) {
  return {{"epochs", s.epochs}, {"lr", s.lr}, {"batch_size", s.batch_size}};
}

json unlearn_json(const UnlearnConfig& u) {
  return {{"epochs_r", u.epochs_r},
          {"tau", u.tau},
          {"lr_ue", u.lr_ue},
          {"lr_ra", u.lr_ra},
          {"batch_size", u.batch_size},
          {"strategy", to_string(u.strategy)},
          {"keep_kl_terms", u.keep_kl_terms},
          {"vae_train_set", u.vae_train_set},
          {"disable_ue", u.disable_ue},
          {"disable_ra", u.disable_ra},
          {"repair", u.repair},
          {"repair_lr", u.repair_lr}};
}

struct Stopwatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string to_string(Method m) {
  for (const auto& [name, value] : method_names()) {
    if (value == m) return name;
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  const auto it = method_names().find(s);
  if (it == method_names().end()) throw ConfigError("unknown method '" + s + "'");
  return it->second;
}

double default_tau(ArchId arch, Scenario scenario) {
  const bool resnet = arch == ArchId::Resnet18Like;
  switch (scenario) {
    case Scenario::DataRemoval:
      return resnet ? 20.0 : 2.0;
    case Scenario::ClassRemoval:
      return 20.0;
    case Scenario::NoisyLabel:
      return resnet ? 5.0 : 20.0;
  }
  return 2.0;
}

ExperimentConfig config_from_json(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  try {
    c.name = get_or<std::string>(j, "name", c.name);

    const json& d = j.at("dataset");
    c.dataset.kind = get_or<std::string>(d, "kind", "idx");
    if (c.dataset.kind == "idx") {
      fs::path dir = d.at("dir").get<std::string>();
      if (dir.is_relative() && !base_dir.empty()) dir = base_dir / dir;
      c.dataset.dir = dir.lexically_normal();
      c.dataset.num_classes = get_or(d, "num_classes", 10);
    } else if (c.dataset.kind == "blobs") {
      c.dataset.num_classes = get_or(d, "num_classes", 10);
      c.dataset.per_class = get_or(d, "per_class", 100);
      c.dataset.dim = get_or(d, "dim", 2);
      c.dataset.spread = get_or(d, "spread", 0.5);
      c.dataset.seed = get_or<std::uint64_t>(d, "seed", 1);
    } else {
      throw ConfigError("dataset.kind must be 'idx' or 'blobs', got '" + c.dataset.kind + "'");
    }

    if (j.contains("arch")) {
      const json& a = j["arch"];
      c.arch = arch_from_string(get_or<std::string>(a, "id", "small-cnn"));
      c.arch_options.rep_dim = get_or(a, "rep_dim", c.arch_options.rep_dim);
      c.arch_options.mlp_hidden = get_or(a, "mlp_hidden", c.arch_options.mlp_hidden);
      c.arch_options.resnet_base_width = get_or(a, "resnet_base_width", c.arch_options.resnet_base_width);
    }

    const json& s = j.at("scenario");
    c.scenario.kind = scenario_from_string(s.at("kind").get<std::string>());
    c.scenario.fraction = get_or(s, "fraction", c.scenario.kind == Scenario::NoisyLabel ? 0.6 : 0.4);
    c.scenario.class_lo = get_or(s, "class_lo", c.scenario.kind == Scenario::NoisyLabel ? 0 : 5);
    c.scenario.class_hi = get_or(s, "class_hi", c.scenario.kind == Scenario::NoisyLabel ? 4 : 9);
    c.scenario.target_class = get_or(s, "target_class", 0);

    c.method = method_from_string(get_or<std::string>(j, "method", "laf"));

    const bool cifar_family = c.arch == ArchId::Resnet18Like;
    const double family_lr = cifar_family ? 5e-5 : 1e-3;
    if (j.contains("original")) {
      const json& o = j["original"];
      c.original.epochs = get_or(o, "epochs", c.original.epochs);
      c.original.lr = get_or(o, "lr", c.original.lr);
      c.original.batch_size = get_or(o, "batch_size", c.original.batch_size);
    }
    c.vae.latent_dim = cifar_family ? 16 : 8;
    if (j.contains("vae")) {
      const json& v = j["vae"];
      c.vae.epochs = get_or(v, "epochs", c.vae.epochs);
      c.vae.lr = get_or(v, "lr", c.vae.lr);
      c.vae.batch_size = get_or(v, "batch_size", c.vae.batch_size);
      c.vae.latent_dim = get_or(v, "latent_dim", c.vae.latent_dim);
      c.vae.reduction = recon_reduction_from_string(get_or<std::string>(v, "reconstruction", "mean"));
    }
    if (j.contains("retrain")) {
      const json& r = j["retrain"];
      c.retrain.epochs = get_or(r, "epochs", c.retrain.epochs);
      c.retrain.lr = get_or(r, "lr", c.retrain.lr);
      c.retrain.batch_size = get_or(r, "batch_size", c.retrain.batch_size);
    }
    if (j.contains("neggrad")) {
      const json& r = j["neggrad"];
      c.neggrad.epochs = get_or(r, "epochs", c.neggrad.epochs);
      c.neggrad.lr = get_or(r, "lr", c.neggrad.lr);
      c.neggrad.batch_size = get_or(r, "batch_size", c.neggrad.batch_size);
    }
    c.neggrad.method = BaselineMethod::NegGrad;
    if (j.contains("unlearn")) {
      const json& u = j["unlearn"];
      auto opt = [&](const char* key, auto& field) {
        using T = typename std::decay_t<decltype(field)>::value_type;
        if (u.contains(key)) field = u[key].get<T>();
      };
      opt("epochs_r", c.unlearn.epochs_r);
      opt("tau", c.unlearn.tau);
      opt("lr_ue", c.unlearn.lr_ue);
      opt("lr_ra", c.unlearn.lr_ra);
      opt("batch_size", c.unlearn.batch_size);
      opt("keep_kl_terms", c.unlearn.keep_kl_terms);
      opt("vae_train_set", c.unlearn.vae_train_set);
      opt("repair_lr", c.unlearn.repair_lr);
      if (u.contains("strategy")) c.unlearn.strategy = strategy_from_string(u["strategy"].get<std::string>());
    }
    if (!c.unlearn.lr_ue) c.unlearn.lr_ue = family_lr;
    if (!c.unlearn.lr_ra) c.unlearn.lr_ra = family_lr;
    if (!c.unlearn.repair_lr) c.unlearn.repair_lr = family_lr;

    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (c.seeds.empty()) throw ConfigError("seeds must be non-empty");
    if (j.contains("output_dir")) {
      fs::path out = j["output_dir"].get<std::string>();
      if (out.is_relative() && !base_dir.empty()) out = base_dir / out;
      c.output_dir = out.lexically_normal();
    }
    if (j.contains("cache_dir")) {
      fs::path cache = j["cache_dir"].get<std::string>();
      if (cache.is_relative() && !base_dir.empty()) cache = base_dir / cache;
      c.cache_dir = cache.lexically_normal();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  resolve_unlearn(c, 0).validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  return config_from_json(read_json_file(path), fs::absolute(path).parent_path());
}

json to_json(const ExperimentConfig& c) {
  json d = {{"kind", c.dataset.kind}, {"num_classes", c.dataset.num_classes}};
  if (c.dataset.kind == "idx") {
    d["dir"] = c.dataset.dir.string();
  } else {
    d["per_class"] = c.dataset.per_class;
    d["dim"] = c.dataset.dim;
    d["spread"] = c.dataset.spread;
    d["seed"] = c.dataset.seed;
  }
  json s = {{"kind", to_string(c.scenario.kind)}};
  if (c.scenario.kind == Scenario::ClassRemoval) {
    s["target_class"] = c.scenario.target_class;
  } else {
    s["fraction"] = c.scenario.fraction;
    s["class_lo"] = c.scenario.class_lo;
    s["class_hi"] = c.scenario.class_hi;
  }
  json u = json::object();
  if (c.unlearn.epochs_r) u["epochs_r"] = *c.unlearn.epochs_r;
  if (c.unlearn.tau) u["tau"] = *c.unlearn.tau;
  if (c.unlearn.lr_ue) u["lr_ue"] = *c.unlearn.lr_ue;
  if (c.unlearn.lr_ra) u["lr_ra"] = *c.unlearn.lr_ra;
  if (c.unlearn.batch_size) u["batch_size"] = *c.unlearn.batch_size;
  if (c.unlearn.strategy) u["strategy"] = to_string(*c.unlearn.strategy);
  if (c.unlearn.keep_kl_terms) u["keep_kl_terms"] = *c.unlearn.keep_kl_terms;
  if (c.unlearn.vae_train_set) u["vae_train_set"] = *c.unlearn.vae_train_set;
  if (c.unlearn.repair_lr) u["repair_lr"] = *c.unlearn.repair_lr;
  json out = {{"name", c.name},
              {"dataset", d},
              {"arch",
               {{"id", to_string(c.arch)},
                {"rep_dim", c.arch_options.rep_dim},
                {"mlp_hidden", c.arch_options.mlp_hidden},
                {"resnet_base_width", c.arch_options.resnet_base_width}}},
              {"scenario", s},
              {"method", to_string(c.method)},
              {"original", train_options_json(c.original)},
              {"vae",
               {{"epochs", c.vae.epochs},
                {"lr", c.vae.lr},
                {"batch_size", c.vae.batch_size},
                {"latent_dim", c.vae.latent_dim},
                {"reconstruction", to_string(c.vae.reduction)}}},
              {"retrain", baseline_json(c.retrain)},
              {"neggrad", baseline_json(c.neggrad)},
              {"unlearn", u},
              {"seeds", c.seeds},
              {"output_dir", c.output_dir.string()}};
  if (!c.cache_dir.empty()) out["cache_dir"] = c.cache_dir.string();
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = to_json(cfg);
  j.erase("seeds");
  j.erase("output_dir");
  j.erase("cache_dir");
  j.erase("name");
  return fnv1a_hex(j.dump());
}

UnlearnConfig resolve_unlearn(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto& o = cfg.unlearn;
  UnlearnConfig u;
  u.epochs_r = o.epochs_r.value_or(5);
  u.tau = o.tau.value_or(default_tau(cfg.arch, cfg.scenario.kind));
  u.lr_ue = o.lr_ue.value_or(1e-3);
  u.lr_ra = o.lr_ra.value_or(1e-3);
  u.batch_size = o.batch_size.value_or(32);
  u.strategy = o.strategy.value_or(Strategy::Alternating);
  u.keep_kl_terms = o.keep_kl_terms.value_or(false);
  u.vae_train_set = o.vae_train_set.value_or("full");
  u.repair_lr = o.repair_lr.value_or(1e-3);
  u.seed = derive_seed(seed, "unlearn");
  switch (cfg.method) {
    case Method::LafR:
      u.repair = true;
      break;
    case Method::NoneL1:
      u.disable_ue = true;
      break;
    case Method::NoneL2:
      u.disable_ra = true;
      break;
    case Method::AddKl:
      u.keep_kl_terms = true;
      break;
    case Method::VaeDr:
      u.vae_train_set = "remaining";
      break;
    case Method::TwoStage:
      u.strategy = Strategy::TwoStage;
      break;
    default:
      break;
  }
  return u;
}

LoadedData load_data(const DatasetConfig& cfg) {
  if (cfg.kind == "blobs") {
    auto [train, test] = make_blobs(cfg.num_classes, cfg.per_class, cfg.dim, cfg.spread, cfg.seed);
    return {std::move(train), std::move(test)};
  }
  const fs::path& d = cfg.dir;
  return {load_idx(d / "train-images-idx3-ubyte.gz", d / "train-labels-idx1-ubyte.gz", SplitTag::Train,
                   cfg.num_classes),
          load_idx(d / "test-images-idx3-ubyte.gz", d / "test-labels-idx1-ubyte.gz", SplitTag::Test,
                   cfg.num_classes)};
}

ScenarioData build_scenario(const ScenarioConfig& cfg, const LabeledDataset& clean_train,
                            std::uint64_t seed) {
  switch (cfg.kind) {
    case Scenario::DataRemoval:
      return {clean_train,
              make_data_removal_split(clean_train, cfg.fraction, cfg.class_lo, cfg.class_hi, seed)};
    case Scenario::ClassRemoval:
      return {clean_train, make_class_removal_split(clean_train, cfg.target_class)};
    case Scenario::NoisyLabel: {
      auto noisy = make_noisy_label_split(clean_train, cfg.fraction, cfg.class_lo, cfg.class_hi, seed);
      return {std::move(noisy.corrupted), std::move(noisy.split)};
    }
  }
  throw ConfigError("unknown scenario");
}

fs::path cache_dir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("LAF_CACHE_DIR"); env && *env) return env;
  if (!cfg.cache_dir.empty()) return cfg.cache_dir;
  return cfg.output_dir / "cache";
}

std::string format_mean_std(const std::vector<double>& values) {
  if (values.empty()) return "";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << mean_of(values) << "±" << std_of(values);
  return os.str();
}

json aggregate_reports(const std::vector<MetricsReport>& reports) {
  json agg = {{"n", reports.size()}};
  if (reports.empty()) return agg;
  agg["scenario"] = to_string(reports.front().scenario);
  agg["method"] = reports.front().method;
  agg["config_hash"] = reports.front().config_hash;
  agg["attack_version"] = reports.front().attack_version;
  std::vector<std::uint64_t> seeds;
  for (const auto& r : reports) seeds.push_back(r.seed);
  agg["seeds"] = seeds;
  auto add = [&](const char* key, auto getter) {
    std::vector<double> vals;
    for (const auto& r : reports) {
      if (auto v = getter(r)) vals.push_back(*v);
    }
    if (vals.empty()) {
      agg[key] = nullptr;
      return;
    }
    agg[key] = {{"mean", mean_of(vals)}, {"std", std_of(vals)}, {"text", format_mean_std(vals)}};
  };
  add("train_r", [](const MetricsReport& r) { return std::optional<double>(r.train_r); });
  add("train_f", [](const MetricsReport& r) { return std::optional<double>(r.train_f); });
  add("test", [](const MetricsReport& r) { return r.test; });
  add("test_r", [](const MetricsReport& r) { return r.test_r; });
  add("test_f", [](const MetricsReport& r) { return r.test_f; });
  add("asr", [](const MetricsReport& r) { return std::optional<double>(r.asr); });
  add("wall_seconds", [](const MetricsReport& r) { return std::optional<double>(r.wall_seconds); });
  return agg;
}

namespace {

std::string aggregate_csv(const json& agg) {
  std::ostringstream os;
  os << "scenario,method,seeds,train_r,train_f,test,test_r,test_f,asr,wall_seconds\n";
  auto cell = [&](const char* key) -> std::string {
    return agg.contains(key) && !agg[key].is_null() ? agg[key]["text"].get<std::string>() : "";
  };
  os << agg.value("scenario", "") << ',' << agg.value("method", "") << ',' << agg.value("n", 0) << ','
     << cell("train_r") << ',' << cell("train_f") << ',' << cell("test") << ',' << cell("test_r")
     << ',' << cell("test_f") << ',' << cell("asr") << ',' << cell("wall_seconds") << '\n';
  return os.str();
}

// Everything a single seed needs, shared across seeds of one run.
struct RunContext {
  const ExperimentConfig& cfg;
  LoadedData data;
  std::string hash;
  fs::path cache;
};

std::string original_key(const ExperimentConfig& cfg, std::uint64_t seed) {
  json j = to_json(cfg);
  json k = {{"dataset", j["dataset"]}, {"arch", j["arch"]}, {"original", j["original"]}, {"seed", seed}};
  // Noisy-label originals are trained on the corrupted labels.
  if (cfg.scenario.kind == Scenario::NoisyLabel) k["scenario"] = j["scenario"];
  return fnv1a_hex(k.dump());
}

std::string vae_h_key(const ExperimentConfig& cfg, const std::string& orig_key, const UnlearnConfig& u) {
  json j = to_json(cfg);
  json k = {{"original", orig_key}, {"vae", j["vae"]}, {"train_set", u.vae_train_set}};
  if (u.vae_train_set == "remaining") k["scenario"] = j["scenario"];
  return fnv1a_hex(k.dump());
}

SeedOutcome run_seed(RunContext& ctx, std::uint64_t seed) {
  const ExperimentConfig& cfg = ctx.cfg;
  const fs::path& out = cfg.output_dir;
  const std::string tag = "seed" + std::to_string(seed);
  SeedOutcome outcome;
  outcome.seed = seed;
  std::ostringstream timing;
  timing << "stage,seconds,cached\n";
  auto log_stage = [&](const std::string& stage, double secs, bool cached) {
    timing << stage << ',' << std::fixed << std::setprecision(3) << secs << ',' << (cached ? 1 : 0) << '\n';
    if (cached) outcome.cached_stages.push_back(stage);
    spdlog::info("[{}] {} {:.2f}s{}", tag, stage, secs, cached ? " (cached)" : "");
  };
  std::string stage = "scenario";
  const Stopwatch total;
  try {
    Stopwatch sw;
    const ScenarioData sc = build_scenario(cfg.scenario, ctx.data.train, seed);
    write_text(out / ("split_" + tag + ".json"), split_to_json(sc.split).dump(2) + "\n");
    log_stage(stage, sw.seconds(), false);

    stage = "original";
    sw = {};
    const std::string okey = original_key(cfg, seed);
    const fs::path g_path = ctx.cache / ("original_" + okey + ".bin");
    ClassifierModel g;
    bool cached = fs::exists(g_path) && fs::exists(sidecar_path(g_path));
    if (cached) {
      g = load_model(g_path).model;
    } else {
      TrainOptions o = cfg.original;
      o.seed = derive_seed(seed, "original");
      g = train_original(build_model(cfg.arch, sc.train.input_shape(), sc.train.num_classes(), seed,
                                     cfg.arch_options),
                         sc.train, o)
              .model;
      save_model(g, g_path, {okey, "original", cfg.arch_options});
    }
    log_stage(stage, sw.seconds(), cached);

    const UnlearnConfig u = resolve_unlearn(cfg, seed);
    ClassifierModel result;
    json extra = json::object();
    const Stopwatch method_clock;
    if (cfg.method == Method::Original) {
      result = g;
    } else if (cfg.method == Method::Retrain) {
      stage = "retrain";
      sw = {};
      BaselineSpec spec = cfg.retrain;
      spec.seed = derive_seed(seed, "retrain");
      auto audit = std::make_shared<AccessAudit>();
      result = retrain_baseline(cfg.arch, sc.train.with_audit(audit), sc.split, spec, cfg.arch_options);
      extra["forgetting_input_reads"] = audit->input_reads(sc.split.forgetting_ids);
      log_stage(stage, sw.seconds(), false);
    } else if (cfg.method == Method::NegGrad) {
      stage = "neggrad";
      sw = {};
      BaselineSpec spec = cfg.neggrad;
      spec.seed = derive_seed(seed, "neggrad");
      result = neggrad_baseline(g, sc.train, sc.split, spec);
      log_stage(stage, sw.seconds(), false);
    } else {
      VaeModel h, h_f;
      if (!u.disable_ue) {
        stage = "vae_h";
        sw = {};
        const std::string hkey = vae_h_key(cfg, okey, u);
        const fs::path h_path = ctx.cache / ("vae_h_" + hkey + ".bin");
        cached = fs::exists(h_path) && fs::exists(sidecar_path(h_path));
        if (cached) {
          h = load_vae(h_path);
        } else {
          const auto& ids = u.vae_train_set == "remaining" ? sc.split.remaining_ids : sc.train.sample_ids();
          VaeTrainOptions vo = cfg.vae;
          vo.seed = derive_seed(seed, "vae_h");
          h = train_vae(VaeRole::H, extract(g, sc.train.gather_inputs(ids)), vo).vae;
          h.train_set = u.vae_train_set;
          h.source_model_hash = model_hash(g);
          save_vae(h, h_path);
        }
        log_stage(stage, sw.seconds(), cached);

        stage = "vae_h_f";
        sw = {};
        VaeTrainOptions vo = cfg.vae;
        vo.seed = derive_seed(seed, "vae_h_f");
        h_f = train_vae(VaeRole::HF, extract(g, sc.train.gather_inputs(sc.split.forgetting_ids)), vo).vae;
        h_f.source_model_hash = model_hash(g);
        log_stage(stage, sw.seconds(), false);
      } else {
        h = build_vae(VaeRole::H, g.rep_dim, cfg.vae.latent_dim, 0);
        h_f = build_vae(VaeRole::HF, g.rep_dim, cfg.vae.latent_dim, 0);
      }

      stage = "unlearn";
      sw = {};
      auto audit = std::make_shared<AccessAudit>();
      UnlearnTrace trace;
      result = laf_unlearn(g, sc.train.with_audit(audit), sc.split, h, h_f, u, &trace);
      extra["label_reads_during_unlearning"] = audit->label_reads();
      std::ostringstream epochs;
      epochs << "epoch,l_ue,l_ra,wall_seconds\n" << std::setprecision(10);
      for (const auto& row : trace.epochs) {
        epochs << row.epoch << ',' << row.l_ue << ',' << row.l_ra << ',' << row.wall_seconds << '\n';
      }
      write_text(out / ("epochs_" + tag + ".csv"), epochs.str());
      log_stage(stage, sw.seconds(), false);

      if (u.repair) {
        stage = "repair";
        sw = {};
        result = supervised_repair(result, sc.train, sc.split, u.repair_lr, derive_seed(seed, "repair"),
                                   u.batch_size);
        log_stage(stage, sw.seconds(), false);
      }
    }
    const double method_seconds = method_clock.seconds();

    stage = "checkpoint";
    save_model(result, out / ("model_" + tag + ".bin"), {ctx.hash, to_string(cfg.method), cfg.arch_options});

    stage = "evaluate";
    sw = {};
    MetricsReport r = metrics_report(result, sc.train, ctx.data.test, sc.split, seed);
    r.method = to_string(cfg.method);
    r.config_hash = ctx.hash;
    r.wall_seconds = method_seconds;
    r.settings = {{"unlearn", unlearn_json(u)},
                  {"original", train_options_json(cfg.original)},
                  {"retrain", baseline_json(cfg.retrain)},
                  {"neggrad", baseline_json(cfg.neggrad)},
                  {"vae", {{"epochs", cfg.vae.epochs},
                           {"lr", cfg.vae.lr},
                           {"latent_dim", cfg.vae.latent_dim},
                           {"reconstruction", to_string(cfg.vae.reduction)}}},
                  {"sizes",
                   {{"train", sc.train.size()},
                    {"test", ctx.data.test.size()},
                    {"remaining", sc.split.remaining_ids.size()},
                    {"forgetting", sc.split.forgetting_ids.size()}}},
                  {"noisy_train_f_labels", "corrupted"}};
    r.settings.update(extra);
    log_stage(stage, sw.seconds(), false);
    log_stage("total", total.seconds(), false);

    write_text(out / ("report_" + tag + ".json"), to_json(r).dump(2) + "\n");
    write_text(out / ("metrics_" + tag + ".csv"), csv_header() + "\n" + csv_row(r) + "\n");
    outcome.report = std::move(r);
  } catch (const std::exception& e) {
    spdlog::error("[{}] stage '{}' failed: {}", tag, stage, e.what());
    outcome.failed_stage = stage;
    outcome.error = e.what();
  }
  write_text(out / ("timing_" + tag + ".log"), timing.str());
  return outcome;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
  resolve_unlearn(cfg, 0).validate();
  fs::create_directories(cfg.output_dir);
  RunContext ctx{cfg, load_data(cfg.dataset), config_hash(cfg), cache_dir(cfg)};
  fs::create_directories(ctx.cache);
  write_text(cfg.output_dir / "config.json", to_json(cfg).dump(2) + "\n");

  RunResult result;
  result.dir = cfg.output_dir;
  std::vector<MetricsReport> reports;
  json failures = json::array();
  for (std::uint64_t seed : cfg.seeds) {
    SeedOutcome o = run_seed(ctx, seed);
    if (o.report) {
      reports.push_back(*o.report);
    } else {
      failures.push_back({{"seed", seed}, {"stage", *o.failed_stage}, {"error", *o.error}});
    }
    result.seeds.push_back(std::move(o));
  }

  std::string csv = csv_header() + "\n";
  for (const auto& r : reports) csv += csv_row(r) + "\n";
  write_text(cfg.output_dir / "metrics.csv", csv);
  result.aggregate = aggregate_reports(reports);
  if (reports.empty()) {
    result.aggregate["scenario"] = to_string(cfg.scenario.kind);
    result.aggregate["method"] = to_string(cfg.method);
  }
  write_text(cfg.output_dir / "aggregate.json", result.aggregate.dump(2) + "\n");
  write_text(cfg.output_dir / "aggregate.csv", aggregate_csv(result.aggregate));
  const fs::path manifest = cfg.output_dir / "failures.json";
  if (!failures.empty()) {
    write_text(manifest, json{{"config_hash", ctx.hash}, {"failures", failures}}.dump(2) + "\n");
  } else if (fs::exists(manifest)) {
    fs::remove(manifest);
  }
  return result;
}

ComparisonTable compare_runs(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.empty()) throw PreconditionError("compare needs at least one run directory");
  std::vector<json> aggs;
  for (const auto& dir : run_dirs) aggs.push_back(read_json_file(dir / "aggregate.json"));
  const std::string scenario = aggs.front().value("scenario", "");
  for (std::size_t i = 1; i < aggs.size(); ++i) {
    if (aggs[i].value("scenario", "") != scenario) {
      throw PreconditionError("runs cover different scenarios: '" + scenario + "' vs '" +
                              aggs[i].value("scenario", "") + "' (" + run_dirs[i].string() + ")");
    }
  }
  ComparisonTable t;
  const bool class_removal = scenario == to_string(Scenario::ClassRemoval);
  const std::vector<std::pair<std::string, std::string>> cols =
      class_removal ? std::vector<std::pair<std::string, std::string>>{{"train_r", "Train_r"},
                                                                        {"train_f", "Train_f"},
                                                                        {"test_r", "Test_r"},
                                                                        {"test_f", "Test_f"},
                                                                        {"asr", "ASR"}}
                    : std::vector<std::pair<std::string, std::string>>{
                          {"train_r", "Train_r"}, {"train_f", "Train_f"}, {"test", "Test"}, {"asr", "ASR"}};
  for (const auto& c : cols) t.columns.push_back(c.second);
  std::optional<std::size_t> retrain_row;
  for (std::size_t i = 0; i < aggs.size(); ++i) {
    const auto& a = aggs[i];
    t.methods.push_back(a.value("method", run_dirs[i].filename().string()));
    if (t.methods.back() == "retrain") retrain_row = i;
    std::vector<std::optional<double>> means;
    std::vector<std::string> cells;
    for (const auto& [key, label] : cols) {
      if (a.contains(key) && !a[key].is_null()) {
        means.push_back(a[key]["mean"].get<double>());
        cells.push_back(a[key]["text"].get<std::string>());
      } else {
        means.push_back(std::nullopt);
        cells.push_back("-");
      }
    }
    t.means.push_back(std::move(means));
    t.cells.push_back(std::move(cells));
  }

  // Best per column: higher is better for retained accuracy; forgetting
  // metrics are judged by distance to retrain when a retrain row exists.
  std::vector<std::optional<std::size_t>> best(cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const std::string& key = cols[c].first;
    const bool higher = key == "train_r" || key == "test" || key == "test_r";
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < t.methods.size(); ++r) {
      if (!t.means[r][c]) continue;
      double score;
      if (higher) {
        score = *t.means[r][c];
      } else if (retrain_row && t.means[*retrain_row][c]) {
        if (r == *retrain_row) continue;
        score = -std::abs(*t.means[r][c] - *t.means[*retrain_row][c]);
      } else {
        score = -*t.means[r][c];
      }
      if (score > best_score) {
        best_score = score;
        best[c] = r;
      }
    }
  }

  std::ostringstream csv;
  csv << "method";
  for (const auto& c : t.columns) csv << ',' << c;
  csv << '\n';
  for (std::size_t r = 0; r < t.methods.size(); ++r) {
    csv << t.methods[r];
    for (const auto& cell : t.cells[r]) csv << ',' << (cell == "-" ? "" : cell);
    csv << '\n';
  }
  t.csv = csv.str();

  // Display width counts code points so the plus-minus sign aligns.
  auto width = [](const std::string& s) {
    std::size_t n = 0;
    for (unsigned char ch : s) n += (ch & 0xC0) != 0x80 ? 1 : 0;
    return n;
  };
  std::vector<std::vector<std::string>> grid;
  grid.push_back({"Method"});
  for (const auto& c : t.columns) grid.back().push_back(c);
  for (std::size_t r = 0; r < t.methods.size(); ++r) {
    std::vector<std::string> row{t.methods[r]};
    for (std::size_t c = 0; c < cols.size(); ++c) {
      row.push_back(best[c] == r ? "**" + t.cells[r][c] + "**" : t.cells[r][c]);
    }
    grid.push_back(std::move(row));
  }
  std::vector<std::size_t> widths(grid.front().size(), 0);
  for (const auto& row : grid) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], width(row[c]));
  }
  std::ostringstream text;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    for (std::size_t c = 0; c < grid[r].size(); ++c) {
      if (c) text << "  ";
      text << grid[r][c];
      if (c + 1 < grid[r].size()) text << std::string(widths[c] - width(grid[r][c]), ' ');
    }
    text << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : widths) total += w;
      text << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
    }
  }
  t.text = text.str();
  return t;
}

}  // namespace laf
