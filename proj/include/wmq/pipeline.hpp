#pragma once

// End-to-end experiment driver: config parsing, the gen-data / train /
// variants / eval / stats / report stages, and artifact bookkeeping.
//
// Layout under output_dir:
//   config.json              resolved config
//   dataset/, base_model/    model-store directories
//   variants/<name>/         fake-quantized variant weights
//   sizes.json
//   episodes.csv (+ .meta.json)
//   comparisons.json matchups.json bins.json frontier.json correlations.json
//   main_table.csv (+ .meta.json), *.svg
//
// Every artifact carries the config hash: JSON files in a "config_hash"
// field, model directories in manifest extras, CSVs in a sidecar, SVGs in a
// root attribute.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "wmq/allocation.hpp"
#include "wmq/error.hpp"
#include "wmq/model_store.hpp"
#include "wmq/planner.hpp"
#include "wmq/report.hpp"
#include "wmq/stats.hpp"
#include "wmq/toyworld.hpp"
#include "wmq/worldmodel.hpp"

namespace wmq {

namespace fs = std::filesystem;
using nlohmann::json;

struct DataConfig {
  int n_traj = 1000;
  int traj_len = 10;
};

struct BudgetSpec {
  PlannerBudget budget;
  std::vector<std::uint64_t> seeds;
  int difficulty_bins = 3;
};

struct ExperimentConfig {
  WallEnvConfig env;
  DataConfig data;
  TrainConfig train;
  ModelDims model;
  std::vector<BudgetSpec> budgets = {{budget_a(), {0, 1, 2}, 3}, {budget_b(), {0, 1}, 2}};
  int episodes_per_run = 10;
  CEMConfig cem;
  json variants = "paper-core";  // as written: group name or list
  std::string output_dir = "wmq_out";
  std::uint64_t master_seed = 0;
  int bootstrap_resamples = 4000;
  bool record_wall_clock = false;
};

// ---------------------------------------------------------------------------
// config parsing

namespace detail {

inline std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline void check_object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError("config " + (path.empty() ? "root" : path) + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::ranges::find_if(allowed, [&](const char* a) { return k == a; }) == allowed.end())
      throw ValidationError("config " + join_path(path, k) + ": unknown field");
  }
}

template <class T>
void read(const json& obj, const std::string& path, const char* key, T& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  const std::string p = join_path(path, key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ValidationError("config " + p + ": expected a boolean");
    out = v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ValidationError("config " + p + ": expected a string");
    out = v.get<std::string>();
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_unsigned()) throw ValidationError("config " + p + ": expected a non-negative integer");
    out = v.get<T>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ValidationError("config " + p + ": expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max())
      throw ValidationError("config " + p + ": integer out of range");
    out = static_cast<T>(x);
  } else {
    if (!v.is_number()) throw ValidationError("config " + p + ": expected a number");
    out = v.get<T>();
  }
}

/// Runs `fn`, prefixing any validation message with the field path.
template <class F>
void validate_at(const std::string& path, F&& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
}

}  // namespace detail

/// Canonical variant list for a `variants` value: "paper-core", "paper-all",
/// a canonical name, or a list of any of these (duplicates dropped).
inline std::vector<std::string> expand_variants(const json& v, const std::string& path = "variants") {
  std::vector<std::string> out;
  auto add_one = [&](const std::string& name, const std::string& p) {
    std::vector<std::string> names;
    if (name == "paper-core") {
      for (auto& [n, pol] : core_study_variants()) names.push_back(n);
    } else if (name == "paper-all") {
      for (auto& [n, pol] : enumerate_study_variants()) names.push_back(n);
    } else {
      detail::validate_at(p, [&] {
        const auto pol = parse_variant(name);
        if (variant_name(pol) != name) throw ValidationError("'" + name + "' is an alias of " + variant_name(pol));
      });
      names.push_back(name);
    }
    for (auto& n : names)
      if (std::ranges::find(out, n) == out.end()) out.push_back(n);
  };
  if (v.is_string()) {
    add_one(v.get<std::string>(), path);
  } else if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = path + "[" + std::to_string(i) + "]";
      if (!v[i].is_string()) throw ValidationError("config " + p + ": expected a variant name");
      add_one(v[i].get<std::string>(), p);
    }
  } else {
    throw ValidationError("config " + path + ": expected a variant group name or a list of names");
  }
  if (out.empty()) throw ValidationError("config " + path + ": no variants selected");
  return out;
}

inline ExperimentConfig config_from_json(const json& j) {
  using detail::check_object;
  using detail::read;
  ExperimentConfig c;
  check_object(j, "",
               {"env", "data", "train", "model", "budgets", "episodes_per_run", "cem", "variants", "output_dir",
                "master_seed", "bootstrap_resamples", "record_wall_clock"});
  if (j.contains("env")) {
    const auto& e = j["env"];
    check_object(e, "env", {"wall_x", "gap_center", "gap_half_width", "max_step", "image_side", "success_radius"});
    read(e, "env", "wall_x", c.env.wall_x);
    read(e, "env", "gap_center", c.env.gap_center);
    read(e, "env", "gap_half_width", c.env.gap_half_width);
    read(e, "env", "max_step", c.env.max_step);
    read(e, "env", "image_side", c.env.image_side);
    read(e, "env", "success_radius", c.env.success_radius);
  }
  if (j.contains("data")) {
    const auto& d = j["data"];
    check_object(d, "data", {"n_traj", "traj_len"});
    read(d, "data", "n_traj", c.data.n_traj);
    read(d, "data", "traj_len", c.data.traj_len);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    check_object(t, "train",
                 {"epochs", "batch_size", "learning_rate", "prediction_loss_weight", "state_loss_weight", "seed",
                  "validation_fraction"});
    read(t, "train", "epochs", c.train.epochs);
    read(t, "train", "batch_size", c.train.batch_size);
    read(t, "train", "learning_rate", c.train.learning_rate);
    read(t, "train", "prediction_loss_weight", c.train.prediction_loss_weight);
    read(t, "train", "state_loss_weight", c.train.state_loss_weight);
    read(t, "train", "seed", c.train.seed);
    read(t, "train", "validation_fraction", c.train.validation_fraction);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_object(m, "model", {"hidden", "latent", "encoder_layers", "predictor_hidden", "predictor_layers"});
    read(m, "model", "hidden", c.model.hidden);
    read(m, "model", "latent", c.model.latent);
    read(m, "model", "encoder_layers", c.model.encoder_layers);
    read(m, "model", "predictor_hidden", c.model.predictor_hidden);
    read(m, "model", "predictor_layers", c.model.predictor_layers);
  }
  if (j.contains("budgets")) {
    const auto& b = j["budgets"];
    if (!b.is_object() || b.empty()) throw ValidationError("config budgets: expected a non-empty object");
    c.budgets.clear();
    for (const auto& [name, spec] : b.items()) {
      const std::string p = "budgets." + name;
      check_object(spec, p, {"goal_h", "opt_steps", "max_iter", "seeds", "difficulty_bins"});
      BudgetSpec bs;
      bs.budget.name = name;
      bs.difficulty_bins = name == "bB" ? 2 : 3;
      read(spec, p, "goal_h", bs.budget.goal_h);
      read(spec, p, "opt_steps", bs.budget.opt_steps);
      read(spec, p, "max_iter", bs.budget.max_iter);
      read(spec, p, "difficulty_bins", bs.difficulty_bins);
      if (!spec.contains("seeds") || !spec["seeds"].is_array() || spec["seeds"].empty())
        throw ValidationError("config " + p + ".seeds: expected a non-empty list of seeds");
      for (std::size_t i = 0; i < spec["seeds"].size(); ++i) {
        const auto& s = spec["seeds"][i];
        if (!s.is_number_unsigned())
          throw ValidationError("config " + p + ".seeds[" + std::to_string(i) + "]: expected a non-negative integer");
        bs.seeds.push_back(s.get<std::uint64_t>());
      }
      c.budgets.push_back(bs);
    }
  }
  read(j, "", "episodes_per_run", c.episodes_per_run);
  if (j.contains("cem")) {
    const auto& e = j["cem"];
    check_object(e, "cem", {"population", "elite_fraction", "init_std", "std_floor"});
    read(e, "cem", "population", c.cem.population);
    read(e, "cem", "elite_fraction", c.cem.elite_fraction);
    read(e, "cem", "init_std", c.cem.init_std);
    read(e, "cem", "std_floor", c.cem.std_floor);
  }
  if (j.contains("variants")) c.variants = j["variants"];
  read(j, "", "output_dir", c.output_dir);
  read(j, "", "master_seed", c.master_seed);
  read(j, "", "bootstrap_resamples", c.bootstrap_resamples);
  read(j, "", "record_wall_clock", c.record_wall_clock);

  // Semantic checks. Sub-config messages already name their field.
  c.env.validate();
  if (c.data.n_traj < 1) throw ValidationError("config data.n_traj: must be >= 1");
  if (c.data.traj_len < 1) throw ValidationError("config data.traj_len: must be >= 1");
  c.train.validate();
  c.model.obs_dim = c.env.obs_dim();
  detail::validate_at("model", [&] { c.model.validate(); });
  if (c.model.encoder_layers < 4) throw ValidationError("config model.encoder_layers: must be >= 4");
  for (const auto& bs : c.budgets) {
    detail::validate_at("budgets." + bs.budget.name, [&] { bs.budget.validate(); });
    if (bs.difficulty_bins != 2 && bs.difficulty_bins != 3)
      throw ValidationError("config budgets." + bs.budget.name + ".difficulty_bins: must be 2 or 3");
  }
  if (c.episodes_per_run < 1) throw ValidationError("config episodes_per_run: must be >= 1");
  c.cem.validate();
  expand_variants(c.variants);
  if (c.output_dir.empty()) throw ValidationError("config output_dir: must not be empty");
  if (c.bootstrap_resamples < 1) throw ValidationError("config bootstrap_resamples: must be >= 1");
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  json budgets = json::object();
  for (const auto& b : c.budgets)
    budgets[b.budget.name] = {{"goal_h", b.budget.goal_h},
                              {"opt_steps", b.budget.opt_steps},
                              {"max_iter", b.budget.max_iter},
                              {"seeds", b.seeds},
                              {"difficulty_bins", b.difficulty_bins}};
  return {{"env",
           {{"wall_x", c.env.wall_x},
            {"gap_center", c.env.gap_center},
            {"gap_half_width", c.env.gap_half_width},
            {"max_step", c.env.max_step},
            {"image_side", c.env.image_side},
            {"success_radius", c.env.success_radius}}},
          {"data", {{"n_traj", c.data.n_traj}, {"traj_len", c.data.traj_len}}},
          {"train",
           {{"epochs", c.train.epochs},
            {"batch_size", c.train.batch_size},
            {"learning_rate", c.train.learning_rate},
            {"prediction_loss_weight", c.train.prediction_loss_weight},
            {"state_loss_weight", c.train.state_loss_weight},
            {"seed", c.train.seed},
            {"validation_fraction", c.train.validation_fraction}}},
          {"model",
           {{"hidden", c.model.hidden},
            {"latent", c.model.latent},
            {"encoder_layers", c.model.encoder_layers},
            {"predictor_hidden", c.model.predictor_hidden},
            {"predictor_layers", c.model.predictor_layers}}},
          {"budgets", budgets},
          {"episodes_per_run", c.episodes_per_run},
          {"cem",
           {{"population", c.cem.population},
            {"elite_fraction", c.cem.elite_fraction},
            {"init_std", c.cem.init_std},
            {"std_floor", c.cem.std_floor}}},
          {"variants", c.variants},
          {"output_dir", c.output_dir},
          {"master_seed", c.master_seed},
          {"bootstrap_resamples", c.bootstrap_resamples},
          {"record_wall_clock", c.record_wall_clock}};
}

inline ExperimentConfig load_config(const fs::path& p) {
  if (!fs::exists(p)) throw ValidationError("config file '" + p.string() + "' does not exist");
  json j;
  try {
    j = json::parse(read_text_file(p));
  } catch (const json::parse_error& e) {
    throw ValidationError("config file '" + p.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

/// Hash of everything that affects results. output_dir is excluded so a run
/// moved or redirected elsewhere keeps its identity.
inline std::string config_hash(const ExperimentConfig& c) {
  json j = config_to_json(c);
  j.erase("output_dir");
  j["variants"] = expand_variants(c.variants);
  return hex64(fnv1a64(j.dump()));
}

inline std::vector<BudgetProtocol> protocol_of(const ExperimentConfig& c) {
  std::vector<BudgetProtocol> out;
  for (const auto& b : c.budgets) out.push_back({b.budget, b.seeds});
  return out;
}

// ---------------------------------------------------------------------------
// stages

enum class Stage { gen_data, train, variants, eval, stats, report, all };

inline Stage parse_stage(const std::string& s) {
  if (s == "gen-data") return Stage::gen_data;
  if (s == "train") return Stage::train;
  if (s == "variants") return Stage::variants;
  if (s == "eval") return Stage::eval;
  if (s == "stats") return Stage::stats;
  if (s == "report") return Stage::report;
  if (s == "all") return Stage::all;
  throw ValidationError("unknown stage '" + s + "' (expected gen-data, train, variants, eval, stats, report or all)");
}

/// Paired comparisons reported when both variants were evaluated.
inline const std::vector<std::pair<std::string, std::string>>& key_comparisons() {
  static const std::vector<std::pair<std::string, std::string>> v = {
      {"mixed_int4", "uniform_int4"}, {"enc6_pred4", "uniform_int4"}, {"enc8_pred4", "uniform_int4"},
      {"enc4_pred8", "mixed_int4"},   {"enc4_pred6", "mixed_int4"},   {"uniform_int8", "fp16"},
      {"mixed_int8", "fp16"},         {"uniform_int6", "fp16"},       {"uniform_int3", "fp16"},
  };
  return v;
}

inline const std::vector<std::pair<std::string, std::string>>& key_matchups() {
  static const std::vector<std::pair<std::string, std::string>> v = {{"mixed_int4", "uniform_int4"}};
  return v;
}

class Pipeline {
 public:
  Pipeline(ExperimentConfig cfg, int jobs = 1, std::ostream* log = &std::cerr)
      : cfg_(std::move(cfg)), hash_(config_hash(cfg_)), out_(cfg_.output_dir), jobs_(jobs), log_(log) {
    variants_ = expand_variants(cfg_.variants);
  }

  [[nodiscard]] const std::string& hash() const { return hash_; }
  [[nodiscard]] const fs::path& output_dir() const { return out_; }
  [[nodiscard]] const ExperimentConfig& config() const { return cfg_; }
  [[nodiscard]] const std::vector<std::string>& variant_names() const { return variants_; }

  void run(Stage s) {
    fs::create_directories(out_);
    write_json(out_ / "config.json", config_to_json(cfg_));
    switch (s) {
      case Stage::gen_data: gen_data(); break;
      case Stage::train: train(); break;
      case Stage::variants: variants(); break;
      case Stage::eval: eval(); break;
      case Stage::stats: stats(); break;
      case Stage::report: report(); break;
      case Stage::all:
        gen_data();
        train();
        variants();
        eval();
        stats();
        report();
        break;
    }
  }

  void gen_data() {
    say("gen-data: " + std::to_string(cfg_.data.n_traj) + " trajectories x " + std::to_string(cfg_.data.traj_len));
    const Dataset d = gen_dataset(cfg_.data.n_traj, cfg_.data.traj_len, 0, cfg_.env, cfg_.master_seed);
    Model m = dataset_to_model(d, cfg_.env);
    m.extras["config_hash"] = hash_;
    persist_model(m, out_ / "dataset");
  }

  void train() {
    const Model dm = require_model(out_ / "dataset", "dataset", "gen-data");
    const Dataset d = dataset_from_model(dm);
    TrainConfig tc = cfg_.train;
    tc.seed = stream_key("train", {cfg_.master_seed, cfg_.train.seed});
    say("train: " + std::to_string(d.size()) + " transitions, " + std::to_string(tc.epochs) + " epochs");
    auto res = train_world_model(d, tc, cfg_.model);
    fit_state_probe(res.model, d);
    say("train: loss " + fixed(res.initial_loss, 4) + " -> " + fixed(res.final_loss, 4) + ", probe error " +
        fixed(res.validation_probe_error, 4));
    Model m = to_model(res.model);
    m.extras["config_hash"] = hash_;
    persist_model(m, out_ / "base_model");
  }

  void variants() {
    const Model base = require_model(out_ / "base_model", "base model", "train");
    json sizes = json::array();
    for (const auto& name : variants_) {
      VariantModel vm = apply_policy(base, parse_variant(name));
      vm.model.extras["config_hash"] = hash_;
      persist_model(vm.model, out_ / "variants" / name);
      sizes.push_back({{"variant", name}, {"size_bytes", vm.size_bytes}, {"size_mb", bytes_to_mb(vm.size_bytes)}});
    }
    write_json(out_ / "sizes.json", {{"config_hash", hash_}, {"baseline_bits", base.baseline_bits}, {"variants", sizes}});
    say("variants: wrote " + std::to_string(variants_.size()) + " variants");
  }

  void eval() {
    const Model base = require_model(out_ / "base_model", "base model", "train");
    const json sizes = require_json(out_ / "sizes.json", "variants");
    std::map<std::string, std::uint64_t> size_of;
    for (const auto& v : sizes.at("variants")) size_of[v.at("variant")] = v.at("size_bytes").get<std::uint64_t>();

    const WorldModel fp = from_model(base);
    std::vector<WorldModel> models;
    models.reserve(variants_.size());
    for (const auto& name : variants_) {
      if (!size_of.contains(name)) throw StageError("variant '" + name + "' missing from sizes.json; run variants first");
      models.push_back(from_model(require_model(out_ / "variants" / name, "variant " + name, "variants")));
    }
    std::vector<EvalVariant> evs;
    for (std::size_t i = 0; i < variants_.size(); ++i) evs.push_back({variants_[i], &models[i], size_of[variants_[i]]});

    const auto t0 = std::chrono::steady_clock::now();
    RunSet rs = run_paired_eval(fp, evs, protocol_of(cfg_), cfg_.episodes_per_run, cfg_.env, cfg_.cem,
                                cfg_.master_seed, effective_jobs());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!cfg_.record_wall_clock)
      for (auto& r : rs.records) r.runtime_seconds = 0.0;
    write_text_file(out_ / "episodes.csv", episodes_to_csv(rs.records));
    json seeds = json::object();
    for (const auto& b : cfg_.budgets) seeds[b.budget.name] = b.seeds;
    write_json(out_ / "episodes.meta.json", {{"config_hash", hash_},
                                             {"rows", rs.records.size()},
                                             {"episodes_per_run", rs.episodes_per_run},
                                             {"seeds", seeds},
                                             {"variants", variants_}});
    say("eval: " + std::to_string(rs.records.size()) + " episodes in " + fixed(secs, 1) + " s");
  }

  void stats() {
    const auto recs = load_episodes();
    const auto present = present_variants(recs);
    auto has = [&](const std::string& v) { return std::ranges::find(present, v) != present.end(); };

    json comps = json::array();
    std::uint64_t k = 0;
    for (const auto& b : cfg_.budgets)
      for (const auto& [a, bb] : key_comparisons()) {
        ++k;
        if (!has(a) || !has(bb)) continue;
        const auto key = stream_key("comparison", {cfg_.master_seed, k});
        comps.push_back(to_json(compare_variants(recs, a, bb, b.budget.name, cfg_.bootstrap_resamples, key)));
      }
    write_json(out_ / "comparisons.json", {{"config_hash", hash_}, {"comparisons", comps}});

    json matchups = json::array();
    for (const auto& [a, bb] : key_matchups()) {
      if (!has(a) || !has(bb)) continue;
      for (const auto& b : cfg_.budgets) {
        auto m = to_json(matchup_counts(select_records(recs, a, b.budget.name), select_records(recs, bb, b.budget.name)));
        m["name_a"] = a;
        m["name_b"] = bb;
        m["scope"] = b.budget.name;
        matchups.push_back(m);
      }
      auto m = to_json(matchup_counts(select_records(recs, a), select_records(recs, bb)));
      m["name_a"] = a;
      m["name_b"] = bb;
      m["scope"] = "pooled";
      matchups.push_back(m);
    }
    write_json(out_ / "matchups.json", {{"config_hash", hash_}, {"matchups", matchups}});

    json bins = json::array();
    for (const auto& b : cfg_.budgets)
      for (const auto& v : present) {
        json list = json::array();
        for (const auto& bin : difficulty_bins(recs, b.budget.name, v, b.difficulty_bins)) list.push_back(to_json(bin));
        bins.push_back({{"budget", b.budget.name}, {"variant", v}, {"n_bins", b.difficulty_bins}, {"bins", list}});
      }
    write_json(out_ / "bins.json", {{"config_hash", hash_}, {"bins", bins}});

    json frontiers = json::object();
    for (const auto& b : cfg_.budgets) {
      std::vector<ParetoPoint> pts;
      for (const auto& v : present)
        pts.push_back({v, mean_success(recs, v, b.budget.name), select_records(recs, v, b.budget.name).front().model_size_bytes});
      json list = json::array();
      for (const auto& p : pareto_frontier(pts)) list.push_back(to_json(p));
      frontiers[b.budget.name] = list;
    }
    write_json(out_ / "frontier.json", {{"config_hash", hash_}, {"frontiers", frontiers}});

    const auto runs = run_level_points(recs);
    std::vector<double> s, msd, ved;
    for (const auto& r : runs) {
      s.push_back(r.success);
      msd.push_back(r.mean_state_distance);
      ved.push_back(r.visual_embedding_divergence);
    }
    auto rho = [&](const std::vector<double>& y) -> json {
      try {
        return spearman(s, y);
      } catch (const ValidationError&) {
        return nullptr;
      }
    };
    json points = json::array();
    for (const auto& r : runs)
      points.push_back({{"variant", r.variant},
                        {"budget", r.budget},
                        {"seed", r.seed},
                        {"success", r.success},
                        {"mean_state_distance", r.mean_state_distance},
                        {"visual_embedding_divergence", r.visual_embedding_divergence}});
    write_json(out_ / "correlations.json", {{"config_hash", hash_},
                                            {"n_points", runs.size()},
                                            {"success_vs_mean_state_distance", rho(msd)},
                                            {"success_vs_visual_embedding_divergence", rho(ved)},
                                            {"points", points}});
    say("stats: " + std::to_string(comps.size()) + " comparisons over " + std::to_string(runs.size()) +
        " run-level points");
  }

  void report() {
    const auto recs = load_episodes();
    const json comps_j = require_json(out_ / "comparisons.json", "stats");
    const json bins_j = require_json(out_ / "bins.json", "stats");
    const json front_j = require_json(out_ / "frontier.json", "stats");
    const json corr_j = require_json(out_ / "correlations.json", "stats");
    const auto present = present_variants(recs);

    std::ostringstream table;
    table << "variant,size_bytes,size_mb";
    for (const auto& b : cfg_.budgets) table << ",success_" << b.budget.name;
    table << '\n';
    for (const auto& v : present) {
      const auto size = select_records(recs, v).front().model_size_bytes;
      table << v << ',' << size << ',' << fixed(bytes_to_mb(size), 6);
      for (const auto& b : cfg_.budgets) {
        const auto sel = select_records(recs, v, b.budget.name);
        table << ',' << (sel.empty() ? std::string() : fixed(mean_success(recs, v, b.budget.name), 3));
      }
      table << '\n';
    }
    write_text_file(out_ / "main_table.csv", table.str());
    write_json(out_ / "main_table.meta.json", {{"config_hash", hash_}, {"rows", present.size()}});

    std::vector<std::pair<std::string, std::vector<ParetoPoint>>> fronts;
    for (const auto& b : cfg_.budgets) {
      std::vector<ParetoPoint> pts;
      for (const auto& p : front_j.at("frontiers").at(b.budget.name)) pts.push_back(pareto_point_from_json(p));
      fronts.emplace_back(b.budget.name, pts);
    }
    write_svg("frontier.svg", frontier_svg(fronts));

    std::vector<PairedComparison> comps;
    for (const auto& c : comps_j.at("comparisons")) comps.push_back(comparison_from_json(c));
    write_svg("forest.svg", forest_svg(comps));

    std::vector<std::pair<std::string, std::vector<std::pair<int, double>>>> curves;
    for (const auto& b : cfg_.budgets) {
      std::vector<std::pair<int, double>> pts;
      for (int pct : kRetentionSweep) {
        const auto name = variant_name(LayerwiseRetention{pct, 4});
        if (std::ranges::find(present, name) != present.end())
          pts.emplace_back(pct, mean_success(recs, name, b.budget.name));
      }
      curves.emplace_back(b.budget.name, pts);
    }
    write_svg("retention_curve.svg", retention_curve_svg(curves));

    std::vector<std::string> focus;
    for (const auto& v : {"uniform_int4", "mixed_int4"})
      if (std::ranges::find(present, v) != present.end()) focus.push_back(v);
    if (focus.empty())
      for (std::size_t i = 0; i < std::min<std::size_t>(2, present.size()); ++i) focus.push_back(present[i]);
    std::vector<DifficultyPanel> panels;
    for (const auto& b : cfg_.budgets) {
      DifficultyPanel p{b.budget.name, {}};
      for (const auto& v : focus)
        for (const auto& e : bins_j.at("bins"))
          if (e.at("budget") == b.budget.name && e.at("variant") == v) {
            std::vector<DifficultyBin> bs;
            for (const auto& x : e.at("bins"))
              bs.push_back({x.at("label"), x.at("n"), x.at("mean_success"), x.at("distance_low"), x.at("distance_high")});
            p.series.emplace_back(v, bs);
          }
      panels.push_back(p);
    }
    write_svg("difficulty.svg", difficulty_svg(panels));

    std::vector<RunPoint> runs;
    for (const auto& p : corr_j.at("points"))
      runs.push_back({p.at("variant"), p.at("budget"), p.at("seed"), p.at("success"), p.at("mean_state_distance"),
                      p.at("visual_embedding_divergence")});
    const auto& r = corr_j.at("success_vs_visual_embedding_divergence");
    write_svg("divergence_scatter.svg",
              divergence_scatter_svg(runs, r.is_null() ? std::nullopt : std::optional<double>(r.get<double>())));
    say("report: wrote main_table.csv and 5 figures");
  }

  [[nodiscard]] std::vector<EpisodeRecord> load_episodes() const {
    const auto p = out_ / "episodes.csv";
    if (!fs::exists(p)) throw StageError("episodes.csv not found in '" + out_.string() + "'; run eval first");
    check_hash(require_json(out_ / "episodes.meta.json", "eval"), "episodes.csv", "eval");
    return episodes_from_csv(read_text_file(p));
  }

 private:
  void say(const std::string& s) const {
    if (log_) *log_ << s << std::endl;
  }

  [[nodiscard]] int effective_jobs() const {
    if (jobs_ > 0) return jobs_;
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }

  void write_json(const fs::path& p, const json& j) const { write_text_file(p, j.dump(2) + "\n"); }

  void write_svg(const std::string& name, std::string svg) const {
    const auto pos = svg.find("<svg ");
    svg.insert(pos + 5, "data-config-hash=\"" + hash_ + "\" ");
    write_text_file(out_ / name, svg);
  }

  void check_hash(const json& j, const std::string& what, const std::string& stage) const {
    const auto h = j.value("config_hash", std::string());
    if (h != hash_)
      throw StageError(what + " was produced by a different config (hash " + h + ", current " + hash_ + "); rerun " +
                       stage);
  }

  [[nodiscard]] json require_json(const fs::path& p, const std::string& stage) const {
    if (!fs::exists(p))
      throw StageError(p.filename().string() + " not found in '" + out_.string() + "'; run " + stage + " first");
    json j;
    try {
      j = json::parse(read_text_file(p));
    } catch (const json::parse_error& e) {
      throw StageError(p.string() + " is not valid JSON (" + e.what() + "); rerun " + stage);
    }
    check_hash(j, p.filename().string(), stage);
    return j;
  }

  [[nodiscard]] Model require_model(const fs::path& dir, const std::string& what, const std::string& stage) const {
    if (!fs::exists(dir / "manifest.json"))
      throw StageError(what + " not found at '" + dir.string() + "'; run " + stage + " first");
    Model m = load_model(dir);
    const std::string h = m.extras.is_object() ? m.extras.value("config_hash", std::string()) : std::string();
    if (h != hash_)
      throw StageError(what + " was produced by a different config (hash " + h + ", current " + hash_ + "); rerun " +
                       stage);
    return m;
  }

  /// Variants in config order that appear in the records, then any others in
  /// record order.
  [[nodiscard]] std::vector<std::string> present_variants(const std::vector<EpisodeRecord>& recs) const {
    std::vector<std::string> out;
    for (const auto& v : variants_)
      if (std::ranges::any_of(recs, [&](const EpisodeRecord& r) { return r.variant == v; })) out.push_back(v);
    for (const auto& r : recs)
      if (std::ranges::find(out, r.variant) == out.end()) out.push_back(r.variant);
    return out;
  }

  ExperimentConfig cfg_;
  std::string hash_;
  fs::path out_;
  int jobs_;
  std::ostream* log_;
  std::vector<std::string> variants_;
};

}  // namespace wmq
