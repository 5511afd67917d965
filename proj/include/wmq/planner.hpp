#pragma once

// Budgeted cross-entropy-method planning over latent rollouts, MPC episode
// execution with divergence diagnostics, and the paired-goal protocol.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "wmq/error.hpp"
#include "wmq/rng.hpp"
#include "wmq/toyworld.hpp"
#include "wmq/worldmodel.hpp"

namespace wmq {

struct PlannerBudget {
  std::string name;
  int goal_h = 9;
  int opt_steps = 2;
  int max_iter = 2;

  void validate() const {
    if (goal_h < 1 || opt_steps < 1 || max_iter < 1)
      throw ValidationError("budget '" + name + "': goal_h, opt_steps and max_iter must be >= 1");
  }
  [[nodiscard]] int max_steps() const { return goal_h * max_iter; }
};

inline PlannerBudget budget_a() { return {"bA", 9, 2, 2}; }
inline PlannerBudget budget_b() { return {"bB", 12, 3, 3}; }

struct CEMConfig {
  int population = 64;
  double elite_fraction = 0.25;
  double init_std = 0.0625;  // 0.5 x default max_step
  double std_floor = 1e-3;

  void validate() const {
    if (population < 4) throw ValidationError("cem.population must be >= 4");
    if (!(elite_fraction > 0 && elite_fraction <= 0.5)) throw ValidationError("cem.elite_fraction must lie in (0, 0.5]");
    if (!(init_std > 0)) throw ValidationError("cem.init_std must be positive");
    if (!(std_floor > 0)) throw ValidationError("cem.std_floor must be positive");
  }
  [[nodiscard]] int elite_count() const {
    return std::max(1, static_cast<int>(std::floor(elite_fraction * population)));
  }
};

struct PlanResult {
  std::vector<Vec2> actions;
  double cost = 0.0;
  std::vector<double> mean_costs;   // cost of the sampling mean at each iteration
  std::vector<double> elite_costs;  // best cost in the population at each iteration
};

template <class T>
double plan_cost(const Network<T>& net, std::span<const double> z0, std::span<const double> z_goal,
                 std::span<const Vec2> seq) {
  Latent z(z0.begin(), z0.end());
  for (const auto& a : seq) z = predict_next(net, z, a);
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) acc += (z[i] - z_goal[i]) * (z[i] - z_goal[i]);
  return std::sqrt(acc);
}

/// CEM over action sequences of length goal_h starting from latent `z0`.
///
/// Each iteration scores the current mean, the best sequence so far and
/// population - 2 Gaussian samples, then refits mean/std to the elites.
/// The best population cost is therefore non-increasing across iterations.
/// The number of random draws does not depend on the model, so variants
/// sharing an rng stream see identical sampling noise.
template <class T>
PlanResult plan_actions(const Network<T>& net, std::span<const double> z0, std::span<const double> z_goal,
                        const PlannerBudget& budget, const CEMConfig& cem, double max_step, Rng& rng) {
  budget.validate();
  cem.validate();
  const auto h = static_cast<std::size_t>(budget.goal_h);
  using Seq = std::vector<Vec2>;
  auto clamp_seq = [max_step](Seq& s) {
    for (auto& a : s) a = clamp_action(a, max_step);
  };
  auto score = [&](const Seq& s) {
    const double c = plan_cost(net, z0, z_goal, s);
    if (!std::isfinite(c)) throw PlanningError("non-finite plan cost");
    return c;
  };

  Seq mean(h, Vec2{0.0, 0.0});
  std::vector<Vec2> stdev(h, Vec2{cem.init_std, cem.init_std});
  Seq best = mean;
  double best_cost = score(best);

  PlanResult res;
  const auto pop = static_cast<std::size_t>(cem.population);
  const auto n_elite = static_cast<std::size_t>(cem.elite_count());
  std::vector<Seq> cand(pop);
  std::vector<double> costs(pop);
  std::vector<std::size_t> idx(pop);

  for (int it = 0; it < budget.opt_steps; ++it) {
    cand[0] = mean;
    clamp_seq(cand[0]);
    cand[1] = best;
    for (std::size_t p = 2; p < pop; ++p) {
      cand[p].resize(h);
      for (std::size_t t = 0; t < h; ++t)
        for (int k = 0; k < 2; ++k) cand[p][t][k] = mean[t][k] + stdev[t][k] * rng.normal();
      clamp_seq(cand[p]);
    }
    for (std::size_t p = 0; p < pop; ++p) costs[p] = p == 1 ? best_cost : score(cand[p]);
    res.mean_costs.push_back(costs[0]);

    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::ranges::stable_sort(idx, [&](std::size_t a, std::size_t b) { return costs[a] < costs[b]; });
    best = cand[idx[0]];
    best_cost = costs[idx[0]];
    res.elite_costs.push_back(best_cost);

    for (std::size_t t = 0; t < h; ++t) {
      for (int k = 0; k < 2; ++k) {
        double m = 0.0;
        for (std::size_t e = 0; e < n_elite; ++e) m += cand[idx[e]][t][k];
        m /= static_cast<double>(n_elite);
        double v = 0.0;
        for (std::size_t e = 0; e < n_elite; ++e) v += (cand[idx[e]][t][k] - m) * (cand[idx[e]][t][k] - m);
        mean[t][k] = m;
        stdev[t][k] = std::max(std::sqrt(v / static_cast<double>(n_elite)), cem.std_floor);
      }
    }
  }

  clamp_seq(mean);
  res.cost = score(mean);
  res.actions = std::move(mean);
  return res;
}

template <class T>
PlanResult plan_actions_from_obs(const Network<T>& net, const Observation& current_obs, const Observation& goal_obs,
                        const PlannerBudget& budget, const CEMConfig& cem, double max_step, Rng& rng) {
  const Latent z0 = encode(net, current_obs);
  const Latent zg = encode(net, goal_obs);
  return plan_actions(net, z0, zg, budget, cem, max_step, rng);
}

// ---------------------------------------------------------------------------
// episodes

struct EpisodeRecord {
  std::string variant;
  std::string budget;
  std::uint64_t seed = 0;
  int episode_id = 0;
  int success = 0;
  double initial_goal_distance = 0.0;
  int steps_executed = 0;
  double runtime_seconds = 0.0;
  double mean_state_distance = 0.0;
  double visual_embedding_divergence = 0.0;
  std::uint64_t model_size_bytes = 0;
};

/// A model under evaluation.
struct EvalVariant {
  std::string name;
  const WorldModel* model = nullptr;
  std::uint64_t size_bytes = 0;
};

inline double latent_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

/// MPC loop: up to max_iter rounds of planning goal_h actions with the variant
/// model and executing all of them, stopping as soon as the agent is within
/// the success radius.
///
/// Diagnostics:
///   mean_state_distance: mean over executed steps of |probe_fp(z_pred) - s|,
///     z_pred the variant's open-loop latent for the executed prefix of the
///     current plan, probe_fp the full-precision probe.
///   visual_embedding_divergence: mean over visited observations (start
///     included) of |encode_variant(o) - encode_fp(o)|.
inline EpisodeRecord run_episode(const WallEnvConfig& env, const EvalVariant& variant, const WorldModel& fullprec,
                                 const EpisodeSpec& spec, const PlannerBudget& budget, const CEMConfig& cem,
                                 std::uint64_t root_key = 0) {
  const auto t_start = std::chrono::steady_clock::now();
  const auto& vnet = variant.model->net;
  const auto& fnet = fullprec.net;

  EpisodeRecord rec;
  rec.variant = variant.name;
  rec.budget = budget.name;
  rec.seed = spec.seed;
  rec.episode_id = spec.episode_id;
  rec.initial_goal_distance = spec.initial_goal_distance;
  rec.model_size_bytes = variant.size_bytes;

  EnvState state = spec.start;
  Observation obs = render(state, env);
  const Observation goal_obs = render(spec.goal, env);

  double div_sum = latent_distance(encode(vnet, obs), encode(fnet, obs));
  int div_count = 1;
  double msd_sum = 0.0;

  Rng rng("planner", {root_key, spec.seed, static_cast<std::uint64_t>(spec.episode_id)});
  bool success = distance(state.pos, spec.goal.pos) <= env.success_radius;
  try {
    const Latent z_goal = encode(vnet, goal_obs);
    for (int round = 0; round < budget.max_iter && !success; ++round) {
      const Latent z0 = encode(vnet, obs);
      const PlanResult plan = plan_actions(vnet, z0, z_goal, budget, cem, env.max_step, rng);
      const auto predicted = rollout(vnet, z0, plan.actions);
      for (std::size_t t = 0; t < plan.actions.size(); ++t) {
        state = step(state, plan.actions[t], env);
        obs = render(state, env);
        ++rec.steps_executed;
        msd_sum += distance(probe_state(fnet, predicted[t]), state.pos);
        div_sum += latent_distance(encode(vnet, obs), encode(fnet, obs));
        ++div_count;
        if (distance(state.pos, spec.goal.pos) <= env.success_radius) {
          success = true;
          break;
        }
      }
    }
  } catch (const PlanningError&) {
    success = false;
  }

  rec.success = success ? 1 : 0;
  rec.mean_state_distance = rec.steps_executed > 0 ? msd_sum / rec.steps_executed : 0.0;
  rec.visual_embedding_divergence = div_sum / div_count;
  rec.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return rec;
}

// ---------------------------------------------------------------------------
// paired evaluation

struct BudgetProtocol {
  PlannerBudget budget;
  std::vector<std::uint64_t> seeds;
};

inline std::vector<BudgetProtocol> default_protocol() { return {{budget_a(), {0, 1, 2}}, {budget_b(), {0, 1}}}; }

struct RunSet {
  std::vector<EpisodeRecord> records;
  std::vector<BudgetProtocol> protocol;
  int episodes_per_run = 0;
};

inline bool record_order(const EpisodeRecord& a, const EpisodeRecord& b) {
  return std::tie(a.variant, a.budget, a.seed, a.episode_id) < std::tie(b.variant, b.budget, b.seed, b.episode_id);
}

/// Episode specs are drawn once per (budget, seed) and shared by every
/// variant. Cells may run on `jobs` threads; the output is canonically sorted
/// by (variant, budget, seed, episode_id).
inline RunSet run_paired_eval(const WorldModel& fullprec, const std::vector<EvalVariant>& variants,
                              const std::vector<BudgetProtocol>& protocol, int episodes_per_run,
                              const WallEnvConfig& env, const CEMConfig& cem, std::uint64_t root_key = 0,
                              int jobs = 1) {
  if (variants.empty()) throw ValidationError("no variants to evaluate");
  std::set<std::string> names;
  for (const auto& v : variants) {
    if (!v.model) throw ValidationError("variant '" + v.name + "' has no model");
    if (!names.insert(v.name).second) throw ValidationError("duplicate variant name '" + v.name + "'");
  }
  std::set<std::string> budget_names;
  for (const auto& bp : protocol) {
    bp.budget.validate();
    if (!budget_names.insert(bp.budget.name).second)
      throw ValidationError("duplicate budget name '" + bp.budget.name + "'");
  }
  env.validate();
  cem.validate();

  struct Cell {
    const EvalVariant* variant;
    const PlannerBudget* budget;
    const EpisodeSpec* spec;
  };
  std::vector<std::vector<EpisodeSpec>> specs;
  for (const auto& bp : protocol)
    for (auto seed : bp.seeds) specs.push_back(sample_episode_specs(seed, episodes_per_run, env, root_key));

  std::vector<Cell> cells;
  for (const auto& v : variants) {
    std::size_t k = 0;
    for (const auto& bp : protocol)
      for (std::size_t s = 0; s < bp.seeds.size(); ++s, ++k)
        for (const auto& spec : specs[k]) cells.push_back({&v, &bp.budget, &spec});
  }

  RunSet out;
  out.protocol = protocol;
  out.episodes_per_run = episodes_per_run;
  out.records.resize(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++)
      out.records[i] = run_episode(env, *cells[i].variant, fullprec, *cells[i].spec, *cells[i].budget, cem, root_key);
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  std::ranges::sort(out.records, record_order);
  return out;
}

// ---------------------------------------------------------------------------
// episodes.csv

inline constexpr const char* kEpisodesHeader =
    "variant,budget,seed,episode_id,success,initial_goal_distance,steps_executed,runtime_seconds,"
    "mean_state_distance,visual_embedding_divergence,model_size_bytes";

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string episodes_to_csv(const std::vector<EpisodeRecord>& recs) {
  std::ostringstream os;
  os << kEpisodesHeader << '\n';
  for (const auto& r : recs) {
    os << r.variant << ',' << r.budget << ',' << r.seed << ',' << r.episode_id << ',' << r.success << ','
       << format_double(r.initial_goal_distance) << ',' << r.steps_executed << ',' << format_double(r.runtime_seconds)
       << ',' << format_double(r.mean_state_distance) << ',' << format_double(r.visual_embedding_divergence) << ','
       << r.model_size_bytes << '\n';
  }
  return os.str();
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw ValidationError("malformed number '" + std::string(s) + "' in episodes.csv");
  return v;
}

template <class I>
I parse_int(std::string_view s) {
  I v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw ValidationError("malformed integer '" + std::string(s) + "' in episodes.csv");
  return v;
}

inline std::vector<EpisodeRecord> episodes_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kEpisodesHeader) throw ValidationError("episodes.csv has an unexpected header");
  std::vector<EpisodeRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1))
      f.push_back(rest.substr(0, pos));
    f.push_back(rest);
    if (f.size() != 11) throw ValidationError("episodes.csv row has " + std::to_string(f.size()) + " fields");
    EpisodeRecord r;
    r.variant = std::string(f[0]);
    r.budget = std::string(f[1]);
    r.seed = parse_int<std::uint64_t>(f[2]);
    r.episode_id = parse_int<int>(f[3]);
    r.success = parse_int<int>(f[4]);
    r.initial_goal_distance = parse_double(f[5]);
    r.steps_executed = parse_int<int>(f[6]);
    r.runtime_seconds = parse_double(f[7]);
    r.mean_state_distance = parse_double(f[8]);
    r.visual_embedding_divergence = parse_double(f[9]);
    r.model_size_bytes = parse_int<std::uint64_t>(f[10]);
    if (r.success != 0 && r.success != 1) throw ValidationError("episodes.csv success must be 0 or 1");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace wmq
