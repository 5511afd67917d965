#pragma once

// Deterministic wall-navigation environment: a point agent in the unit
// square, a vertical wall at x = wall_x with one gap, goal-conditioned
// episodes whose start and goal lie on opposite sides of the wall, and
// small grayscale image observations.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wmq/error.hpp"
#include "wmq/model_store.hpp"
#include "wmq/rng.hpp"

namespace wmq {

struct WallEnvConfig {
  double wall_x = 0.5;
  double gap_center = 0.5;
  double gap_half_width = 0.1;
  double max_step = 0.125;
  int image_side = 16;
  double success_radius = 0.1;

  void validate() const {
    if (!(wall_x > 0 && wall_x < 1)) throw ValidationError("env.wall_x must lie in (0, 1)");
    if (!(gap_center > 0 && gap_center < 1)) throw ValidationError("env.gap_center must lie in (0, 1)");
    if (!(gap_half_width > 0) || gap_center - gap_half_width < 0 || gap_center + gap_half_width > 1)
      throw ValidationError("env.gap_half_width: gap interval must lie within [0, 1]");
    if (!(max_step > 0)) throw ValidationError("env.max_step must be positive");
    if (image_side < 2) throw ValidationError("env.image_side must be at least 2");
    if (!(success_radius > 0)) throw ValidationError("env.success_radius must be positive");
  }
  [[nodiscard]] int obs_dim() const { return image_side * image_side; }
};

using Vec2 = std::array<double, 2>;

struct EnvState {
  Vec2 pos{0.0, 0.0};
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

/// image_side x image_side pixels, row-major, row index from y.
using Observation = std::vector<double>;

struct EpisodeSpec {
  std::uint64_t seed = 0;
  int episode_id = 0;
  EnvState start;
  EnvState goal;
  double initial_goal_distance = 0.0;
};

inline double distance(const Vec2& a, const Vec2& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

inline Vec2 clamp_action(const Vec2& a, double max_step) {
  return {std::clamp(a[0], -max_step, max_step), std::clamp(a[1], -max_step, max_step)};
}

inline EnvState step(const EnvState& s, const Vec2& action, const WallEnvConfig& cfg) {
  const Vec2 a = clamp_action(action, cfg.max_step);
  const Vec2 cand{std::clamp(s.pos[0] + a[0], 0.0, 1.0), std::clamp(s.pos[1] + a[1], 0.0, 1.0)};
  const double x0 = s.pos[0];
  const double x1 = cand[0];
  const bool crosses = (x0 < cfg.wall_x && x1 >= cfg.wall_x) || (x0 > cfg.wall_x && x1 <= cfg.wall_x);
  if (!crosses || x0 == x1) return EnvState{cand};
  const double t = (cfg.wall_x - x0) / (x1 - x0);
  const double y_cross = s.pos[1] + t * (cand[1] - s.pos[1]);
  const bool in_gap = y_cross >= cfg.gap_center - cfg.gap_half_width && y_cross <= cfg.gap_center + cfg.gap_half_width;
  if (in_gap) return EnvState{cand};
  const double stop_x = x0 < cfg.wall_x ? cfg.wall_x - 1e-3 : cfg.wall_x + 1e-3;
  return EnvState{{stop_x, y_cross}};
}

inline int pixel_index(double v, int side) {
  return std::clamp(static_cast<int>(std::floor(v * side)), 0, side - 1);
}

inline Observation render(const EnvState& s, const WallEnvConfig& cfg) {
  const int n = cfg.image_side;
  Observation img(static_cast<std::size_t>(n * n), 0.0);
  const int wall_col = pixel_index(cfg.wall_x, n);
  for (int row = 0; row < n; ++row) {
    const double yc = (row + 0.5) / n;
    const bool in_gap = yc >= cfg.gap_center - cfg.gap_half_width && yc <= cfg.gap_center + cfg.gap_half_width;
    if (!in_gap) img[static_cast<std::size_t>(row * n + wall_col)] = 0.5;
  }
  const int row = pixel_index(s.pos[1], n);
  const int col = pixel_index(s.pos[0], n);
  img[static_cast<std::size_t>(row * n + col)] = 1.0;
  return img;
}

/// Uniform point strictly on one side of the wall.
inline Vec2 sample_side(Rng& rng, const WallEnvConfig& cfg, bool left) {
  // Keep clear of the wall column so the side is unambiguous.
  constexpr double margin = 1e-3;
  const double x = left ? rng.uniform(0.0, cfg.wall_x - margin) : rng.uniform(cfg.wall_x + margin, 1.0);
  return {x, rng.uniform()};
}

/// Episode list keyed only by (root_key, seed): identical for every variant
/// and every budget that uses the same seed.
inline std::vector<EpisodeSpec> sample_episode_specs(std::uint64_t seed, int n_episodes, const WallEnvConfig& cfg,
                                                     std::uint64_t root_key = 0) {
  if (n_episodes < 1) throw ValidationError("n_episodes must be >= 1");
  std::vector<EpisodeSpec> out;
  out.reserve(static_cast<std::size_t>(n_episodes));
  for (int e = 0; e < n_episodes; ++e) {
    Rng rng("episode-spec", {root_key, seed, static_cast<std::uint64_t>(e)});
    const bool start_left = rng.coin();
    EpisodeSpec spec;
    spec.seed = seed;
    spec.episode_id = e;
    spec.start.pos = sample_side(rng, cfg, start_left);
    spec.goal.pos = sample_side(rng, cfg, !start_left);
    spec.initial_goal_distance = distance(spec.start.pos, spec.goal.pos);
    out.push_back(spec);
  }
  return out;
}

struct Transition {
  Observation obs;
  Vec2 action{};
  Observation next_obs;
  EnvState state;
  EnvState next_state;
};

using Dataset = std::vector<Transition>;

/// Random-policy rollouts from uniform starts.
inline Dataset gen_dataset(int n_traj, int traj_len, std::uint64_t seed, const WallEnvConfig& cfg,
                           std::uint64_t root_key = 0) {
  if (n_traj < 1 || traj_len < 1) throw ValidationError("n_traj and traj_len must be >= 1");
  Dataset out;
  out.reserve(static_cast<std::size_t>(n_traj) * static_cast<std::size_t>(traj_len));
  for (int i = 0; i < n_traj; ++i) {
    Rng rng("dataset", {root_key, seed, static_cast<std::uint64_t>(i)});
    EnvState s{{rng.uniform(), rng.uniform()}};
    Observation obs = render(s, cfg);
    for (int t = 0; t < traj_len; ++t) {
      const Vec2 a{rng.uniform(-cfg.max_step, cfg.max_step), rng.uniform(-cfg.max_step, cfg.max_step)};
      const EnvState ns = step(s, a, cfg);
      Observation nobs = render(ns, cfg);
      out.push_back(Transition{obs, a, nobs, s, ns});
      s = ns;
      obs = std::move(nobs);
    }
  }
  return out;
}

// Persistence through the model-store convention: five non-linear-param
// tensors, one row per transition.

inline Model dataset_to_model(const Dataset& d, const WallEnvConfig& cfg) {
  if (d.empty()) throw ValidationError("cannot persist an empty dataset");
  const auto n = static_cast<std::int64_t>(d.size());
  const auto od = static_cast<std::int64_t>(cfg.obs_dim());
  auto make = [](std::string name, int idx, std::vector<std::int64_t> shape) {
    TensorRecord t;
    t.name = std::move(name);
    t.role = Role::other;
    t.layer_index = idx;
    t.kind = TensorKind::non_linear_param;
    t.shape = std::move(shape);
    return t;
  };
  TensorRecord obs = make("dataset.obs", 0, {n, od});
  TensorRecord act = make("dataset.action", 1, {n, 2});
  TensorRecord nobs = make("dataset.next_obs", 2, {n, od});
  TensorRecord st = make("dataset.state", 3, {n, 2});
  TensorRecord nst = make("dataset.next_state", 4, {n, 2});
  for (const auto& tr : d) {
    if (static_cast<std::int64_t>(tr.obs.size()) != od || static_cast<std::int64_t>(tr.next_obs.size()) != od)
      throw ValidationError("transition observation size does not match env image_side");
    for (double v : tr.obs) obs.data.push_back(static_cast<float>(v));
    for (double v : tr.next_obs) nobs.data.push_back(static_cast<float>(v));
    act.data.insert(act.data.end(), {static_cast<float>(tr.action[0]), static_cast<float>(tr.action[1])});
    st.data.insert(st.data.end(), {static_cast<float>(tr.state.pos[0]), static_cast<float>(tr.state.pos[1])});
    nst.data.insert(nst.data.end(),
                    {static_cast<float>(tr.next_state.pos[0]), static_cast<float>(tr.next_state.pos[1])});
  }
  Model m;
  m.tensors = {std::move(obs), std::move(act), std::move(nobs), std::move(st), std::move(nst)};
  m.extras["kind"] = "dataset";
  return m;
}

/// Inverse of dataset_to_model. Values come back at float32 precision.
inline Dataset dataset_from_model(const Model& m) {
  const auto* obs = m.find("dataset.obs");
  const auto* act = m.find("dataset.action");
  const auto* nobs = m.find("dataset.next_obs");
  const auto* st = m.find("dataset.state");
  const auto* nst = m.find("dataset.next_state");
  if (!obs || !act || !nobs || !st || !nst) throw ValidationError("model is not a stored dataset");
  const auto n = static_cast<std::size_t>(obs->shape[0]);
  const auto od = static_cast<std::size_t>(obs->shape[1]);
  Dataset d(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& tr = d[i];
    tr.obs.assign(obs->data.begin() + static_cast<std::ptrdiff_t>(i * od),
                  obs->data.begin() + static_cast<std::ptrdiff_t>((i + 1) * od));
    tr.next_obs.assign(nobs->data.begin() + static_cast<std::ptrdiff_t>(i * od),
                       nobs->data.begin() + static_cast<std::ptrdiff_t>((i + 1) * od));
    tr.action = {act->data[2 * i], act->data[2 * i + 1]};
    tr.state.pos = {st->data[2 * i], st->data[2 * i + 1]};
    tr.next_state.pos = {nst->data[2 * i], nst->data[2 * i + 1]};
  }
  return d;
}

}  // namespace wmq
