#pragma once

// Paired statistics over evaluation records: bootstrap deltas, exact sign
// tests, Spearman correlation, difficulty bins, matchup tables and the
// success/size Pareto frontier.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "wmq/error.hpp"
#include "wmq/planner.hpp"
#include "wmq/rng.hpp"

namespace wmq {

using PairedOutcome = std::pair<double, double>;  // (a, b) on one paired unit

struct BootstrapResult {
  std::size_t n_pairs = 0;
  double delta = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
inline double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValidationError("quantile of empty data");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Percentile bootstrap of mean(a - b). Resample r draws its unit indices from
/// its own substream ("bootstrap", {key, r}), so the result does not depend on
/// evaluation order.
inline BootstrapResult paired_delta_ci(std::span<const PairedOutcome> pairs, int n_resamples = 4000,
                                       double level = 0.95, std::uint64_t key = 0) {
  if (pairs.empty()) throw ValidationError("paired_delta_ci needs at least one pair");
  if (n_resamples < 1) throw ValidationError("n_resamples must be >= 1");
  if (!(level > 0 && level < 1)) throw ValidationError("confidence level must lie in (0, 1)");
  const std::size_t n = pairs.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = pairs[i].first - pairs[i].second;

  BootstrapResult out;
  out.n_pairs = n;
  out.delta = std::accumulate(diff.begin(), diff.end(), 0.0) / static_cast<double>(n);

  std::vector<double> boot(static_cast<std::size_t>(n_resamples));
  for (int r = 0; r < n_resamples; ++r) {
    Rng rng("bootstrap", {key, static_cast<std::uint64_t>(r)});
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += diff[rng.below(n)];
    boot[static_cast<std::size_t>(r)] = acc / static_cast<double>(n);
  }
  std::ranges::sort(boot);
  const double alpha = 1.0 - level;
  out.ci_low = sorted_quantile(boot, alpha / 2);
  out.ci_high = sorted_quantile(boot, 1.0 - alpha / 2);
  return out;
}

struct SignTestResult {
  double p = 1.0;
  int n_nontied = 0;
  int n_a_greater = 0;
};

/// P(X <= k) for X ~ Binomial(m, 1/2).
inline double binomial_half_cdf(int k, int m) {
  if (k < 0) return 0.0;
  if (k >= m) return 1.0;
  if (m <= 62) {
    // Exact integer counts: sum_{i<=k} C(m, i) over 2^m.
    std::uint64_t c = 1, acc = 0;
    for (int i = 0; i <= k; ++i) {
      acc += c;
      c = c * static_cast<std::uint64_t>(m - i) / static_cast<std::uint64_t>(i + 1);
    }
    return std::ldexp(static_cast<double>(acc), -m);
  }
  double acc = 0.0;
  for (int i = 0; i <= k; ++i)
    acc += std::exp(std::lgamma(m + 1.0) - std::lgamma(i + 1.0) - std::lgamma(m - i + 1.0) - m * std::log(2.0));
  return std::min(acc, 1.0);
}

/// Two-sided exact sign test: doubled smaller tail, capped at 1. Ties dropped.
inline SignTestResult sign_test(std::span<const PairedOutcome> pairs) {
  SignTestResult r;
  for (const auto& [a, b] : pairs) {
    if (a == b) continue;
    ++r.n_nontied;
    if (a > b) ++r.n_a_greater;
  }
  if (r.n_nontied == 0) return r;
  const int m = r.n_nontied;
  const int k = r.n_a_greater;
  const double lower = binomial_half_cdf(k, m);
  const double upper = binomial_half_cdf(m - k, m);  // P(X >= k) by symmetry
  r.p = std::min(1.0, 2.0 * std::min(lower, upper));
  return r;
}

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::ranges::stable_sort(idx, [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[idx[t]] = r;
    i = j + 1;
  }
  return rank;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw ValidationError("correlation undefined for a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("spearman inputs differ in length");
  if (x.size() < 3) throw ValidationError("spearman needs at least 3 points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

// ---------------------------------------------------------------------------
// record-level helpers

struct UnitKey {
  std::string budget;
  std::uint64_t seed = 0;
  int episode_id = 0;
  friend auto operator<=>(const UnitKey&, const UnitKey&) = default;
};

inline UnitKey unit_key(const EpisodeRecord& r) { return {r.budget, r.seed, r.episode_id}; }

/// Aligns two record lists on (budget, seed, episode_id). Throws on
/// duplicate or mismatched keys.
inline std::vector<PairedOutcome> align_pairs(std::span<const EpisodeRecord> a, std::span<const EpisodeRecord> b) {
  std::map<UnitKey, double> ma;
  for (const auto& r : a)
    if (!ma.emplace(unit_key(r), r.success).second) throw ValidationError("duplicate paired unit in records");
  std::map<UnitKey, double> mb;
  for (const auto& r : b)
    if (!mb.emplace(unit_key(r), r.success).second) throw ValidationError("duplicate paired unit in records");
  if (ma.size() != mb.size()) throw ValidationError("paired record sets have different keys");
  std::vector<PairedOutcome> out;
  out.reserve(ma.size());
  for (auto ia = ma.begin(), ib = mb.begin(); ia != ma.end(); ++ia, ++ib) {
    if (ia->first != ib->first) throw ValidationError("paired record sets have different keys");
    out.emplace_back(ia->second, ib->second);
  }
  return out;
}

inline std::vector<EpisodeRecord> select_records(std::span<const EpisodeRecord> recs, const std::string& variant,
                                                 const std::optional<std::string>& budget = std::nullopt) {
  std::vector<EpisodeRecord> out;
  for (const auto& r : recs)
    if (r.variant == variant && (!budget || r.budget == *budget)) out.push_back(r);
  return out;
}

struct PairedComparison {
  std::string name_a;
  std::string name_b;
  std::string budget;
  std::size_t n_pairs = 0;
  double delta = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_sign = 1.0;
  int n_nontied = 0;
};

inline PairedComparison compare_variants(std::span<const EpisodeRecord> recs, const std::string& a,
                                         const std::string& b, const std::string& budget, int n_resamples,
                                         std::uint64_t key) {
  const auto ra = select_records(recs, a, budget);
  const auto rb = select_records(recs, b, budget);
  const auto pairs = align_pairs(ra, rb);
  const auto boot = paired_delta_ci(pairs, n_resamples, 0.95, key);
  const auto st = sign_test(pairs);
  return {a, b, budget, boot.n_pairs, boot.delta, boot.ci_low, boot.ci_high, st.p, st.n_nontied};
}

struct MatchupCounts {
  int a_only_wins = 0;
  int b_only_wins = 0;
  int both_win = 0;
  int both_fail = 0;
  [[nodiscard]] int total() const { return a_only_wins + b_only_wins + both_win + both_fail; }
};

inline MatchupCounts matchup_counts(std::span<const EpisodeRecord> a, std::span<const EpisodeRecord> b) {
  MatchupCounts m;
  for (const auto& [sa, sb] : align_pairs(a, b)) {
    if (sa != 0 && sb != 0) ++m.both_win;
    else if (sa != 0) ++m.a_only_wins;
    else if (sb != 0) ++m.b_only_wins;
    else ++m.both_fail;
  }
  return m;
}

struct DifficultyBin {
  std::string label;
  std::size_t n = 0;
  double mean_success = 0.0;
  double distance_low = 0.0;
  double distance_high = 0.0;
};

inline std::string bin_label(int bin, int n_bins) {
  if (n_bins == 2) return bin == 0 ? "lower half" : "upper half";
  static const char* tertiles[] = {"low tertile", "mid tertile", "high tertile"};
  return tertiles[bin];
}

/// Equal-count bins over initial_goal_distance for one (budget, variant).
/// Records are ordered by (distance, seed, episode_id); bin i takes positions
/// [floor(i n / k), floor((i + 1) n / k)).
inline std::vector<DifficultyBin> difficulty_bins(std::span<const EpisodeRecord> recs, const std::string& budget,
                                                  const std::string& variant, int n_bins) {
  if (n_bins != 2 && n_bins != 3) throw ValidationError("n_bins must be 2 or 3");
  auto sel = select_records(recs, variant, budget);
  if (sel.size() < static_cast<std::size_t>(n_bins))
    throw ValidationError("fewer records than difficulty bins for " + variant + "/" + budget);
  std::ranges::sort(sel, [](const EpisodeRecord& a, const EpisodeRecord& b) {
    return std::tie(a.initial_goal_distance, a.seed, a.episode_id) <
           std::tie(b.initial_goal_distance, b.seed, b.episode_id);
  });
  std::vector<DifficultyBin> out;
  const std::size_t n = sel.size();
  for (int i = 0; i < n_bins; ++i) {
    const std::size_t lo = static_cast<std::size_t>(i) * n / static_cast<std::size_t>(n_bins);
    const std::size_t hi = static_cast<std::size_t>(i + 1) * n / static_cast<std::size_t>(n_bins);
    DifficultyBin b;
    b.label = bin_label(i, n_bins);
    b.n = hi - lo;
    double s = 0.0;
    for (std::size_t t = lo; t < hi; ++t) s += sel[t].success;
    b.mean_success = b.n ? s / static_cast<double>(b.n) : 0.0;
    b.distance_low = sel[lo].initial_goal_distance;
    b.distance_high = sel[hi - 1].initial_goal_distance;
    out.push_back(b);
  }
  return out;
}

struct ParetoPoint {
  std::string variant;
  double success = 0.0;
  std::uint64_t size_bytes = 0;
  bool non_dominated = false;
};

/// p dominates q iff p is no worse on both axes and strictly better on one.
inline bool dominates(const ParetoPoint& p, const ParetoPoint& q) {
  return p.success >= q.success && p.size_bytes <= q.size_bytes &&
         (p.success > q.success || p.size_bytes < q.size_bytes);
}

/// Sort by size ascending then success descending; a point is non-dominated
/// iff no earlier point (of smaller or equal size) has at least its success,
/// unless that point is an exact duplicate.
inline std::vector<ParetoPoint> pareto_frontier(std::vector<ParetoPoint> pts) {
  if (pts.empty()) throw ValidationError("pareto_frontier needs at least one point");
  std::vector<std::size_t> idx(pts.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::ranges::stable_sort(idx, [&](std::size_t a, std::size_t b) {
    return std::tie(pts[a].size_bytes, pts[b].success) < std::tie(pts[b].size_bytes, pts[a].success);
  });
  bool have_best = false;
  double best_success = 0.0;
  std::uint64_t best_size = 0;
  for (std::size_t i : idx) {
    auto& p = pts[i];
    const bool dup = have_best && p.success == best_success && p.size_bytes == best_size;
    p.non_dominated = !have_best || dup || p.success > best_success;
    if (!have_best || p.success > best_success) {
      have_best = true;
      best_success = p.success;
      best_size = p.size_bytes;
    }
  }
  return pts;
}

// ---------------------------------------------------------------------------
// run-level aggregation

struct RunPoint {
  std::string variant;
  std::string budget;
  std::uint64_t seed = 0;
  double success = 0.0;
  double mean_state_distance = 0.0;
  double visual_embedding_divergence = 0.0;
};

/// Means per (variant, budget, seed), in record order.
inline std::vector<RunPoint> run_level_points(std::span<const EpisodeRecord> recs) {
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::pair<RunPoint, int>> acc;
  for (const auto& r : recs) {
    auto& [p, n] = acc[{r.variant, r.budget, r.seed}];
    p.variant = r.variant;
    p.budget = r.budget;
    p.seed = r.seed;
    p.success += r.success;
    p.mean_state_distance += r.mean_state_distance;
    p.visual_embedding_divergence += r.visual_embedding_divergence;
    ++n;
  }
  std::vector<RunPoint> out;
  for (auto& [k, v] : acc) {
    auto& [p, n] = v;
    p.success /= n;
    p.mean_state_distance /= n;
    p.visual_embedding_divergence /= n;
    out.push_back(p);
  }
  return out;
}

inline double mean_success(std::span<const EpisodeRecord> recs, const std::string& variant,
                           const std::optional<std::string>& budget = std::nullopt) {
  const auto sel = select_records(recs, variant, budget);
  if (sel.empty()) throw ValidationError("no records for variant '" + variant + "'");
  double s = 0.0;
  for (const auto& r : sel) s += r.success;
  return s / static_cast<double>(sel.size());
}

inline double mean_divergence(std::span<const EpisodeRecord> recs, const std::string& variant) {
  const auto sel = select_records(recs, variant);
  if (sel.empty()) throw ValidationError("no records for variant '" + variant + "'");
  double s = 0.0;
  for (const auto& r : sel) s += r.visual_embedding_divergence;
  return s / static_cast<double>(sel.size());
}

// ---------------------------------------------------------------------------
// JSON forms

inline nlohmann::json to_json(const PairedComparison& c) {
  return {{"name_a", c.name_a}, {"name_b", c.name_b}, {"budget", c.budget},  {"n_pairs", c.n_pairs},
          {"delta", c.delta},   {"ci_low", c.ci_low}, {"ci_high", c.ci_high}, {"p_sign", c.p_sign},
          {"n_nontied", c.n_nontied}};
}

inline PairedComparison comparison_from_json(const nlohmann::json& j) {
  PairedComparison c;
  c.name_a = j.at("name_a").get<std::string>();
  c.name_b = j.at("name_b").get<std::string>();
  c.budget = j.at("budget").get<std::string>();
  c.n_pairs = j.at("n_pairs").get<std::size_t>();
  c.delta = j.at("delta").get<double>();
  c.ci_low = j.at("ci_low").get<double>();
  c.ci_high = j.at("ci_high").get<double>();
  c.p_sign = j.at("p_sign").get<double>();
  c.n_nontied = j.at("n_nontied").get<int>();
  return c;
}

inline nlohmann::json to_json(const MatchupCounts& m) {
  return {{"a_only_wins", m.a_only_wins}, {"b_only_wins", m.b_only_wins}, {"both_win", m.both_win},
          {"both_fail", m.both_fail},     {"n_pairs", m.total()}};
}

inline nlohmann::json to_json(const DifficultyBin& b) {
  return {{"label", b.label},
          {"n", b.n},
          {"mean_success", b.mean_success},
          {"distance_low", b.distance_low},
          {"distance_high", b.distance_high}};
}

inline nlohmann::json to_json(const ParetoPoint& p) {
  return {{"variant", p.variant},
          {"success", p.success},
          {"size_bytes", p.size_bytes},
          {"non_dominated", p.non_dominated}};
}

inline ParetoPoint pareto_point_from_json(const nlohmann::json& j) {
  return {j.at("variant").get<std::string>(), j.at("success").get<double>(), j.at("size_bytes").get<std::uint64_t>(),
          j.at("non_dominated").get<bool>()};
}

}  // namespace wmq
