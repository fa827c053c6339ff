#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dtc/equilibrium.hpp"
#include "dtc/forecast.hpp"
#include "dtc/model.hpp"

namespace dtc {

// ---------------------------------------------------------------------------
// Brute-force oracles

/// Arrivals by direct simulation: the k-th departure arrives at
/// max over j <= k of (s_j + (k - j) h). Quadratic and independent of the
/// recursive computation.
inline TripOutcome brute_force_arrivals(const TimeProfile& profile, const Game& game) {
  const std::size_t n = profile.size();
  if (n != game.num_users()) throw ProfileError("profile size does not match the game");
  const auto dep = profile.departures();
  std::vector<std::size_t> rank(n, 0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (dep[b] < dep[a]) ++rank[a];
    }
  }
  TripOutcome out;
  out.order.assign(n, 0);
  out.rank = rank;
  out.departure.resize(n);
  out.arrival.resize(n);
  out.queue_delay.resize(n);
  out.schedule_delay.resize(n);
  out.trip_cost.resize(n);
  for (std::size_t u = 0; u < n; ++u) {
    out.order[rank[u]] = u;
    out.departure[rank[u]] = dep[u];
  }
  for (std::size_t k = 0; k < n; ++k) {
    Tick latest = out.departure[k];
    for (std::size_t j = 0; j < k; ++j) {
      const Tick implied = out.departure[j] + static_cast<std::int64_t>(k - j) * game.headway_ticks();
      latest = std::max(latest, implied);
    }
    out.arrival[k] = latest;
    out.queue_delay[k] = game.duration(latest - out.departure[k]);
    out.schedule_delay[k] = schedule_delay_at(game.time(latest), game.config());
    out.trip_cost[k] = out.queue_delay[k] + out.schedule_delay[k];
  }
  return out;
}

/// Largest unilateral improvement by moving every user to every unoccupied
/// tick and recomputing the whole profile from scratch.
inline ImprovementScan brute_force_max_improvement(const TimeProfile& profile, const Game& game) {
  const TripOutcome base = brute_force_arrivals(profile, game);
  ImprovementScan scan{Cost(0), std::nullopt};
  for (UserId u = 0; u < profile.size(); ++u) {
    const Cost current = base.cost_of(u);
    for (Tick t = game.first_tick(); t <= game.last_tick(); t = t + 1) {
      if (profile.occupied(t)) continue;
      const TripOutcome moved = brute_force_arrivals(profile.with_departure(u, t), game);
      const Cost gain = current - moved.cost_of(u);
      if (gain > scan.value) {
        scan.value = gain;
        scan.witness = Deviation{u, profile.departure(u), t, current, moved.cost_of(u)};
      }
    }
  }
  return scan;
}

// ---------------------------------------------------------------------------
// Structural checks

/// Whenever the first departure is not before the equilibrium first
/// departure, the last user pays at least the equilibrium cost (strictly more
/// when strictly later). Vacuously true otherwise.
inline bool last_user_bound_holds(const TripOutcome& o, const Game& game) {
  const EquilibriumConstants k = equilibrium_constants(game.config());
  const Rational first = game.time(o.departure.front());
  if (first < k.first_departure) return true;
  const Cost& last = o.trip_cost.back();
  return first == k.first_departure ? last >= k.cost : last > k.cost;
}

/// An unoccupied tick in the equilibrium rush hour whose forecast is its own
/// schedule delay (no queue ahead) and at most the equilibrium cost. Only
/// searched when the profile's arrivals span more than the rush-hour length.
inline std::optional<Tick> free_flow_witness(const TripOutcome& o, const Game& game) {
  const EquilibriumConstants k = equilibrium_constants(game.config());
  const std::int64_t span = o.arrival.back() - o.departure.front();
  if (!(game.duration(span) > k.rush_length)) return std::nullopt;
  for (const auto& seg : forecast_segments(o, game)) {
    if (seg.kind == SegmentKind::congested_interpolation) continue;
    for (Tick t = seg.first; t <= seg.last; t = t + 1) {
      const Rational time = game.time(t);
      if (time < k.first_departure) continue;
      if (time > k.last_departure) break;
      if (seg.evaluate(t, game) <= k.cost) return t;
    }
  }
  return std::nullopt;
}

/// True unless the arrival span exceeds the rush-hour length and still no
/// free-flow tick with forecast at most the equilibrium cost exists.
inline bool free_flow_witness_exists_when_required(const TripOutcome& o, const Game& game) {
  const EquilibriumConstants k = equilibrium_constants(game.config());
  const std::int64_t span = o.arrival.back() - o.departure.front();
  if (!(game.duration(span) > k.rush_length)) return true;
  return free_flow_witness(o, game).has_value();
}

// ---------------------------------------------------------------------------
// Better-response paths

struct PathStep {
  std::int64_t day = 0;  // 1-based position in the path
  UserId user = 0;
  Tick from;
  Tick to;
  Cost cost_before;
  Cost forecast;
  /// Length of the equilibrated prefix the step must respect; 0 for unordered steps.
  std::size_t fixed_prefix = 0;
};

struct BetterResponsePath {
  TimeProfile start;
  TimeProfile end;
  std::vector<PathStep> steps;
  bool reached_equilibrium = false;
  /// Witness substitutions and other remarks made while building.
  std::vector<std::string> notes;
};

class PathBuildError : public InvariantViolation {
 public:
  using InvariantViolation::InvariantViolation;
};

namespace detail {

class PathBuilder {
 public:
  PathBuilder(const Game& game, TimeProfile start, std::int64_t max_steps)
      : game_(game), sol_(equilibrium_solution(game)), max_steps_(max_steps) {
    path_.start = start;
    profile_ = std::move(start);
    outcome_ = compute_arrivals(profile_, game_);
  }

  BetterResponsePath build() {
    drive_first_departure();
    for (std::size_t n = 1; n < outcome_.size(); ++n) fix_next(n);
    path_.end = profile_;
    path_.reached_equilibrium = outcome_.departure == sol_.departures;
    if (!path_.reached_equilibrium) throw PathBuildError("ordered path ended away from the equilibrium");
    return std::move(path_);
  }

 private:
  [[nodiscard]] std::size_t last() const { return outcome_.size() - 1; }
  [[nodiscard]] Tick rush_start() const { return sol_.first_departure; }
  [[nodiscard]] Tick rush_end() const { return sol_.last_departure; }

  [[nodiscard]] bool improves(std::size_t rank, Tick to) const {
    return game_.in_horizon(to) && !outcome_.occupied(to) &&
           forecasted_cost(outcome_, to, game_) < outcome_.trip_cost[rank];
  }

  void step(std::size_t rank, Tick to, std::size_t prefix, const char* why) {
    if (static_cast<std::int64_t>(path_.steps.size()) >= max_steps_) {
      throw PathBuildError("ordered path exceeded " + std::to_string(max_steps_) + " steps");
    }
    if (!improves(rank, to)) {
      throw PathBuildError(std::string("step ") + std::to_string(path_.steps.size() + 1) + " (" + why +
                           "): rank " + std::to_string(rank + 1) + " moving to tick " + std::to_string(to.index) +
                           " is not a strict forecast improvement");
    }
    const UserId user = outcome_.order[rank];
    path_.steps.push_back(PathStep{static_cast<std::int64_t>(path_.steps.size()) + 1, user, outcome_.departure[rank],
                                   to, outcome_.trip_cost[rank], forecasted_cost(outcome_, to, game_), prefix});
    profile_.move(user, to);
    outcome_ = compute_arrivals(profile_, game_);
  }

  [[nodiscard]] std::optional<Tick> free_flow_after(Tick after) const {
    for (const auto& seg : forecast_segments(outcome_, game_)) {
      if (seg.kind == SegmentKind::congested_interpolation) continue;
      for (Tick t = std::max(seg.first, std::max(rush_start(), after + 1)); t <= std::min(seg.last, rush_end());
           t = t + 1) {
        if (seg.evaluate(t, game_) <= sol_.equilibrium_cost) return t;
      }
    }
    return std::nullopt;
  }

  /// Moves the first departure onto the equilibrium first departure.
  void drive_first_departure() {
    const std::int64_t rush = rush_end() - rush_start();
    while (outcome_.departure.front() != rush_start()) {
      const Tick first = outcome_.departure.front();
      if (rush_start() < first) {
        step(last(), rush_start(), 0, "last user to the rush-hour start");
        continue;
      }
      if (outcome_.arrival.back() - first == rush) {
        step(0, rush_end(), 0, "first user to the rush-hour end");
      } else if (auto free = free_flow_after(first)) {
        step(0, *free, 0, "first user to a free-flow tick");
      } else {
        const auto options = better_response_set(outcome_, outcome_.order[0], game_, first + 1);
        if (options.empty()) throw PathBuildError("first user before the rush hour has no later better response");
        path_.notes.push_back("first user at tick " + std::to_string(first.index) +
                              " used the earliest later better response");
        step(0, options.front(), 0, "first user to the earliest later better response");
      }
    }
  }

  /// With ranks 1..n at their equilibrium departures, puts rank n+1 on its own.
  void fix_next(std::size_t n) {
    const Tick target = sol_.departures[n];
    while (outcome_.departure[n] != target) {
      const Tick current = outcome_.departure[n];
      if (current > target) {
        step(last(), target, n, "last user onto the next equilibrium departure");
        continue;
      }
      if (n == last() || outcome_.arrival.back() < rush_end()) {
        step(n, rush_end(), n, "next user to the rush-hour end");
      } else if (outcome_.arrival.back() > rush_end()) {
        const auto free = free_flow_after(current);
        if (!free) throw PathBuildError("no free-flow tick after rank " + std::to_string(n + 1));
        step(n, *free, n, "next user to a free-flow tick");
      } else if (outcome_.departure.back() != outcome_.arrival.back()) {
        step(n, rush_end(), n, "next user to the last arrival");
      } else {
        delay_before_last(n);
      }
    }
  }

  /// The last user free-flows at the rush-hour end: the next user moves to the
  /// tick just before it, or to the nearest improving free tick when that one
  /// is taken or does not improve.
  void delay_before_last(std::size_t n) {
    const Tick wanted = outcome_.departure.back() - 1;
    if (improves(n, wanted)) {
      step(n, wanted, n, "next user to just before the last departure");
      return;
    }
    const Tick current = outcome_.departure[n];
    std::optional<Tick> best;
    for (Tick t : better_response_set(outcome_, outcome_.order[n], game_, current + 1)) {
      if (!best || std::abs(t - wanted) < std::abs(*best - wanted)) best = t;
    }
    if (!best) throw PathBuildError("rank " + std::to_string(n + 1) + " cannot be delayed before the last user");
    path_.notes.push_back("substituted tick " + std::to_string(best->index) + " for " +
                          std::to_string(wanted.index) + " when delaying rank " + std::to_string(n + 1));
    step(n, *best, n, "next user to the nearest improving tick before the last departure");
  }

  const Game& game_;
  EquilibriumSolution sol_;
  std::int64_t max_steps_;
  TimeProfile profile_;
  TripOutcome outcome_;
  BetterResponsePath path_;
};

}  // namespace detail

/// Deterministic better-response path to the equilibrium that first places
/// the first departure at the rush-hour start and then fixes ranks in order.
/// Every step is checked to be a strict forecast improvement.
inline BetterResponsePath build_ordered_path(const Game& game, const TimeProfile& initial,
                                             std::int64_t max_steps = 10'000'000) {
  return detail::PathBuilder(game, initial, max_steps).build();
}

struct PathVerdict {
  bool ok = true;
  /// 1-based index of the first offending step.
  std::optional<std::size_t> step;
  std::string message;
};

/// Replays a path, re-deriving every forecast. Steps with a positive
/// `fixed_prefix` must also leave that prefix untouched and land after it.
inline PathVerdict validate_path(const BetterResponsePath& path, const Game& game) {
  TimeProfile profile = path.start;
  const auto fail = [](std::size_t i, std::string msg) { return PathVerdict{false, i + 1, std::move(msg)}; };
  for (std::size_t i = 0; i < path.steps.size(); ++i) {
    const PathStep& s = path.steps[i];
    const TripOutcome before = compute_arrivals(profile, game);
    if (s.user >= profile.size()) return fail(i, "unknown user");
    if (profile.departure(s.user) != s.from) return fail(i, "mover is not at the recorded origin tick");
    if (s.from == s.to) return fail(i, "step does not change the departure");
    if (!game.in_horizon(s.to) || before.occupied(s.to)) return fail(i, "destination tick is occupied or outside");
    const Cost forecast = forecasted_cost(before, s.to, game);
    if (forecast != s.forecast || before.cost_of(s.user) != s.cost_before) {
      return fail(i, "recorded costs differ from the replay");
    }
    if (!(forecast < before.cost_of(s.user))) return fail(i, "not a strict forecast improvement");
    if (s.fixed_prefix > 0) {
      const std::size_t n = s.fixed_prefix;
      if (n > before.size()) return fail(i, "prefix longer than the profile");
      if (before.rank[s.user] < n) return fail(i, "an equilibrated user moves");
      if (s.to <= before.departure[n - 1]) return fail(i, "a user overtakes the equilibrated prefix");
    }
    profile.move(s.user, s.to);
    if (s.fixed_prefix > 0) {
      const TripOutcome after = compute_arrivals(profile, game);
      for (std::size_t k = 0; k < s.fixed_prefix; ++k) {
        if (after.departure[k] != before.departure[k] || after.trip_cost[k] != before.trip_cost[k]) {
          return fail(i, "equilibrated prefix changed");
        }
      }
    }
  }
  if (!(profile == path.end)) return {false, std::nullopt, "replay does not end at the recorded end profile"};
  return {};
}

inline void write_path(std::ostream& os, const BetterResponsePath& path, const Game& game) {
  os << "# better-response path: day,user,from,to,cost_before,forecast,fixed_prefix\n";
  for (const auto& s : path.steps) {
    os << s.day << ',' << s.user + 1 << ',' << game.time(s.from) << ',' << game.time(s.to) << ','
       << s.cost_before << ',' << s.forecast << ',' << s.fixed_prefix << '\n';
  }
}

// ---------------------------------------------------------------------------
// Exhaustive better-response graph

/// Refusal to enumerate a graph larger than the node budget.
class BudgetExceeded : public ModelError {
 public:
  BudgetExceeded(double estimate, std::int64_t budget)
      : ModelError("profile graph would have about " + format(estimate) + " canonical nodes, over the budget of " +
                   std::to_string(budget)),
        estimate_(estimate) {}
  [[nodiscard]] double estimate() const noexcept { return estimate_; }

 private:
  static std::string format(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
  }
  double estimate_;
};

/// Better-response graph over profiles with sorted departures (users are
/// interchangeable, so each node stands for P! labelled profiles).
struct ProfileGraph {
  std::size_t users = 0;
  std::int64_t ticks = 0;
  Tick first_tick;
  /// Sorted departure ticks of node i at [i*users, (i+1)*users).
  std::vector<Tick> node_ticks;
  /// Compressed adjacency: edges of node i are targets[offsets[i] .. offsets[i+1]).
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> targets;
  std::vector<std::size_t> mover_rank;

  [[nodiscard]] std::size_t node_count() const noexcept { return offsets.empty() ? 0 : offsets.size() - 1; }
  [[nodiscard]] std::size_t edge_count() const noexcept { return targets.size(); }
  [[nodiscard]] std::span<const Tick> node(std::size_t i) const {
    return std::span<const Tick>(node_ticks).subspan(i * users, users);
  }
  [[nodiscard]] std::size_t out_degree(std::size_t i) const { return offsets[i + 1] - offsets[i]; }

  /// Position of a sorted tick set in colexicographic order.
  [[nodiscard]] std::size_t index_of(std::span<const Tick> sorted) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < sorted.size(); ++i) idx += binomial(static_cast<std::uint64_t>(sorted[i] - first_tick), i + 1);
    return idx;
  }

  static std::size_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return static_cast<std::size_t>(r);
  }
};

inline double binomial_estimate(double n, double k) {
  if (k > n) return 0.0;
  return std::exp(std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1));
}

/// Enumerates every sorted profile of the horizon grid and all single-user
/// better responses between them.
inline ProfileGraph build_profile_graph(const Game& game, std::int64_t node_budget = 1'000'000) {
  const std::size_t users = game.num_users();
  const std::int64_t ticks = game.tick_count();
  const double estimate = binomial_estimate(static_cast<double>(ticks), static_cast<double>(users));
  if (estimate > static_cast<double>(node_budget)) throw BudgetExceeded(estimate, node_budget);

  ProfileGraph g;
  g.users = users;
  g.ticks = ticks;
  g.first_tick = game.first_tick();
  const std::size_t nodes = ProfileGraph::binomial(static_cast<std::uint64_t>(ticks), users);
  g.node_ticks.reserve(nodes * users);
  g.offsets.reserve(nodes + 1);
  g.offsets.push_back(0);

  std::vector<std::int64_t> combo(users);
  for (std::size_t i = 0; i < users; ++i) combo[i] = static_cast<std::int64_t>(i);
  std::vector<Tick> sorted(users);
  for (std::size_t node = 0; node < nodes; ++node) {
    for (std::size_t i = 0; i < users; ++i) sorted[i] = g.first_tick + combo[i];
    g.node_ticks.insert(g.node_ticks.end(), sorted.begin(), sorted.end());
    const TripOutcome o = compute_arrivals(TimeProfile::from_ticks(sorted), game);
    for (const auto& seg : forecast_segments(o, game)) {
      for (Tick t = seg.first; t <= seg.last; t = t + 1) {
        const Cost f = seg.evaluate(t, game);
        for (std::size_t k = 0; k < users; ++k) {
          if (!(f < o.trip_cost[k])) continue;
          std::vector<Tick> next = sorted;
          next.erase(next.begin() + static_cast<std::ptrdiff_t>(k));
          next.insert(std::upper_bound(next.begin(), next.end(), t), t);
          g.targets.push_back(g.index_of(next));
          g.mover_rank.push_back(k);
        }
      }
    }
    g.offsets.push_back(g.targets.size());
    // Next combination in colexicographic order.
    std::size_t i = 0;
    while (i + 1 < users && combo[i] + 1 == combo[i + 1]) {
      combo[i] = static_cast<std::int64_t>(i);
      ++i;
    }
    ++combo[i];
  }
  return g;
}

struct AcyclicityReport {
  bool symmetry_reduced = true;
  std::size_t nodes = 0;
  /// Labelled profile count: canonical nodes times P!.
  double labelled_profiles = 0;
  std::size_t edges = 0;
  std::size_t equilibrium_node = 0;
  bool equilibrium_is_sink = false;
  std::vector<std::vector<Tick>> sinks;
  std::size_t unreachable = 0;
  bool is_weakly_acyclic = false;
  [[nodiscard]] bool equilibrium_unique_sink() const { return equilibrium_is_sink && sinks.size() == 1; }
};

inline AcyclicityReport analyse_profile_graph(const ProfileGraph& g, const Game& game) {
  const EquilibriumSolution sol = equilibrium_solution(game);
  AcyclicityReport r;
  r.nodes = g.node_count();
  r.edges = g.edge_count();
  double fact = 1;
  for (std::size_t i = 2; i <= g.users; ++i) fact *= static_cast<double>(i);
  r.labelled_profiles = static_cast<double>(r.nodes) * fact;
  r.equilibrium_node = g.index_of(sol.departures);
  r.equilibrium_is_sink = g.out_degree(r.equilibrium_node) == 0;
  for (std::size_t i = 0; i < r.nodes; ++i) {
    if (g.out_degree(i) == 0) r.sinks.emplace_back(g.node(i).begin(), g.node(i).end());
  }

  std::vector<std::size_t> rev_offsets(r.nodes + 1, 0);
  for (std::size_t t : g.targets) ++rev_offsets[t + 1];
  for (std::size_t i = 0; i < r.nodes; ++i) rev_offsets[i + 1] += rev_offsets[i];
  std::vector<std::size_t> rev(g.targets.size());
  std::vector<std::size_t> fill(rev_offsets.begin(), rev_offsets.end() - 1);
  for (std::size_t from = 0; from < r.nodes; ++from) {
    for (std::size_t e = g.offsets[from]; e < g.offsets[from + 1]; ++e) rev[fill[g.targets[e]]++] = from;
  }
  std::vector<bool> seen(r.nodes, false);
  std::deque<std::size_t> queue{r.equilibrium_node};
  seen[r.equilibrium_node] = true;
  std::size_t reached = 1;
  while (!queue.empty()) {
    const std::size_t v = queue.front();
    queue.pop_front();
    for (std::size_t e = rev_offsets[v]; e < rev_offsets[v + 1]; ++e) {
      if (!seen[rev[e]]) {
        seen[rev[e]] = true;
        ++reached;
        queue.push_back(rev[e]);
      }
    }
  }
  r.unreachable = r.nodes - reached;
  r.is_weakly_acyclic = r.unreachable == 0 && r.equilibrium_is_sink;
  return r;
}

/// Builds the full graph of a tiny game and checks that the equilibrium is
/// reachable from every profile and is a sink.
inline AcyclicityReport exhaustive_weak_acyclicity(const Game& game, std::int64_t node_budget = 1'000'000) {
  return analyse_profile_graph(build_profile_graph(game, node_budget), game);
}

/// Plain-text export: one "node" line per profile, then one "edge" line per better response.
inline void write_edge_list(std::ostream& os, const ProfileGraph& g, const Game& game) {
  os << "# node <id> <departure times, ascending>\n# edge <from id> <to id> <mover rank>\n";
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    os << "node " << i;
    for (Tick t : g.node(i)) os << ' ' << game.time(t);
    os << '\n';
  }
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    for (std::size_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) {
      os << "edge " << i << ' ' << g.targets[e] << ' ' << g.mover_rank[e] + 1 << '\n';
    }
  }
}

}  // namespace dtc
