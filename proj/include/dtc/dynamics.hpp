#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dtc/equilibrium.hpp"
#include "dtc/forecast.hpp"
#include "dtc/model.hpp"

namespace dtc {

using Rng = std::mt19937_64;

/// Independent, reproducible streams derived from one user-facing seed.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

enum class DynamicsKind { naive, fixation };

enum class DynamicsMode {
  fixation,  // leading users equilibrated against the reference cost are frozen
  free,      // after a bound update: everyone may move anywhere
};

enum class DayEvent { init, move, no_move, fix, bound_update, refix, anomaly };

constexpr std::string_view to_string(DynamicsKind k) noexcept {
  return k == DynamicsKind::naive ? "naive" : "fixation";
}
constexpr std::string_view to_string(DynamicsMode m) noexcept {
  return m == DynamicsMode::fixation ? "fixation" : "free";
}
constexpr std::string_view to_string(DayEvent e) noexcept {
  switch (e) {
    case DayEvent::init: return "init";
    case DayEvent::move: return "move";
    case DayEvent::no_move: return "no-move";
    case DayEvent::fix: return "fix";
    case DayEvent::bound_update: return "bound-update";
    case DayEvent::refix: return "refix";
    case DayEvent::anomaly: return "anomaly";
  }
  return "?";
}

struct DynamicsParams {
  DynamicsKind kind = DynamicsKind::fixation;
  std::uint64_t seed = 1;
  /// Last day simulated; day 1 is the initial profile.
  std::int64_t max_days = 1'000'000;
  bool stop_at_zero_rmse = true;
  int max_candidates = 100;
  std::int64_t stuck_threshold = 10'000;
  /// Initial bounds for the first departure; default to the horizon ends.
  std::optional<Tick> lower_bound;
  std::optional<Tick> upper_bound;
};

struct DynamicsState {
  std::int64_t day = 1;
  TimeProfile profile;
  TripOutcome outcome;
  DynamicsMode mode = DynamicsMode::fixation;
  Cost reference_cost;
  std::size_t fixed_prefix = 0;
  Tick lower_bound;
  Tick upper_bound;
  std::int64_t stuck_counter = 0;
  Rng rng;

  std::int64_t moves = 0;
  std::int64_t bound_updates = 0;
  std::int64_t anomalies = 0;

  /// Users allowed to move: everyone in free mode, otherwise those outside the prefix.
  [[nodiscard]] std::vector<UserId> free_users() const {
    if (mode == DynamicsMode::free) return outcome.order;
    return std::vector<UserId>(outcome.order.begin() + static_cast<std::ptrdiff_t>(fixed_prefix), outcome.order.end());
  }
  [[nodiscard]] Tick first_departure() const { return outcome.departure.front(); }
};

/// Exact mean squared deviation of trip costs from `target`.
inline Rational mean_squared_error(const TripOutcome& outcome, const Cost& target) {
  Rational sum;
  for (const auto& c : outcome.trip_cost) {
    const Rational diff = c - target;
    sum += diff * diff;
  }
  return sum / Rational(static_cast<std::int64_t>(outcome.size()));
}

/// Root of the exact mean squared error; exactly 0.0 iff every cost equals `target`.
inline double rmse_from_mse(const Rational& mse) { return mse.is_zero() ? 0.0 : std::sqrt(mse.to_double()); }

inline double rmse(const TripOutcome& outcome, const GameConfig& config) {
  return rmse_from_mse(mean_squared_error(outcome, equilibrium_constants(config).cost));
}

inline double rmse(const TimeProfile& profile, const Game& game) {
  return rmse(compute_arrivals(profile, game), game.config());
}

/// Extends an equilibrated prefix of length `n`: the next user joins while its
/// cost equals `reference` and it arrives exactly one headway after its predecessor.
inline std::size_t extend_prefix(const TripOutcome& o, const Cost& reference, std::size_t n, const Game& game) {
  if (n == 0 && o.size() > 0 && o.trip_cost[0] == reference) n = 1;
  while (n > 0 && n < o.size() && o.trip_cost[n] == reference &&
         o.arrival[n] - o.arrival[n - 1] == game.headway_ticks()) {
    ++n;
  }
  return n;
}

/// Departure at which the user following a prefix of `n` equilibrated users
/// would pay exactly `reference`: d_n + h + V(d_n + h) - reference. Returns
/// nullopt when that time is not an admissible free tick after s_n.
inline std::optional<Tick> reference_departure_time(const TripOutcome& o, std::size_t n, const Cost& reference,
                                                    const Game& game) {
  if (n == 0 || n >= o.size()) return std::nullopt;
  const Tick next_arrival = o.arrival[n - 1] + game.headway_ticks();
  const Cost schedule = game.schedule_delay(next_arrival);
  if (schedule > reference) return std::nullopt;
  const auto tick = game.to_tick(game.time(next_arrival) + schedule - reference);
  if (!tick || *tick <= o.departure[n - 1] || !game.in_horizon(*tick)) return std::nullopt;
  return tick;
}

/// True when, behind a prefix led by a first departure at `first`, a queued
/// user can pay the first user's schedule delay exactly at some grid tick on
/// both sides of the desired arrival time. Early arrivals always can; late
/// ones need (1+gamma)*first - V(first) to be a grid multiple.
inline bool reference_cost_on_grid(Tick first, const Game& game) {
  const Rational one_plus_late = Rational(1) + game.config().late_penalty;
  return is_multiple_of(one_plus_late * game.time(first) - game.schedule_delay(first), game.grid_step());
}

enum class EventualKind { converged, too_early, too_late, anomaly };

constexpr std::string_view to_string(EventualKind k) noexcept {
  switch (k) {
    case EventualKind::converged: return "converged";
    case EventualKind::too_early: return "too-early";
    case EventualKind::too_late: return "too-late";
    case EventualKind::anomaly: return "anomaly";
  }
  return "?";
}

struct Classification {
  EventualKind kind = EventualKind::anomaly;
  /// False when the verdict rests only on the stuck-state heuristic.
  bool definitive = false;
  std::string reason;
};

/// Diagnoses whether a stuck fixation state started too early or too late.
inline Classification classify_eventual_profile(const DynamicsState& state, const Game& game) {
  const TripOutcome& o = state.outcome;
  const Cost& cr = state.reference_cost;
  const std::size_t n = state.fixed_prefix;
  const std::size_t users = o.size();

  if (users == 1) {
    const Tick s = o.departure[0];
    if (s.index == 0) return {EventualKind::converged, true, "single user at the desired arrival time"};
    if (s.index < 0) return {EventualKind::too_early, true, "single user early"};
    return {EventualKind::too_late, true, "single user late"};
  }

  const bool all_equal =
      std::all_of(o.trip_cost.begin(), o.trip_cost.end(), [&](const Cost& c) { return c == cr; });
  if (all_equal) {
    if (n == users && o.arrival.back() == o.departure.back()) {
      return {EventualKind::converged, true, "all costs equal, headway everywhere, free-flowing last user"};
    }
    return {EventualKind::too_early, true, "all costs equal the reference but the profile is not the equilibrium"};
  }
  if (n < users) {
    const Tick next_arrival = o.arrival[n - 1] + game.headway_ticks();
    if (game.schedule_delay(next_arrival) > cr) {
      return {EventualKind::too_late, true, "next user cannot reach the reference cost"};
    }
  }
  bool above = false;
  bool below = false;
  for (std::size_t k = n; k < users; ++k) {
    above = above || o.trip_cost[k] > cr;
    below = below || o.trip_cost[k] < cr;
  }
  if (below && !above) return {EventualKind::too_early, true, "every unfixed cost below the reference"};
  if (above && !below) return {EventualKind::too_late, false, "every unfixed cost above the reference"};
  return {EventualKind::anomaly, false, "unfixed costs on both sides of the reference"};
}

namespace detail {

inline void refresh(DynamicsState& state, const Game& game) { state.outcome = compute_arrivals(state.profile, game); }

inline void apply_move(DynamicsState& state, UserId user, Tick to, const Game& game) {
  state.profile.move(user, to);
  refresh(state, game);
  ++state.moves;
}

inline void check_prefix(const DynamicsState& state, const Game& game) {
  const TripOutcome& o = state.outcome;
  for (std::size_t k = 0; k < state.fixed_prefix; ++k) {
    if (o.trip_cost[k] != state.reference_cost ||
        (k > 0 && o.arrival[k] - o.arrival[k - 1] != game.headway_ticks())) {
      throw InvariantViolation("fixed prefix broken at rank " + std::to_string(k + 1) + " on day " +
                               std::to_string(state.day));
    }
  }
}

/// Re-enters fixation with the first user's cost as reference.
inline void enter_fixation(DynamicsState& state, const Game& game) {
  state.mode = DynamicsMode::fixation;
  state.reference_cost = state.outcome.trip_cost.front();
  state.fixed_prefix = extend_prefix(state.outcome, state.reference_cost, 0, game);
  state.stuck_counter = 0;
}

}  // namespace detail

inline DynamicsState make_state(const Game& game, TimeProfile initial, const DynamicsParams& params) {
  DynamicsState state;
  state.profile = std::move(initial);
  detail::refresh(state, game);
  state.lower_bound = params.lower_bound.value_or(game.first_tick());
  state.upper_bound = params.upper_bound.value_or(game.last_tick());
  if (!(state.lower_bound < state.upper_bound)) throw ModelError("lower bound must be below upper bound");
  state.rng = make_rng(params.seed, 1);
  const Tick first = state.first_departure();
  if (reference_cost_on_grid(first, game) && state.lower_bound < first && first < state.upper_bound) {
    detail::enter_fixation(state, game);
  } else {
    state.mode = DynamicsMode::free;
  }
  return state;
}

/// Result of a single day's move attempt.
struct StepOutcome {
  std::optional<UserId> mover;
  std::optional<Tick> from;
  std::optional<Tick> to;
  std::size_t newly_fixed = 0;
  [[nodiscard]] bool moved() const noexcept { return to.has_value(); }
};

/// One day of the naive dynamics: a uniformly chosen user tries one uniformly
/// drawn unoccupied tick and moves if it strictly improves the forecast.
inline StepOutcome naive_step(DynamicsState& state, const Game& game) {
  ++state.day;
  std::uniform_int_distribution<std::size_t> pick(0, state.profile.size() - 1);
  const UserId user = pick(state.rng);
  StepOutcome step{user, state.profile.departure(user), std::nullopt, 0};
  if (auto to = sample_better_response(state.outcome, user, game, state.rng, SamplingOptions{1, {}, {}})) {
    detail::apply_move(state, user, *to, game);
    step.to = to;
  }
  return step;
}

/// One fixation day before any diagnosis: a uniformly chosen unfixed user
/// looks for a better response strictly after the last fixed departure, the
/// reference tick first; then the prefix is extended as far as it goes.
inline StepOutcome fixation_step(DynamicsState& state, const Game& game, int max_candidates = 100) {
  ++state.day;
  const std::size_t n = state.fixed_prefix;
  const std::size_t users = state.outcome.size();
  if (n >= users) return {};
  std::uniform_int_distribution<std::size_t> pick(n, users - 1);
  const UserId user = state.outcome.order[pick(state.rng)];
  StepOutcome step{user, state.profile.departure(user), std::nullopt, 0};
  const SamplingOptions options{max_candidates, state.outcome.departure[n - 1] + 1,
                                reference_departure_time(state.outcome, n, state.reference_cost, game)};
  if (auto to = sample_better_response(state.outcome, user, game, state.rng, options)) {
    detail::apply_move(state, user, *to, game);
    step.to = to;
  }
  state.fixed_prefix = extend_prefix(state.outcome, state.reference_cost, n, game);
  step.newly_fixed = state.fixed_prefix - n;
  detail::check_prefix(state, game);
  return step;
}

/// One free-mode day: any user, any tick. Re-enters fixation once the first
/// departure lies strictly inside the current bounds. Returns true on re-entry.
inline bool free_step(DynamicsState& state, const Game& game, int max_candidates, StepOutcome& step) {
  ++state.day;
  std::uniform_int_distribution<std::size_t> pick(0, state.profile.size() - 1);
  const UserId user = pick(state.rng);
  step = StepOutcome{user, state.profile.departure(user), std::nullopt, 0};
  if (auto to = sample_better_response(state.outcome, user, game, state.rng, SamplingOptions{max_candidates, {}, {}})) {
    detail::apply_move(state, user, *to, game);
    step.to = to;
  }
  const Tick first = state.first_departure();
  if (state.lower_bound < first && first < state.upper_bound && reference_cost_on_grid(first, game)) {
    detail::enter_fixation(state, game);
    return true;
  }
  return false;
}

/// Narrows the bracket on the first departure and releases everyone.
/// Aborts when the equilibrium first departure would leave the bracket.
inline void adjust_bounds_and_release(DynamicsState& state, const Classification& verdict, const Game& game) {
  if (verdict.kind != EventualKind::too_early && verdict.kind != EventualKind::too_late) {
    throw InvariantViolation("bounds can only be adjusted on a too-early or too-late diagnosis");
  }
  const Tick first = state.first_departure();
  if (verdict.kind == EventualKind::too_late) {
    state.upper_bound = first;
  } else {
    state.lower_bound = first;
  }
  const Rational target = equilibrium_constants(game.config()).first_departure;
  if (!(state.lower_bound < state.upper_bound) || game.time(state.lower_bound) > target ||
      target > game.time(state.upper_bound)) {
    throw InvariantViolation("bound update on day " + std::to_string(state.day) + " (" +
                             std::string(to_string(verdict.kind)) + ": " + verdict.reason +
                             ") leaves the bracket [" + game.time(state.lower_bound).to_string() + ", " +
                             game.time(state.upper_bound).to_string() + "] without the equilibrium first departure " +
                             target.to_string());
  }
  state.mode = DynamicsMode::free;
  state.fixed_prefix = 0;
  state.stuck_counter = 0;
  ++state.bound_updates;
}

struct DayRecord {
  std::int64_t day = 1;
  DayEvent event = DayEvent::init;
  std::optional<UserId> mover;
  std::optional<Tick> from;
  std::optional<Tick> to;
  Rational mse;
  double rmse = 0.0;
  Tick first_departure;
  std::size_t fixed_prefix = 0;
  DynamicsMode mode = DynamicsMode::fixation;
  Tick lower_bound;
  Tick upper_bound;
  std::optional<Classification> diagnosis;
};

struct RunResult {
  bool converged = false;
  /// First day whose profile has zero rmse.
  std::optional<std::int64_t> convergence_day;
  std::int64_t days = 1;
  TimeProfile final_profile;
  std::int64_t moves = 0;
  std::int64_t bound_updates = 0;
  std::int64_t anomalies = 0;
  /// Every day's record, when requested.
  std::vector<DayRecord> records;
};

using DayObserver = std::function<void(const DayRecord&, const DynamicsState&)>;

namespace detail {

inline DayRecord make_record(const DynamicsState& state, DayEvent event, const StepOutcome& step, const Cost& target_cost) {
  DayRecord r;
  r.day = state.day;
  r.event = event;
  r.mover = step.mover;
  r.from = step.from;
  r.to = step.to;
  r.mse = mean_squared_error(state.outcome, target_cost);
  r.rmse = rmse_from_mse(r.mse);
  r.first_departure = state.first_departure();
  r.fixed_prefix = state.mode == DynamicsMode::fixation ? state.fixed_prefix : 0;
  r.mode = state.mode;
  r.lower_bound = state.lower_bound;
  r.upper_bound = state.upper_bound;
  return r;
}

inline DayEvent step_event(const StepOutcome& step) {
  if (step.newly_fixed > 0) return DayEvent::fix;
  return step.moved() ? DayEvent::move : DayEvent::no_move;
}

/// One day of the fixation dynamics, diagnosing and re-bracketing when stuck.
inline DayRecord fixation_day(DynamicsState& state, const Game& game, const DynamicsParams& params, const Cost& target_cost) {
  StepOutcome step;
  if (state.mode == DynamicsMode::free) {
    const bool reentered = free_step(state, game, params.max_candidates, step);
    return make_record(state, reentered ? DayEvent::refix : step_event(step), step, target_cost);
  }
  DayEvent event = DayEvent::no_move;
  if (state.fixed_prefix < state.outcome.size()) {
    step = fixation_step(state, game, params.max_candidates);
    event = step_event(step);
    state.stuck_counter = step.newly_fixed > 0 ? 0 : state.stuck_counter + 1;
  } else {
    ++state.day;
  }
  const bool all_fixed = state.fixed_prefix == state.outcome.size();
  if (!all_fixed && state.stuck_counter < params.stuck_threshold) return make_record(state, event, step, target_cost);

  Classification verdict = classify_eventual_profile(state, game);
  if (verdict.kind == EventualKind::converged) return make_record(state, event, step, target_cost);
  DayRecord record = make_record(state, event, step, target_cost);
  if (verdict.kind == EventualKind::anomaly) {
    state.stuck_counter = 0;
    ++state.anomalies;
    record.event = DayEvent::anomaly;
  } else {
    adjust_bounds_and_release(state, verdict, game);
    record = make_record(state, DayEvent::bound_update, step, target_cost);
  }
  record.diagnosis = std::move(verdict);
  return record;
}

}  // namespace detail

/// Simulates day by day from `initial` until the rmse reaches zero (when
/// requested) or `max_days` is reached. The observer sees every day, day 1
/// being the initial profile.
inline RunResult run(const Game& game, TimeProfile initial, const DynamicsParams& params,
                     const DayObserver& observer = {}, bool keep_records = false) {
  if (params.max_days < 1) throw ModelError("max_days must be at least 1");
  if (params.max_candidates < 1) throw ModelError("max_candidates must be at least 1");
  if (params.stuck_threshold < 1) throw ModelError("stuck_threshold must be at least 1");
  const Cost target_cost = equilibrium_constants(game.config()).cost;
  DynamicsState state = make_state(game, std::move(initial), params);
  RunResult result;

  const auto emit = [&](const DayRecord& record) {
    if (record.mse.is_zero() && !result.convergence_day) result.convergence_day = record.day;
    if (observer) observer(record, state);
    if (keep_records) result.records.push_back(record);
  };

  DayRecord record = detail::make_record(state, DayEvent::init, StepOutcome{}, target_cost);
  emit(record);
  while (state.day < params.max_days && !(params.stop_at_zero_rmse && record.mse.is_zero())) {
    if (params.kind == DynamicsKind::naive) {
      const StepOutcome step = naive_step(state, game);
      record = detail::make_record(state, step.moved() ? DayEvent::move : DayEvent::no_move, step, target_cost);
    } else {
      record = detail::fixation_day(state, game, params, target_cost);
    }
    emit(record);
  }

  result.converged = record.mse.is_zero();
  result.days = state.day;
  result.final_profile = state.profile;
  result.moves = state.moves;
  result.bound_updates = state.bound_updates;
  result.anomalies = state.anomalies;
  return result;
}

/// P distinct ticks drawn one after another, each uniform over the ticks of
/// [lo, hi] not yet taken. `preset` ticks are taken before drawing.
template <class UniformRng>
std::vector<Tick> draw_distinct_ticks(std::size_t count, Tick lo, Tick hi, UniformRng& rng,
                                      std::vector<Tick> preset = {}) {
  std::vector<Tick> taken = preset;
  std::sort(taken.begin(), taken.end());
  std::vector<Tick> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::int64_t free = free_ticks_between(taken, lo, hi);
    if (free <= 0) throw ModelError("not enough free ticks to place every user");
    std::uniform_int_distribution<std::int64_t> pick(0, free - 1);
    const Tick t = nth_free_tick(taken, lo, pick(rng));
    taken.insert(std::upper_bound(taken.begin(), taken.end(), t), t);
    out.push_back(t);
  }
  return out;
}

/// User 1 at the equilibrium first departure, the others uniform over the
/// remaining ticks from there to the end of the horizon.
template <class UniformRng>
TimeProfile special_initial_profile(const Game& game, UniformRng& rng) {
  const Rational first = equilibrium_constants(game.config()).first_departure;
  const auto tick = game.to_tick(first);
  if (!tick || !game.in_horizon(*tick)) {
    throw ModelError("equilibrium first departure " + first.to_string() + " is not a horizon tick");
  }
  std::vector<Tick> ticks{*tick};
  auto rest = draw_distinct_ticks(game.num_users() - 1, *tick, game.last_tick(), rng, {*tick});
  ticks.insert(ticks.end(), rest.begin(), rest.end());
  return TimeProfile::from_ticks(std::move(ticks));
}

/// Every user uniform over the untaken ticks of the horizon.
template <class UniformRng>
TimeProfile uniform_initial_profile(const Game& game, UniformRng& rng) {
  return TimeProfile::from_ticks(draw_distinct_ticks(game.num_users(), game.first_tick(), game.last_tick(), rng));
}

}  // namespace dtc
