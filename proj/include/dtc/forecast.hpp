#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "dtc/model.hpp"

namespace dtc {

enum class SegmentKind {
  congested_interpolation,  // linear between two (departure, cost) anchors
  free_flow_schedule,       // queue has dissipated: forecast is V(s')
  outside_rush,             // before the first departure or from the last arrival on
};

constexpr std::string_view to_string(SegmentKind k) noexcept {
  switch (k) {
    case SegmentKind::congested_interpolation: return "congested-interpolation";
    case SegmentKind::free_flow_schedule: return "free-flow-schedule";
    case SegmentKind::outside_rush: return "outside-rush";
  }
  return "?";
}

/// A maximal run of unoccupied ticks sharing one forecast formula.
struct ForecastSegment {
  Tick first;  // inclusive
  Tick last;   // inclusive
  SegmentKind kind = SegmentKind::outside_rush;
  Tick anchor_a;
  Cost cost_a;
  Tick anchor_b;
  Cost cost_b;

  [[nodiscard]] Cost evaluate(Tick t, const Game& game) const {
    if (kind != SegmentKind::congested_interpolation) return game.schedule_delay(t);
    return cost_a + (cost_b - cost_a) * Rational(t - anchor_a, anchor_b - anchor_a);
  }
};

namespace detail {

inline ForecastSegment schedule_segment(Tick first, Tick last, SegmentKind kind) {
  ForecastSegment s;
  s.first = first;
  s.last = last;
  s.kind = kind;
  return s;
}

inline ForecastSegment interpolation_segment(Tick first, Tick last, Tick a, Cost ca, Tick b, Cost cb) {
  return {first, last, SegmentKind::congested_interpolation, a, std::move(ca), b, std::move(cb)};
}

/// Segments of the open interval after the user with zero-based rank k.
template <class Emit>
void bracket_segments(const TripOutcome& o, std::size_t k, const Game& game, Emit&& emit) {
  const std::size_t n = o.size();
  const Tick s_k = o.departure[k];
  const Tick d_k = o.arrival[k];
  if (k + 1 < n) {
    const Tick s_next = o.departure[k + 1];
    if (s_next - s_k < 2) return;
    if (o.arrival[k + 1] - d_k == game.headway_ticks()) {
      emit(interpolation_segment(s_k + 1, s_next - 1, s_k, o.trip_cost[k], s_next, o.trip_cost[k + 1]));
      return;
    }
    if (d_k > s_k) {
      emit(interpolation_segment(s_k + 1, d_k, s_k, o.trip_cost[k], d_k, game.schedule_delay(d_k)));
    }
    if (s_next - d_k >= 2) emit(schedule_segment(d_k + 1, s_next - 1, SegmentKind::free_flow_schedule));
    return;
  }
  // Last user: queue tail up to (excluding) its arrival, then V from d_P on.
  if (d_k - s_k >= 2) {
    emit(interpolation_segment(s_k + 1, d_k - 1, s_k, o.trip_cost[k], d_k, game.schedule_delay(d_k)));
  }
  emit(schedule_segment(std::max(d_k, s_k + 1), game.last_tick(), SegmentKind::outside_rush));
}

}  // namespace detail

/// Partition of the unoccupied horizon ticks into forecast segments, in time order.
inline std::vector<ForecastSegment> forecast_segments(const TripOutcome& outcome, const Game& game) {
  std::vector<ForecastSegment> out;
  const auto emit = [&](ForecastSegment s) {
    s.first = std::max(s.first, game.first_tick());
    s.last = std::min(s.last, game.last_tick());
    if (s.first <= s.last) out.push_back(std::move(s));
  };
  if (outcome.size() == 0) {
    emit(detail::schedule_segment(game.first_tick(), game.last_tick(), SegmentKind::outside_rush));
    return out;
  }
  emit(detail::schedule_segment(game.first_tick(), outcome.departure.front() - 1, SegmentKind::outside_rush));
  for (std::size_t k = 0; k < outcome.size(); ++k) detail::bracket_segments(outcome, k, game, emit);
  return out;
}

/// The segment containing unoccupied tick `t`.
inline ForecastSegment locate_segment(const TripOutcome& outcome, Tick t, const Game& game) {
  if (!game.in_horizon(t)) throw ProfileError("tick " + std::to_string(t.index) + " is outside [-S, S]");
  if (outcome.occupied(t)) {
    throw ProfileError("tick " + std::to_string(t.index) + " is occupied; forecasts are defined for free ticks only");
  }
  const std::size_t before = outcome.count_before(t);
  if (before == 0) return detail::schedule_segment(game.first_tick(), outcome.departure.front() - 1, SegmentKind::outside_rush);
  std::optional<ForecastSegment> found;
  detail::bracket_segments(outcome, before - 1, game, [&](ForecastSegment s) {
    if (s.first <= t && t <= s.last) found = std::move(s);
  });
  if (!found) throw InvariantViolation("forecast segments do not cover tick " + std::to_string(t.index));
  return *found;
}

/// Forecasted trip cost for departing at the unoccupied tick `t`.
inline Cost forecasted_cost(const TripOutcome& outcome, Tick t, const Game& game) {
  return locate_segment(outcome, t, game).evaluate(t, game);
}

inline Cost forecasted_cost(const TimeProfile& profile, Tick t, const Game& game) {
  return forecasted_cost(compute_arrivals(profile, game), t, game);
}

/// Every unoccupied tick (not earlier than `earliest`, when given) whose
/// forecast is strictly below the user's current trip cost.
inline std::vector<Tick> better_response_set(const TripOutcome& outcome, UserId user, const Game& game,
                                             std::optional<Tick> earliest = std::nullopt) {
  const Cost& current = outcome.cost_of(user);
  std::vector<Tick> out;
  for (const auto& seg : forecast_segments(outcome, game)) {
    for (Tick t = earliest ? std::max(seg.first, *earliest) : seg.first; t <= seg.last; t = t + 1) {
      if (seg.evaluate(t, game) < current) out.push_back(t);
    }
  }
  return out;
}

/// Smallest forecast over the unoccupied ticks, if any tick is free.
inline std::optional<Cost> min_forecast(const TripOutcome& outcome, const Game& game) {
  std::optional<Cost> best;
  for (const auto& seg : forecast_segments(outcome, game)) {
    // Interpolations and V are piecewise linear with a kink only at 0, so the
    // minimum over a segment sits at an end or at tick 0.
    for (Tick t : {seg.first, seg.last, Tick{0}}) {
      if (t < seg.first || t > seg.last) continue;
      Cost c = seg.evaluate(t, game);
      if (!best || c < *best) best = std::move(c);
    }
  }
  return best;
}

/// True when no user has a better response anywhere on the grid. Forecasts do
/// not depend on who moves, so this compares the largest current cost with
/// the smallest forecast.
inline bool is_stationary(const TripOutcome& outcome, const Game& game) {
  const auto lowest = min_forecast(outcome, game);
  if (!lowest) return true;
  const Cost highest = *std::max_element(outcome.trip_cost.begin(), outcome.trip_cost.end());
  return !(*lowest < highest);
}

inline bool is_stationary(const TimeProfile& profile, const Game& game) {
  return is_stationary(compute_arrivals(profile, game), game);
}

/// Number of ticks in [lo, hi] absent from the sorted list `taken`.
inline std::int64_t free_ticks_between(std::span<const Tick> taken, Tick lo, Tick hi) {
  if (hi < lo) return 0;
  const auto first = std::lower_bound(taken.begin(), taken.end(), lo);
  const auto last = std::upper_bound(taken.begin(), taken.end(), hi);
  return (hi - lo + 1) - (last - first);
}

/// The `index`-th (zero-based) tick at or after `lo` absent from the sorted list `taken`.
inline Tick nth_free_tick(std::span<const Tick> taken, Tick lo, std::int64_t index) {
  Tick candidate = lo + index;
  for (auto it = std::lower_bound(taken.begin(), taken.end(), lo); it != taken.end() && *it <= candidate; ++it) {
    candidate = candidate + 1;
  }
  return candidate;
}

struct SamplingOptions {
  int max_candidates = 100;
  /// Earliest tick a candidate may take.
  std::optional<Tick> earliest;
  /// Tick tried before any random draw.
  std::optional<Tick> reference;
};

/// Randomised better-response search: the reference tick first, then up to
/// `max_candidates` uniform draws over the allowed unoccupied ticks. Returns
/// the first strict improvement found.
template <class Rng>
std::optional<Tick> sample_better_response(const TripOutcome& outcome, UserId user, const Game& game, Rng& rng,
                                           const SamplingOptions& options) {
  const Cost& current = outcome.cost_of(user);
  const Tick lo = options.earliest ? std::max(*options.earliest, game.first_tick()) : game.first_tick();
  const Tick hi = game.last_tick();
  if (const auto& ref = options.reference;
      ref && *ref >= lo && *ref <= hi && !outcome.occupied(*ref) && forecasted_cost(outcome, *ref, game) < current) {
    return *ref;
  }
  const std::int64_t free = free_ticks_between(outcome.departure, lo, hi);
  if (free <= 0) return std::nullopt;
  std::uniform_int_distribution<std::int64_t> pick(0, free - 1);
  for (int i = 0; i < options.max_candidates; ++i) {
    const Tick t = nth_free_tick(outcome.departure, lo, pick(rng));
    if (forecasted_cost(outcome, t, game) < current) return t;
  }
  return std::nullopt;
}

}  // namespace dtc
