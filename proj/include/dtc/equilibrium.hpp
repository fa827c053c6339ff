#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dtc/model.hpp"
#include "dtc/rational.hpp"

namespace dtc {

/// Closed-form equilibrium quantities, valid for any parameters (no grid
/// requirement).
struct EquilibriumConstants {
  Rational first_departure;  // rush-hour start
  Rational last_departure;   // rush-hour end
  Cost cost;                 // identical for every user
  Cost epsilon;              // m(1+gamma)/mu
  Rational rush_length;      // m(P-1)/mu
  std::int64_t critical_order = 1;  // users arriving no later than 0
};

inline EquilibriumConstants equilibrium_constants(const GameConfig& c) {
  const Rational& beta = c.early_penalty;
  const Rational& gamma = c.late_penalty;
  EquilibriumConstants k;
  k.rush_length = c.user_size * Rational(c.num_users - 1) / c.capacity;
  k.first_departure = -k.rush_length * gamma / (beta + gamma);
  k.last_departure = k.first_departure + k.rush_length;
  k.cost = k.rush_length * beta * gamma / (beta + gamma);
  k.epsilon = c.user_size * (Rational(1) + gamma) / c.capacity;
  k.critical_order = (gamma * Rational(c.num_users - 1) / (beta + gamma)).floor() + 1;
  return k;
}

struct EquilibriumSolution {
  Tick first_departure;
  Tick last_departure;
  Cost equilibrium_cost;
  Cost epsilon;
  std::size_t critical_order = 1;
  /// Departure tick of the user with zero-based rank k.
  std::vector<Tick> departures;

  /// Profile in which user k+1 holds rank k+1.
  [[nodiscard]] TimeProfile profile() const { return TimeProfile::from_ticks(departures); }
};

/// The epsilon-Nash profile with identical trip costs, minimum arrival
/// headway, and free-flowing first and last users.
inline EquilibriumSolution equilibrium_solution(const Game& game) {
  const GameConfig& c = game.config();
  if (auto check = validate_grid(c); !check.ok()) throw GridError(std::move(check.violations));
  const EquilibriumConstants k = equilibrium_constants(c);
  const auto require_tick = [&](const Rational& t) {
    const auto tick = game.to_tick(t);
    if (!tick) throw InvariantViolation("equilibrium time " + t.to_string() + " is off the grid");
    return *tick;
  };

  EquilibriumSolution sol;
  sol.first_departure = require_tick(k.first_departure);
  sol.last_departure = require_tick(k.last_departure);
  sol.equilibrium_cost = k.cost;
  sol.epsilon = k.epsilon;
  sol.critical_order = static_cast<std::size_t>(k.critical_order);
  if (game.num_users() > 1 &&
      (sol.first_departure <= game.first_tick() || sol.last_departure >= game.last_tick())) {
    throw ModelError("horizon S = " + c.horizon.to_string() + " does not strictly contain the rush hour [" +
                     k.first_departure.to_string() + ", " + k.last_departure.to_string() + "]");
  }

  const Rational early_spacing = game.headway() * (Rational(1) - c.early_penalty);
  const Rational late_spacing = game.headway() * (Rational(1) + c.late_penalty);
  const Rational late_offset = game.headway() * c.late_penalty * Rational(c.num_users - 1);
  sol.departures.reserve(game.num_users());
  for (std::size_t rank = 1; rank <= game.num_users(); ++rank) {
    const Rational steps(static_cast<std::int64_t>(rank) - 1);
    const Rational t = rank <= sol.critical_order ? k.first_departure + early_spacing * steps
                                                  : k.first_departure + late_spacing * steps - late_offset;
    sol.departures.push_back(require_tick(t));
  }
  return sol;
}

/// A single-user departure change and what it does to that user's cost.
struct Deviation {
  UserId user = 0;
  Tick from;
  Tick to;
  Cost current;
  Cost deviated;
  [[nodiscard]] Cost improvement() const { return current - deviated; }
};

/// Largest unilateral cost reduction available in a profile. `value` is
/// clamped at zero; `witness` is set only when some deviation strictly helps.
struct ImprovementScan {
  Cost value;
  std::optional<Deviation> witness;
};

namespace detail {

/// Visits every unoccupied tick for every user and reports the mover's
/// realised cost there. Uses FIFO causality: the mover's arrival depends only
/// on the users departing before it, whose arrivals are those of the profile
/// with the mover removed.
template <class Visit>
void scan_unilateral_deviations(const TimeProfile& profile, const Game& game, Visit&& visit) {
  const TripOutcome base = compute_arrivals(profile, game);
  const std::size_t n = base.size();
  const std::int64_t h = game.headway_ticks();
  std::vector<Tick> dep;
  std::vector<Tick> arr;
  dep.reserve(n);
  arr.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const UserId user = base.order[r];
    dep.clear();
    arr.clear();
    for (std::size_t k = 0; k < n; ++k) {
      if (k == r) continue;
      dep.push_back(base.departure[k]);
      arr.push_back(arr.empty() ? dep.back() : std::max(dep.back(), arr.back() + h));
    }
    std::size_t j = 0;
    for (Tick t = game.first_tick(); t <= game.last_tick(); t = t + 1) {
      while (j < dep.size() && dep[j] < t) ++j;
      if ((j < dep.size() && dep[j] == t) || t == base.departure[r]) continue;
      const Tick arrival = j == 0 ? t : std::max(t, arr[j - 1] + h);
      const Cost cost = game.duration(arrival - t) + game.schedule_delay(arrival);
      visit(user, base.departure[r], t, base.trip_cost[r], cost);
    }
  }
}

}  // namespace detail

inline ImprovementScan max_unilateral_improvement(const TimeProfile& profile, const Game& game) {
  ImprovementScan scan{Cost(0), std::nullopt};
  detail::scan_unilateral_deviations(profile, game,
                                     [&](UserId user, Tick from, Tick to, const Cost& current, const Cost& deviated) {
                                       const Cost gain = current - deviated;
                                       if (gain > scan.value) {
                                         scan.value = gain;
                                         scan.witness = Deviation{user, from, to, current, deviated};
                                       }
                                     });
  return scan;
}

struct EpsilonVerdict {
  bool holds = true;
  Cost epsilon;
  Cost max_improvement;
  /// Worst deviation when the condition fails.
  std::optional<Deviation> violation;
};

/// Exhaustive check that no user gains more than epsilon by moving to any
/// unoccupied grid tick.
inline EpsilonVerdict verify_epsilon_nash(const TimeProfile& profile, const Cost& epsilon, const Game& game) {
  const ImprovementScan scan = max_unilateral_improvement(profile, game);
  EpsilonVerdict verdict;
  verdict.epsilon = epsilon;
  verdict.max_improvement = scan.value;
  verdict.holds = scan.value <= epsilon;
  if (!verdict.holds) verdict.violation = scan.witness;
  return verdict;
}

/// Continuum bottleneck equilibrium matched to the atomic game by Q = m(P-1).
struct FluidCorrespondence {
  Rational total_mass;
  Cost fluid_cost;
  Rational fluid_first_departure;
  Rational early_rate;
  Rational late_rate;
};

inline FluidCorrespondence fluid_correspondence(const GameConfig& c) {
  const Rational& beta = c.early_penalty;
  const Rational& gamma = c.late_penalty;
  FluidCorrespondence f;
  f.total_mass = c.user_size * Rational(c.num_users - 1);
  f.fluid_cost = f.total_mass / c.capacity * beta * gamma / (beta + gamma);
  f.fluid_first_departure = -(f.total_mass / c.capacity) * gamma / (beta + gamma);
  f.early_rate = c.capacity / (Rational(1) - beta);
  f.late_rate = c.capacity / (Rational(1) + gamma);
  const EquilibriumConstants k = equilibrium_constants(c);
  if (f.fluid_cost != k.cost || f.fluid_first_departure != k.first_departure) {
    throw InvariantViolation("fluid equilibrium does not match the atomic closed form");
  }
  return f;
}

}  // namespace dtc
