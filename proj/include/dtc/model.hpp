#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dtc/rational.hpp"

namespace dtc {

using Cost = Rational;
/// Zero-based user index. Files and the CLI use one-based ids.
using UserId = std::size_t;

/// A departure or arrival instant, stored as an integer multiple of the grid step.
struct Tick {
  std::int64_t index = 0;

  friend constexpr auto operator<=>(Tick, Tick) noexcept = default;
  friend constexpr Tick operator+(Tick t, std::int64_t steps) noexcept { return {t.index + steps}; }
  friend constexpr Tick operator-(Tick t, std::int64_t steps) noexcept { return {t.index - steps}; }
  friend constexpr std::int64_t operator-(Tick a, Tick b) noexcept { return a.index - b.index; }
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The grid step does not make the required quantities exact multiples.
class GridError : public ModelError {
 public:
  explicit GridError(std::vector<std::string> violations)
      : ModelError(join(violations)), violations_(std::move(violations)) {}
  [[nodiscard]] const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "inadmissible grid step:";
    for (const auto& s : v) out += " [" + s + "]";
    return out;
  }
  std::vector<std::string> violations_;
};

class ProfileError : public ModelError {
 public:
  using ModelError::ModelError;
};

/// An internal consistency check failed; indicates a bug rather than bad input.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct GameConfig {
  std::int64_t num_users = 101;
  Rational user_size = 1;
  Rational capacity = 1;
  Rational early_penalty{1, 2};
  Rational late_penalty = 2;
  Rational grid_step{1, 100};
  Rational horizon = 100;
};

/// Outcome of the grid admissibility check: one message per quantity that is
/// not an integer multiple of the grid step.
struct GridCheck {
  std::vector<std::string> violations;
  [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
};

inline bool is_multiple_of(const Rational& value, const Rational& step) { return (value / step).is_integer(); }

/// Checks that every quantity the closed-form equilibrium lands on is a grid
/// multiple: the first equilibrium departure, both departure spacings, the
/// spacing straddling the desired arrival time, and the headway m/mu.
inline GridCheck validate_grid(const GameConfig& c) {
  GridCheck check;
  if (c.grid_step <= 0 || c.capacity <= 0 || c.num_users < 1) {
    check.violations.emplace_back("grid step, capacity and user count must be positive");
    return check;
  }
  const Rational headway = c.user_size / c.capacity;
  const Rational rush_length = headway * Rational(c.num_users - 1);
  const Rational beta_gamma = c.early_penalty + c.late_penalty;
  const Rational cost = rush_length * c.early_penalty * c.late_penalty / beta_gamma;
  const Rational first_departure_magnitude = cost / c.early_penalty;
  const std::pair<const char*, Rational> quantities[] = {
      {"rho/beta (first equilibrium departure)", first_departure_magnitude},
      {"m(1-beta)/mu (early departure spacing)", headway * (Rational(1) - c.early_penalty)},
      {"m(1+gamma)/mu (late departure spacing)", headway * (Rational(1) + c.late_penalty)},
      {"(beta+gamma)rho/beta (straddling spacing term)", beta_gamma * first_departure_magnitude},
      {"m/mu (headway)", headway},
  };
  for (const auto& [name, value] : quantities) {
    if (!is_multiple_of(value, c.grid_step)) {
      check.violations.push_back(std::string(name) + " = " + value.to_string() +
                                 " is not a multiple of " + c.grid_step.to_string());
    }
  }
  return check;
}

/// Validated game: parameter ranges checked and grid-derived constants cached.
///
/// Construction requires the headway and the horizon to be grid multiples so
/// that every arrival stays on the grid. The full admissibility check is only
/// needed by the closed-form equilibrium.
class Game {
 public:
  explicit Game(GameConfig config) : config_(std::move(config)) {
    const auto& c = config_;
    if (c.num_users < 1) throw ModelError("num_users must be at least 1");
    if (c.user_size <= 0 || c.user_size > 1) throw ModelError("user_size must lie in (0, 1]");
    if (c.capacity <= 0) throw ModelError("capacity must be positive");
    if (c.early_penalty <= 0 || c.early_penalty >= 1) throw ModelError("early_penalty must lie in (0, 1)");
    if (c.late_penalty <= 0) throw ModelError("late_penalty must be positive");
    if (c.grid_step <= 0) throw ModelError("grid_step must be positive");
    if (c.horizon <= 0) throw ModelError("horizon must be positive");
    headway_ = c.user_size / c.capacity;
    if (!is_multiple_of(headway_, c.grid_step)) {
      throw GridError({"m/mu (headway) = " + headway_.to_string() + " is not a multiple of " +
                       c.grid_step.to_string()});
    }
    if (!is_multiple_of(c.horizon, c.grid_step)) {
      throw GridError({"horizon S = " + c.horizon.to_string() + " is not a multiple of " +
                       c.grid_step.to_string()});
    }
    headway_ticks_ = (headway_ / c.grid_step).num();
    horizon_ticks_ = (c.horizon / c.grid_step).num();
    early_per_tick_ = c.early_penalty * c.grid_step;
    late_per_tick_ = c.late_penalty * c.grid_step;
  }

  [[nodiscard]] const GameConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t num_users() const noexcept { return static_cast<std::size_t>(config_.num_users); }
  [[nodiscard]] const Rational& grid_step() const noexcept { return config_.grid_step; }
  [[nodiscard]] const Rational& headway() const noexcept { return headway_; }
  [[nodiscard]] std::int64_t headway_ticks() const noexcept { return headway_ticks_; }
  [[nodiscard]] std::int64_t horizon_ticks() const noexcept { return horizon_ticks_; }
  [[nodiscard]] Tick first_tick() const noexcept { return {-horizon_ticks_}; }
  [[nodiscard]] Tick last_tick() const noexcept { return {horizon_ticks_}; }
  [[nodiscard]] std::int64_t tick_count() const noexcept { return 2 * horizon_ticks_ + 1; }
  [[nodiscard]] bool in_horizon(Tick t) const noexcept {
    return t.index >= -horizon_ticks_ && t.index <= horizon_ticks_;
  }

  [[nodiscard]] Rational time(Tick t) const { return config_.grid_step * Rational(t.index); }
  /// Length of `ticks` grid steps, in time (and cost) units.
  [[nodiscard]] Rational duration(std::int64_t ticks) const { return config_.grid_step * Rational(ticks); }

  /// The tick representing `time`, or nullopt when it is off the grid.
  [[nodiscard]] std::optional<Tick> to_tick(const Rational& time) const {
    const Rational q = time / config_.grid_step;
    if (!q.is_integer()) return std::nullopt;
    return Tick{q.num()};
  }

  [[nodiscard]] Cost schedule_delay(Tick arrival) const {
    if (arrival.index < 0) return early_per_tick_ * Rational(-arrival.index);
    return late_per_tick_ * Rational(arrival.index);
  }

 private:
  GameConfig config_;
  Rational headway_;
  std::int64_t headway_ticks_ = 0;
  std::int64_t horizon_ticks_ = 0;
  Rational early_per_tick_;
  Rational late_per_tick_;
};

/// V(d) = beta*max(-d, 0) + gamma*max(d, 0), desired arrival time 0.
inline Cost schedule_delay(Tick arrival, const Game& game) { return game.schedule_delay(arrival); }

/// Schedule delay at an arbitrary (possibly off-grid) time.
inline Cost schedule_delay_at(const Rational& time, const GameConfig& c) {
  if (time < 0) return c.early_penalty * (-time);
  return c.late_penalty * time;
}

/// Strategy profile: one departure tick per user, all distinct.
class TimeProfile {
 public:
  TimeProfile() = default;

  static TimeProfile from_ticks(std::vector<Tick> departures) {
    std::vector<Tick> sorted = departures;
    std::sort(sorted.begin(), sorted.end());
    if (auto dup = std::adjacent_find(sorted.begin(), sorted.end()); dup != sorted.end()) {
      const auto first = static_cast<std::size_t>(std::find(departures.begin(), departures.end(), *dup) - departures.begin());
      const auto second = static_cast<std::size_t>(
          std::find(departures.begin() + static_cast<std::ptrdiff_t>(first) + 1, departures.end(), *dup) -
          departures.begin());
      throw ProfileError("users " + std::to_string(first + 1) + " and " + std::to_string(second + 1) +
                         " share departure tick " + std::to_string(dup->index));
    }
    TimeProfile p;
    p.departures_ = std::move(departures);
    return p;
  }

  [[nodiscard]] std::size_t size() const noexcept { return departures_.size(); }
  [[nodiscard]] Tick departure(UserId user) const { return departures_.at(user); }
  [[nodiscard]] std::span<const Tick> departures() const noexcept { return departures_; }

  /// Users sorted by departure tick; position k holds the user with rank k+1.
  [[nodiscard]] std::vector<UserId> order() const {
    std::vector<UserId> users(departures_.size());
    std::iota(users.begin(), users.end(), UserId{0});
    std::sort(users.begin(), users.end(), [&](UserId a, UserId b) { return departures_[a] < departures_[b]; });
    return users;
  }

  [[nodiscard]] bool occupied(Tick t) const noexcept {
    return std::find(departures_.begin(), departures_.end(), t) != departures_.end();
  }

  /// Moves one user. Throws when another user already departs at `to`.
  void move(UserId user, Tick to) {
    if (departures_.at(user) == to) return;
    if (occupied(to)) {
      throw ProfileError("tick " + std::to_string(to.index) + " is already occupied");
    }
    departures_[user] = to;
  }

  [[nodiscard]] TimeProfile with_departure(UserId user, Tick to) const {
    TimeProfile copy = *this;
    copy.move(user, to);
    return copy;
  }

  friend bool operator==(const TimeProfile&, const TimeProfile&) = default;

 private:
  std::vector<Tick> departures_;
};

/// Per-user view of a trip outcome.
struct UserOutcome {
  std::size_t order = 0;  // one-based departure rank
  Tick departure;
  Tick arrival;
  Rational queue_delay;
  Cost schedule_delay;
  Cost trip_cost;
};

/// Arrivals and costs of a profile. Vectors are indexed by zero-based
/// departure rank; `order` maps ranks to users and `rank` maps back.
struct TripOutcome {
  std::vector<UserId> order;
  std::vector<std::size_t> rank;
  std::vector<Tick> departure;
  std::vector<Tick> arrival;
  std::vector<Rational> queue_delay;
  std::vector<Cost> schedule_delay;
  std::vector<Cost> trip_cost;

  [[nodiscard]] std::size_t size() const noexcept { return order.size(); }

  [[nodiscard]] UserOutcome user(UserId u) const {
    const std::size_t k = rank.at(u);
    return {k + 1, departure[k], arrival[k], queue_delay[k], schedule_delay[k], trip_cost[k]};
  }
  [[nodiscard]] const Cost& cost_of(UserId u) const { return trip_cost[rank.at(u)]; }

  /// Number of departures strictly earlier than `t`.
  [[nodiscard]] std::size_t count_before(Tick t) const {
    return static_cast<std::size_t>(std::lower_bound(departure.begin(), departure.end(), t) - departure.begin());
  }
  [[nodiscard]] bool occupied(Tick t) const {
    const auto it = std::lower_bound(departure.begin(), departure.end(), t);
    return it != departure.end() && *it == t;
  }
};

/// Bottleneck arrivals: in departure order each user arrives at
/// max(previous arrival + m/mu, own departure); the first user free-flows.
inline TripOutcome compute_arrivals(const TimeProfile& profile, const Game& game) {
  const std::size_t n = profile.size();
  if (n != game.num_users()) {
    throw ProfileError("profile has " + std::to_string(n) + " users, game expects " +
                       std::to_string(game.num_users()));
  }
  TripOutcome out;
  out.order = profile.order();
  out.rank.resize(n);
  out.departure.resize(n);
  out.arrival.resize(n);
  out.queue_delay.resize(n);
  out.schedule_delay.resize(n);
  out.trip_cost.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const UserId u = out.order[k];
    out.rank[u] = k;
    out.departure[k] = profile.departure(u);
    if (k > 0 && out.departure[k] == out.departure[k - 1]) {
      throw ProfileError("duplicate departure tick " + std::to_string(out.departure[k].index));
    }
    out.arrival[k] = k == 0 ? out.departure[k]
                            : std::max(out.departure[k], out.arrival[k - 1] + game.headway_ticks());
    out.queue_delay[k] = game.duration(out.arrival[k] - out.departure[k]);
    out.schedule_delay[k] = game.schedule_delay(out.arrival[k]);
    out.trip_cost[k] = out.queue_delay[k] + out.schedule_delay[k];
  }
  return out;
}

/// Builds a profile from one-based (user, time) pairs covering every user once.
inline TimeProfile profile_from_departures(const std::vector<std::pair<std::size_t, Rational>>& entries,
                                           const Game& game) {
  const std::size_t n = game.num_users();
  if (entries.size() != n) {
    throw ProfileError("expected " + std::to_string(n) + " departures, got " + std::to_string(entries.size()));
  }
  std::vector<std::optional<Tick>> ticks(n);
  for (const auto& [user, time] : entries) {
    if (user < 1 || user > n) throw ProfileError("user id " + std::to_string(user) + " out of range");
    if (ticks[user - 1]) throw ProfileError("user " + std::to_string(user) + " listed twice");
    const auto tick = game.to_tick(time);
    if (!tick) {
      const std::int64_t below = (time / game.grid_step()).floor();
      throw ProfileError("user " + std::to_string(user) + " departs at " + time.to_string() +
                         ", which is off the grid; nearest ticks are " + game.time(Tick{below}).to_string() +
                         " and " + game.time(Tick{below + 1}).to_string());
    }
    if (!game.in_horizon(*tick)) {
      throw ProfileError("user " + std::to_string(user) + " departs at " + time.to_string() +
                         ", outside [-S, S]");
    }
    for (std::size_t other = 0; other < n; ++other) {
      if (ticks[other] && *ticks[other] == *tick) {
        throw ProfileError("users " + std::to_string(other + 1) + " and " + std::to_string(user) +
                           " both depart at " + time.to_string());
      }
    }
    ticks[user - 1] = *tick;
  }
  std::vector<Tick> departures;
  departures.reserve(n);
  for (const auto& t : ticks) departures.push_back(*t);
  return TimeProfile::from_ticks(std::move(departures));
}

}  // namespace dtc
