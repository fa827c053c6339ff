#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "dtc/dynamics.hpp"
#include "dtc/equilibrium.hpp"
#include "oracles.hpp"

using dtc::DynamicsKind;
using dtc::DynamicsParams;
using dtc::EventualKind;
using dtc::Game;
using dtc::GameConfig;
using dtc::Rational;
using dtc::Tick;
using dtc::TimeProfile;

namespace {

/// Profile whose costs all equal the first user's schedule delay, arrivals a
/// headway apart, starting from `first`.
TimeProfile equal_cost_from(const Game& game, const Rational& first) {
  const auto& c = game.config();
  const Rational cost = dtc::schedule_delay_at(first, c);
  std::vector<Tick> ticks;
  for (std::int64_t k = 0; k < c.num_users; ++k) {
    const Rational arrival = first + game.headway() * Rational(k);
    ticks.push_back(*game.to_tick(arrival + dtc::schedule_delay_at(arrival, c) - cost));
  }
  return TimeProfile::from_ticks(ticks);
}

DynamicsParams desk_params(std::uint64_t seed) {
  DynamicsParams p;
  p.seed = seed;
  p.stuck_threshold = 2000;
  return p;
}

}  // namespace

TEST_CASE("mean squared error and rmse", "[dynamics]") {
  dtc::TripOutcome o;
  o.trip_cost = {Rational(41), Rational(39)};
  o.order = {0, 1};
  CHECK(dtc::mean_squared_error(o, Rational(40)) == Rational(1));
  CHECK(dtc::rmse_from_mse(Rational(1)) == 1.0);
  CHECK(dtc::rmse_from_mse(Rational(0)) == 0.0);
  const Game game(oracle::reference_config());
  CHECK(dtc::rmse(dtc::equilibrium_solution(game).profile(), game) == 0.0);
}

TEST_CASE("reference departure time", "[dynamics]") {
  GameConfig c;
  c.num_users = 2;
  const Game game(c);
  SECTION("the queued follower pays exactly the reference cost") {
    const auto o = dtc::compute_arrivals(TimeProfile::from_ticks({*game.to_tick(-42), *game.to_tick(10)}), game);
    const Rational reference = o.trip_cost[0];
    CHECK(reference == Rational(21));
    const auto t = dtc::reference_departure_time(o, 1, reference, game);
    REQUIRE(t);
    CHECK(game.time(*t) == Rational(-83, 2));
    const auto moved = dtc::compute_arrivals(TimeProfile::from_ticks({*game.to_tick(-42), *t}), game);
    CHECK(moved.queue_delay[1] == Rational(1, 2));
    CHECK(moved.schedule_delay[1] == Rational(41, 2));
    CHECK(moved.trip_cost[1] == reference);
  }
  SECTION("a time before the predecessor's departure is not offered") {
    const auto o = dtc::compute_arrivals(TimeProfile::from_ticks({*game.to_tick(-2), *game.to_tick(10)}), game);
    // -1 + 1/2 - 40 = -81/2 lies before the predecessor at -2.
    CHECK_FALSE(dtc::reference_departure_time(o, 1, Rational(40), game));
  }
  SECTION("unreachable reference cost") {
    const auto o = dtc::compute_arrivals(TimeProfile::from_ticks({*game.to_tick(-2), *game.to_tick(10)}), game);
    CHECK_FALSE(dtc::reference_departure_time(o, 1, Rational(1, 4), game));
  }
}

TEST_CASE("reference departures along the equilibrium are the equilibrium departures", "[dynamics]") {
  const Game game(oracle::reference_config());
  const auto sol = dtc::equilibrium_solution(game);
  const auto o = dtc::compute_arrivals(sol.profile(), game);
  for (std::size_t n = 1; n < o.size(); ++n) {
    REQUIRE(dtc::reference_departure_time(o, n, sol.equilibrium_cost, game) == sol.departures[n]);
  }
}

TEST_CASE("prefix extension needs equal cost and exact headway", "[dynamics]") {
  const Game game(oracle::desk_config());
  const auto sol = dtc::equilibrium_solution(game);
  const auto o = dtc::compute_arrivals(sol.profile(), game);
  CHECK(dtc::extend_prefix(o, sol.equilibrium_cost, 0, game) == game.num_users());
  CHECK(dtc::extend_prefix(o, sol.equilibrium_cost + Rational(1), 0, game) == 0);
  auto shifted = sol.profile();
  shifted.move(5, sol.departures[5] + 3);
  const auto broken = dtc::compute_arrivals(shifted, game);
  CHECK(dtc::extend_prefix(broken, sol.equilibrium_cost, 0, game) == 5);
}

TEST_CASE("eventual profile classification", "[dynamics]") {
  const Game game(oracle::desk_config());
  SECTION("equal costs with a queued last user means the start was too early") {
    auto state = dtc::make_state(game, equal_cost_from(game, -17), desk_params(1));
    REQUIRE(state.mode == dtc::DynamicsMode::fixation);
    CHECK(state.fixed_prefix == game.num_users());
    CHECK(state.outcome.queue_delay.back() > Rational(0));
    const auto c = dtc::classify_eventual_profile(state, game);
    CHECK(c.kind == EventualKind::too_early);
    CHECK(c.definitive);
  }
  SECTION("the equilibrium is converged") {
    const auto state = dtc::make_state(game, dtc::equilibrium_solution(game).profile(), desk_params(1));
    CHECK(dtc::classify_eventual_profile(state, game).kind == EventualKind::converged);
  }
  SECTION("a late start ends stuck with every unequal cost above the reference") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      std::mt19937_64 rng(seed);
      std::vector<Tick> ticks{*game.to_tick(-15)};
      const auto rest = oracle::random_profile(game.num_users() - 1, *game.to_tick(-15) + 1, game.last_tick(), rng);
      for (auto t : rest.departures()) ticks.push_back(t);
      bool diagnosed = false;
      const auto observer = [&](const dtc::DayRecord& r, const dtc::DynamicsState& s) {
        if (diagnosed || !r.diagnosis) return;
        diagnosed = true;
        CHECK(r.diagnosis->kind == EventualKind::too_late);
        for (const auto& cost : s.outcome.trip_cost) CHECK(cost >= s.reference_cost);
      };
      DynamicsParams p = desk_params(seed);
      p.max_days = 200'000;
      p.stop_at_zero_rmse = true;
      dtc::run(game, TimeProfile::from_ticks(ticks), p, observer);
      CHECK(diagnosed);
    }
  }
}

TEST_CASE("bound adjustment", "[dynamics]") {
  const Game game(oracle::desk_config());
  SECTION("too early raises the lower bound and releases everyone") {
    auto state = dtc::make_state(game, equal_cost_from(game, -17), desk_params(1));
    dtc::adjust_bounds_and_release(state, {EventualKind::too_early, true, ""}, game);
    CHECK(state.lower_bound == *game.to_tick(-17));
    CHECK(state.upper_bound == game.last_tick());
    CHECK(state.mode == dtc::DynamicsMode::free);
    CHECK(state.fixed_prefix == 0);
    CHECK(state.bound_updates == 1);
  }
  SECTION("a bracket that would exclude the equilibrium first departure is an invariant breach") {
    auto state = dtc::make_state(game, equal_cost_from(game, -17), desk_params(1));
    CHECK_THROWS_AS(dtc::adjust_bounds_and_release(state, {EventualKind::too_late, false, ""}, game),
                    dtc::InvariantViolation);
  }
  SECTION("only directional verdicts adjust bounds") {
    auto state = dtc::make_state(game, equal_cost_from(game, -17), desk_params(1));
    CHECK_THROWS_AS(dtc::adjust_bounds_and_release(state, {EventualKind::converged, true, ""}, game),
                    dtc::InvariantViolation);
  }
}

TEST_CASE("fixation starts only strictly inside the bounds", "[dynamics]") {
  const Game game(oracle::desk_config());
  DynamicsParams p = desk_params(1);
  p.lower_bound = *game.to_tick(-17);
  CHECK(dtc::make_state(game, equal_cost_from(game, -17), p).mode == dtc::DynamicsMode::free);
  p.lower_bound.reset();
  CHECK(dtc::make_state(game, equal_cost_from(game, -17), p).mode == dtc::DynamicsMode::fixation);
  p.lower_bound = Tick{5};
  p.upper_bound = Tick{5};
  CHECK_THROWS_AS(dtc::make_state(game, equal_cost_from(game, -17), p), dtc::ModelError);
}

TEST_CASE("the equilibrium is a rest point of both dynamics", "[dynamics][reference]") {
  const Game game(oracle::reference_config());
  const auto sol = dtc::equilibrium_solution(game);
  for (auto kind : {DynamicsKind::naive, DynamicsKind::fixation}) {
    DynamicsParams p;
    p.kind = kind;
    p.max_days = 500;
    p.stop_at_zero_rmse = false;
    const auto r = dtc::run(game, sol.profile(), p, {}, true);
    CHECK(r.moves == 0);
    CHECK(r.converged);
    CHECK(r.convergence_day == 1);
    CHECK(r.final_profile == sol.profile());
    for (const auto& rec : r.records) REQUIRE(rec.mse.is_zero());
  }
  auto state = dtc::make_state(game, sol.profile(), DynamicsParams{});
  for (int i = 0; i < 2000; ++i) REQUIRE_FALSE(dtc::naive_step(state, game).moved());
}

TEST_CASE("a lone user reaches the desired arrival time", "[dynamics]") {
  GameConfig c;
  c.num_users = 1;
  const Game game(c);
  auto state = dtc::make_state(game, TimeProfile::from_ticks({*game.to_tick(40)}), DynamicsParams{});
  dtc::StepOutcome step;
  while (!step.moved()) step = dtc::naive_step(state, game);
  CHECK(game.schedule_delay(*step.to) < Rational(80));
  DynamicsParams p;
  p.kind = DynamicsKind::naive;
  const auto r = dtc::run(game, TimeProfile::from_ticks({*game.to_tick(40)}), p);
  CHECK(r.converged);
  CHECK(r.final_profile.departure(0) == Tick{0});
}

TEST_CASE("special regime converges with the prefix held fixed", "[dynamics][property]") {
  const Game game(oracle::desk_config());
  const auto sol = dtc::equilibrium_solution(game);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto rng = dtc::make_rng(seed, 0);
    const auto initial = dtc::special_initial_profile(game, rng);
    std::vector<Tick> prefix;
    std::int64_t last_bound_updates = 0;
    std::vector<double> rmse;
    const auto observer = [&](const dtc::DayRecord& r, const dtc::DynamicsState& s) {
      rmse.push_back(r.rmse);
      if (s.mode == dtc::DynamicsMode::fixation && s.bound_updates == last_bound_updates) {
        for (std::size_t k = 0; k < std::min(prefix.size(), s.fixed_prefix); ++k) {
          REQUIRE(s.outcome.departure[k] == prefix[k]);
        }
      }
      last_bound_updates = s.bound_updates;
      prefix.assign(s.outcome.departure.begin(),
                    s.outcome.departure.begin() + static_cast<std::ptrdiff_t>(r.fixed_prefix));
    };
    const auto r = dtc::run(game, initial, desk_params(seed), observer);
    REQUIRE(r.converged);
    CHECK(r.bound_updates == 0);
    CHECK(r.final_profile.order().size() == game.num_users());
    CHECK(dtc::compute_arrivals(r.final_profile, game).departure == sol.departures);
    for (std::size_t i = 0; i + 1 < rmse.size(); ++i) REQUIRE(rmse[i] > 0.0);
    CHECK(rmse.back() == 0.0);
  }
}

TEST_CASE("general regime keeps the equilibrium first departure bracketed", "[dynamics][property]") {
  const Game game(oracle::desk_config());
  const Rational target = dtc::equilibrium_constants(game.config()).first_departure;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto rng = dtc::make_rng(seed, 0);
    const auto observer = [&](const dtc::DayRecord& r, const dtc::DynamicsState&) {
      REQUIRE(game.time(r.lower_bound) <= target);
      REQUIRE(target <= game.time(r.upper_bound));
    };
    const auto r = dtc::run(game, dtc::uniform_initial_profile(game, rng), desk_params(seed), observer);
    CHECK(r.converged);
  }
}

TEST_CASE("replaying a seed reproduces the run", "[dynamics]") {
  const Game game(oracle::desk_config());
  const auto once = [&] {
    auto rng = dtc::make_rng(4, 0);
    return dtc::run(game, dtc::uniform_initial_profile(game, rng), desk_params(4), {}, true);
  };
  const auto a = once();
  const auto b = once();
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    REQUIRE(a.records[i].event == b.records[i].event);
    REQUIRE(a.records[i].mover == b.records[i].mover);
    REQUIRE(a.records[i].to == b.records[i].to);
    REQUIRE(a.records[i].mse == b.records[i].mse);
  }
  CHECK(a.final_profile == b.final_profile);
}

TEST_CASE("initial profiles", "[dynamics]") {
  const Game game(oracle::reference_config());
  auto rng = dtc::make_rng(1, 0);
  const auto special = dtc::special_initial_profile(game, rng);
  CHECK(special.departure(0) == *game.to_tick(-80));
  for (auto t : special.departures()) {
    CHECK(t >= *game.to_tick(-80));
    CHECK(t <= game.last_tick());
  }
  const auto uniform = dtc::uniform_initial_profile(game, rng);
  CHECK(uniform.size() == 101);
  auto again = dtc::make_rng(1, 0);
  CHECK(dtc::special_initial_profile(game, again) == special);
  CHECK_THROWS_AS(dtc::draw_distinct_ticks(5, Tick{0}, Tick{3}, rng), dtc::ModelError);
}

TEST_CASE("run parameters are validated", "[dynamics]") {
  const Game game(oracle::desk_config());
  const auto p0 = dtc::equilibrium_solution(game).profile();
  DynamicsParams p;
  p.max_days = 0;
  CHECK_THROWS_AS(dtc::run(game, p0, p), dtc::ModelError);
  p = DynamicsParams{};
  p.max_candidates = 0;
  CHECK_THROWS_AS(dtc::run(game, p0, p), dtc::ModelError);
  p = DynamicsParams{};
  p.stuck_threshold = 0;
  CHECK_THROWS_AS(dtc::run(game, p0, p), dtc::ModelError);
}
