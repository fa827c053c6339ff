// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Set DTC_SKIP_FULL_SCALE=1 to leave out the full-scale general-regime run.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dtc/dtc.hpp"
#include "oracles.hpp"

namespace {

using dtc::Game;
using dtc::GameConfig;
using dtc::Rational;
using dtc::Tick;
using dtc::TimeProfile;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string str(const Rational& r) { return r.to_string(); }

Verdict closed_form_constants() {
  const GameConfig c = oracle::reference_config();
  const auto k = dtc::equilibrium_constants(c);
  const auto f = dtc::fluid_correspondence(c);
  const bool ok = k.epsilon == Rational(3) && k.cost == Rational(40) && k.first_departure == Rational(-80) &&
                  k.last_departure == Rational(20) && k.critical_order == 81 && f.early_rate == Rational(2) &&
                  f.late_rate == Rational(1, 3);
  return {ok, "epsilon=" + str(k.epsilon) + " cost=" + str(k.cost) + " first=" + str(k.first_departure) +
                  " last=" + str(k.last_departure) + " critical_order=" + std::to_string(k.critical_order) +
                  " early_rate=" + str(f.early_rate) + " late_rate=" + str(f.late_rate)};
}

Verdict epsilon_nash_full_scale() {
  const Game game(oracle::reference_config());
  const auto profile = dtc::equilibrium_solution(game).profile();
  const auto verdict = dtc::verify_epsilon_nash(profile, Rational(3), game);
  const auto scan = dtc::max_unilateral_improvement(profile, game);
  return {verdict.holds && scan.value < Rational(3),
          "max improvement " + str(scan.value) + " over 101 users x " + std::to_string(game.tick_count()) + " ticks"};
}

Verdict stationarity() {
  const Game game(oracle::reference_config());
  const auto profile = dtc::equilibrium_solution(game).profile();
  const bool stationary = dtc::is_stationary(profile, game);
  auto state = dtc::make_state(game, profile, dtc::DynamicsParams{});
  int moves = 0;
  for (int i = 0; i < 10'000; ++i) moves += dtc::naive_step(state, game).moved();
  return {stationary && moves == 0,
          std::string("stationary=") + (stationary ? "true" : "false") + ", moves in 10000 draws=" +
              std::to_string(moves)};
}

Verdict special_regime() {
  const Game game(oracle::reference_config());
  const auto sol = dtc::equilibrium_solution(game);
  std::ostringstream expected;
  dtc::write_snapshot(expected, dtc::compute_arrivals(sol.profile(), game), game);
  const auto strip_user = [](const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    std::string out;
    while (std::getline(in, line)) {
      auto cells = dtc::detail::split(line, ',');
      cells.erase(cells.begin() + 1);
      for (const auto& c : cells) out += c + ',';
      out += '\n';
    }
    return out;
  };
  const std::string reference = strip_user(expected.str());
  int converged = 0;
  std::int64_t worst = 0;
  std::string days;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto rng = dtc::make_rng(seed, 0);
    dtc::DynamicsParams p;
    p.seed = seed;
    p.max_days = 5000;
    const auto r = dtc::run(game, dtc::special_initial_profile(game, rng), p);
    std::ostringstream final_snapshot;
    dtc::write_snapshot(final_snapshot, dtc::compute_arrivals(r.final_profile, game), game);
    const bool same = strip_user(final_snapshot.str()) == reference;
    converged += r.converged && same;
    worst = std::max(worst, r.days);
    days += (days.empty() ? "" : ",") + std::to_string(r.days);
  }
  return {converged == 10, std::to_string(converged) + "/10 seeds reached rmse 0 with the equilibrium snapshot; days " +
                               days + " (max " + std::to_string(worst) + ")"};
}

struct GeneralRun {
  bool converged = false;
  bool bracketed = true;
  std::int64_t days = 0;
  std::int64_t bound_updates = 0;
};

GeneralRun general_run(const GameConfig& c, std::uint64_t seed, std::int64_t max_days, std::int64_t threshold) {
  const Game game(c);
  const Rational target = dtc::equilibrium_constants(c).first_departure;
  auto rng = dtc::make_rng(seed, 0);
  dtc::DynamicsParams p;
  p.seed = seed;
  p.max_days = max_days;
  p.stuck_threshold = threshold;
  GeneralRun out;
  const auto observer = [&](const dtc::DayRecord& r, const dtc::DynamicsState&) {
    out.bracketed = out.bracketed && game.time(r.lower_bound) <= target && target <= game.time(r.upper_bound);
  };
  try {
    const auto r = dtc::run(game, dtc::uniform_initial_profile(game, rng), p, observer);
    out.converged = r.converged;
    out.days = r.days;
    out.bound_updates = r.bound_updates;
  } catch (const dtc::InvariantViolation&) {
    out.bracketed = false;
  }
  return out;
}

Verdict general_regime() {
  int converged = 0;
  bool bracketed = true;
  std::int64_t updates = 0;
  std::string days;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = general_run(oracle::desk_config(), seed, 1'000'000, 2000);
    converged += r.converged;
    bracketed = bracketed && r.bracketed;
    updates += r.bound_updates;
    days += (days.empty() ? "" : ",") + std::to_string(r.days);
  }
  std::string detail = "P=21: " + std::to_string(converged) + "/10 converged, days " + days + ", " +
                       std::to_string(updates) + " bound updates, first departure always bracketed: " +
                       (bracketed ? "yes" : "no");
  bool pass = converged == 10 && bracketed;
  const char* skip = std::getenv("DTC_SKIP_FULL_SCALE");
  if (skip == nullptr || std::string(skip) != "1") {
    const auto full = general_run(oracle::reference_config(), 1, 3'000'000, 10'000);
    detail += "; P=101 seed 1: " + std::string(full.converged ? "converged" : "not converged") + " after " +
              std::to_string(full.days) + " days (reference run about 2.5e5; day counts depend on the RNG), " +
              std::to_string(full.bound_updates) + " bound updates, bracketed: " + (full.bracketed ? "yes" : "no");
    pass = pass && full.converged && full.bracketed;
  } else {
    detail += "; P=101 run skipped";
  }
  return {pass, detail};
}

Verdict fixed_mass_scaling() {
  bool ok = true;
  std::string detail;
  for (const auto& [m, users] :
       std::vector<std::pair<Rational, std::int64_t>>{{Rational(1), 101}, {Rational(1, 2), 201}, {Rational(1, 10), 1001}}) {
    GameConfig c;
    c.user_size = m;
    c.num_users = users;
    const Game game(c);
    const auto sol = dtc::equilibrium_solution(game);
    const auto o = dtc::compute_arrivals(sol.profile(), game);
    bool all_equal = true;
    for (const auto& cost : o.trip_cost) all_equal = all_equal && cost == Rational(40);
    const bool cell = sol.equilibrium_cost == Rational(40) && game.time(sol.first_departure) == Rational(-80) &&
                      game.time(sol.last_departure) == Rational(20) && sol.epsilon == Rational(3) * m && all_equal;
    ok = ok && cell;
    detail += (detail.empty() ? "" : "; ") + std::string("m=") + str(m) + " P=" + std::to_string(users) +
              ": cost=" + str(sol.equilibrium_cost) + " rush=[" + str(game.time(sol.first_departure)) + "," +
              str(game.time(sol.last_departure)) + "] epsilon=" + str(sol.epsilon);
  }
  return {ok, detail};
}

Verdict oracle_equivalence() {
  std::mt19937_64 rng(2024);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const GameConfig c = oracle::small_config(1 + i % 12);
    const Game game(c);
    const auto p = oracle::random_profile(game.num_users(), game.first_tick(), game.last_tick(), rng);
    const auto a = dtc::compute_arrivals(p, game);
    const auto b = dtc::brute_force_arrivals(p, game);
    const auto trips = oracle::trips(oracle::times_of(p, game), c);
    bool same = a.order == b.order && a.arrival == b.arrival && a.trip_cost == b.trip_cost;
    for (std::size_t k = 0; k < a.size(); ++k) {
      same = same && game.time(a.arrival[k]) == trips[k].arrival && a.trip_cost[k] == trips[k].cost;
    }
    mismatches += !same;
  }
  return {mismatches == 0, "1000 profiles, P<=12, mismatches=" + std::to_string(mismatches)};
}

Verdict weak_acyclicity() {
  std::mt19937_64 rng(808);
  int reached = 0;
  std::size_t steps = 0;
  std::size_t notes = 0;
  std::string failure;
  for (int i = 0; i < 100; ++i) {
    const GameConfig c = oracle::small_config(2 + i % 11);
    const Game game(c);
    const auto start = oracle::random_profile(game.num_users(), game.first_tick(), game.last_tick(), rng);
    try {
      const auto path = dtc::build_ordered_path(game, start);
      const auto v = dtc::validate_path(path, game);
      if (v.ok && path.reached_equilibrium) {
        ++reached;
      } else if (failure.empty()) {
        failure = v.message;
      }
      steps += path.steps.size();
      notes += path.notes.size();
    } catch (const dtc::PathBuildError& e) {
      if (failure.empty()) failure = e.what();
    }
  }
  GameConfig tiny;
  tiny.num_users = 2;
  tiny.grid_step = Rational(1, 10);
  tiny.horizon = 1;
  const auto report = dtc::exhaustive_weak_acyclicity(Game(tiny));
  const bool graph_ok = report.is_weakly_acyclic && report.equilibrium_unique_sink() && report.unreachable == 0;
  std::string detail = std::to_string(reached) + "/100 ordered paths valid (" + std::to_string(steps) +
                       " steps, " + std::to_string(notes) + " witness substitutions); tiny P=2 graph: " +
                       std::to_string(report.nodes) + " nodes, " + std::to_string(report.edges) + " edges, " +
                       std::to_string(report.sinks.size()) + " sink(s), unreachable " +
                       std::to_string(report.unreachable);
  if (!failure.empty()) detail += "; first failure: " + failure;
  return {reached == 100 && graph_ok, detail};
}

Verdict property_suites() {
  const Game game(oracle::reference_config());
  const auto& c = game.config();
  const auto k = dtc::equilibrium_constants(c);
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::int64_t> pick(game.first_tick().index, game.last_tick().index);

  int rate_violations = 0;
  for (int i = 0; i < 100'000; ++i) {
    Tick a{pick(rng)};
    Tick b{pick(rng)};
    if (b < a) std::swap(a, b);
    const Rational dt = game.duration(b - a);
    const Rational dv = game.schedule_delay(b) - game.schedule_delay(a);
    rate_violations += !(-c.early_penalty * dt <= dv && dv <= c.late_penalty * dt);
  }

  int fifo_violations = 0;
  int fifo_checked = 0;
  while (fifo_checked < 10'000) {
    TimeProfile p = oracle::random_profile(game.num_users(), game.first_tick(), game.last_tick(), rng);
    const auto before = dtc::compute_arrivals(p, game);
    const std::size_t r = std::uniform_int_distribution<std::size_t>(0, before.size() - 1)(rng);
    if (before.departure[r] >= game.last_tick()) continue;
    const Tick to{std::uniform_int_distribution<std::int64_t>(before.departure[r].index + 1, game.last_tick().index)(rng)};
    if (p.occupied(to)) continue;
    p.move(before.order[r], to);
    const auto after = dtc::compute_arrivals(p, game);
    for (std::size_t j = 0; j < r; ++j) fifo_violations += after.arrival[j] != before.arrival[j];
    ++fifo_checked;
  }

  int last_user_violations = 0;
  int last_user_applicable = 0;
  int witness_violations = 0;
  int witness_applicable = 0;
  const Tick rush_start = *game.to_tick(k.first_departure);
  for (int i = 0; i < 10'000; ++i) {
    const Tick lo = i % 2 == 0 ? rush_start : game.first_tick();
    const auto o = dtc::compute_arrivals(oracle::random_profile(game.num_users(), lo, game.last_tick(), rng), game);
    if (game.time(o.departure.front()) >= k.first_departure) ++last_user_applicable;
    last_user_violations += !dtc::last_user_bound_holds(o, game);
    if (game.duration(o.arrival.back() - o.departure.front()) > k.rush_length) ++witness_applicable;
    witness_violations += !dtc::free_flow_witness_exists_when_required(o, game);
  }
  const int total = rate_violations + fifo_violations + last_user_violations + witness_violations;
  return {total == 0, "rate bound 100000 pairs: " + std::to_string(rate_violations) + " violations; FIFO 10000 moves: " +
                          std::to_string(fifo_violations) + "; last-user bound (" + std::to_string(last_user_applicable) +
                          " applicable of 10000): " + std::to_string(last_user_violations) + "; free-flow witness (" +
                          std::to_string(witness_applicable) + " applicable): " + std::to_string(witness_violations)};
}

Verdict determinism() {
  const auto run_into = [](const std::string& dir) {
    dtc::ExperimentConfig c;
    c.game = oracle::desk_config();
    c.initial = "uniform";
    c.seed = 11;
    c.stuck_threshold = 2000;
    c.out = dir;
    dtc::fs::remove_all(dir);
    std::ostringstream log;
    dtc::cmd_run(c, log);
    std::ifstream in(dtc::fs::path(dir) / "trajectory.csv", std::ios::binary);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    return bytes.str();
  };
  const std::string a = run_into("acceptance_out/replay_a");
  const std::string b = run_into("acceptance_out/replay_b");
  return {!a.empty() && a == b, "trajectory.csv of two runs: " + std::to_string(a.size()) + " and " +
                                    std::to_string(b.size()) + " bytes, identical: " + (a == b ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"closed-form constants", closed_form_constants},
      {"epsilon-Nash at full scale", epsilon_nash_full_scale},
      {"stationarity of the equilibrium", stationarity},
      {"special-regime convergence", special_regime},
      {"general-regime convergence", general_regime},
      {"fixed-mass scaling", fixed_mass_scaling},
      {"arrival oracle equivalence", oracle_equivalence},
      {"constructive weak acyclicity", weak_acyclicity},
      {"property suites", property_suites},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !v.pass;
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.2fs", secs);
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " [" << timing
              << "] " << v.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failures == 0 ? 0 : 1;
}
