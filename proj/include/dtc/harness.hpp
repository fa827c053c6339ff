#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "dtc/dynamics.hpp"
#include "dtc/equilibrium.hpp"
#include "dtc/model.hpp"
#include "dtc/verification.hpp"

namespace dtc {

namespace fs = std::filesystem;

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_failed = 2, exit_internal = 3 };

/// Malformed configuration, profile file or command-line value.
class ConfigError : public ModelError {
 public:
  using ModelError::ModelError;
};

struct ExperimentConfig {
  GameConfig game;
  DynamicsKind dynamics = DynamicsKind::fixation;
  std::uint64_t seed = 1;
  /// equilibrium | special | uniform | file:PATH
  std::string initial = "special";
  std::int64_t max_days = 1'000'000;
  bool stop_at_zero_rmse = true;
  std::vector<std::int64_t> snapshot_days{1, 500, 900};
  int max_candidates = 100;
  std::int64_t stuck_threshold = 10'000;
  std::optional<Rational> lower_bound;
  std::optional<Rational> upper_bound;
  std::optional<Rational> epsilon;
  std::string profile;
  std::vector<std::uint64_t> seeds;
  std::vector<Rational> user_sizes;
  std::int64_t node_budget = 1'000'000;
  bool edge_list = false;
  std::string out = "out";
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class Int>
Int parse_integer(const std::string& text, const std::string& what) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) throw ConfigError(what + ": not an integer: '" + text + "'");
  return v;
}

inline Rational parse_rational(const std::string& text, const std::string& what) {
  try {
    return Rational::parse(text);
  } catch (const std::exception&) {
    throw ConfigError(what + ": not a rational number: '" + text + "'");
  }
}

inline bool parse_bool(const std::string& text, const std::string& what) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(what + ": expected true or false, got '" + text + "'");
}

/// Comma-separated integers; "a-b" expands to the inclusive range.
template <class Int>
std::vector<Int> parse_integer_list(const std::string& text, const std::string& what) {
  std::vector<Int> out;
  if (trim(text).empty()) return out;
  for (const auto& item : split(text, ',')) {
    if (const auto dash = item.find('-', 1); dash != std::string::npos) {
      const Int lo = parse_integer<Int>(trim(item.substr(0, dash)), what);
      const Int hi = parse_integer<Int>(trim(item.substr(dash + 1)), what);
      if (hi < lo) throw ConfigError(what + ": empty range '" + item + "'");
      for (Int v = lo; v <= hi; ++v) out.push_back(v);
    } else {
      out.push_back(parse_integer<Int>(item, what));
    }
  }
  return out;
}

inline std::string join_rationals(const std::vector<Rational>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i].to_string();
  return s;
}

template <class Int>
std::string join_integers(const std::vector<Int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s;
}

}  // namespace detail

/// Sets one configuration key from its text value.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "num_users") c.game.num_users = parse_integer<std::int64_t>(value, key);
  else if (key == "user_size") c.game.user_size = parse_rational(value, key);
  else if (key == "capacity") c.game.capacity = parse_rational(value, key);
  else if (key == "early_penalty") c.game.early_penalty = parse_rational(value, key);
  else if (key == "late_penalty") c.game.late_penalty = parse_rational(value, key);
  else if (key == "grid_step") c.game.grid_step = parse_rational(value, key);
  else if (key == "horizon") c.game.horizon = parse_rational(value, key);
  else if (key == "dynamics") {
    if (value == "naive") c.dynamics = DynamicsKind::naive;
    else if (value == "fixation") c.dynamics = DynamicsKind::fixation;
    else throw ConfigError("dynamics: expected naive or fixation, got '" + value + "'");
  } else if (key == "seed") c.seed = parse_integer<std::uint64_t>(value, key);
  else if (key == "initial") {
    if (value != "equilibrium" && value != "special" && value != "uniform" && value.rfind("file:", 0) != 0) {
      throw ConfigError("initial: expected equilibrium, special, uniform or file:PATH, got '" + value + "'");
    }
    c.initial = value;
  } else if (key == "max_days") c.max_days = parse_integer<std::int64_t>(value, key);
  else if (key == "stop_at_zero_rmse") c.stop_at_zero_rmse = parse_bool(value, key);
  else if (key == "snapshot_days") c.snapshot_days = parse_integer_list<std::int64_t>(value, key);
  else if (key == "max_candidates") c.max_candidates = parse_integer<int>(value, key);
  else if (key == "stuck_threshold") c.stuck_threshold = parse_integer<std::int64_t>(value, key);
  else if (key == "lower_bound") c.lower_bound = parse_rational(value, key);
  else if (key == "upper_bound") c.upper_bound = parse_rational(value, key);
  else if (key == "epsilon") c.epsilon = parse_rational(value, key);
  else if (key == "profile") c.profile = value;
  else if (key == "seeds") c.seeds = parse_integer_list<std::uint64_t>(value, key);
  else if (key == "user_sizes") {
    c.user_sizes.clear();
    for (const auto& item : split(value, ',')) {
      if (!item.empty()) c.user_sizes.push_back(parse_rational(item, key));
    }
  } else if (key == "node_budget") c.node_budget = parse_integer<std::int64_t>(value, key);
  else if (key == "edge_list") c.edge_list = parse_bool(value, key);
  else if (key == "out") c.out = value;
  else throw ConfigError("unknown key '" + key + "'");
}

/// Reads `key = value` lines; `#` starts a comment. Errors carry `source:line`.
inline ExperimentConfig parse_config(std::istream& in, const std::string& source, ExperimentConfig base = {}) {
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string text = detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(number) + ": expected key = value");
    try {
      apply_setting(base, detail::trim(text.substr(0, eq)), detail::trim(text.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return base;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

/// The fully resolved configuration in the same `key = value` format.
inline void write_config(std::ostream& os, const ExperimentConfig& c) {
  os << "num_users = " << c.game.num_users << '\n'
     << "user_size = " << c.game.user_size << '\n'
     << "capacity = " << c.game.capacity << '\n'
     << "early_penalty = " << c.game.early_penalty << '\n'
     << "late_penalty = " << c.game.late_penalty << '\n'
     << "grid_step = " << c.game.grid_step << '\n'
     << "horizon = " << c.game.horizon << '\n'
     << "dynamics = " << to_string(c.dynamics) << '\n'
     << "seed = " << c.seed << '\n'
     << "initial = " << c.initial << '\n'
     << "max_days = " << c.max_days << '\n'
     << "stop_at_zero_rmse = " << (c.stop_at_zero_rmse ? "true" : "false") << '\n'
     << "snapshot_days = " << detail::join_integers(c.snapshot_days) << '\n'
     << "max_candidates = " << c.max_candidates << '\n'
     << "stuck_threshold = " << c.stuck_threshold << '\n';
  if (c.lower_bound) os << "lower_bound = " << *c.lower_bound << '\n';
  if (c.upper_bound) os << "upper_bound = " << *c.upper_bound << '\n';
  if (c.epsilon) os << "epsilon = " << *c.epsilon << '\n';
  if (!c.profile.empty()) os << "profile = " << c.profile << '\n';
  if (!c.seeds.empty()) os << "seeds = " << detail::join_integers(c.seeds) << '\n';
  if (!c.user_sizes.empty()) os << "user_sizes = " << detail::join_rationals(c.user_sizes) << '\n';
  os << "node_budget = " << c.node_budget << '\n' << "edge_list = " << (c.edge_list ? "true" : "false") << '\n';
}

inline void prepare_output(const ExperimentConfig& c) {
  fs::create_directories(c.out);
  std::ofstream cfg(fs::path(c.out) / "config.cfg");
  write_config(cfg, c);
}

// ---------------------------------------------------------------------------
// Profiles and snapshots

/// Reads a CSV with a header naming `user` and `departure` columns (others
/// are ignored). Departures are exact `p/q` values or plain decimals.
inline TimeProfile read_profile_csv(std::istream& in, const std::string& source, const Game& game) {
  std::string line;
  int number = 0;
  std::optional<std::size_t> user_col;
  std::optional<std::size_t> dep_col;
  std::size_t columns = 0;
  std::vector<std::pair<std::size_t, Rational>> entries;
  const auto fail = [&](const std::string& msg) -> ConfigError {
    return ConfigError(source + ":" + std::to_string(number) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++number;
    const std::string text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto cells = detail::split(text, ',');
    if (!user_col) {
      columns = cells.size();
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == "user") user_col = i;
        if (cells[i] == "departure") dep_col = i;
      }
      if (!user_col || !dep_col) throw fail("header must name 'user' and 'departure' columns");
      continue;
    }
    if (cells.size() != columns) {
      throw fail("expected " + std::to_string(columns) + " fields, found " + std::to_string(cells.size()));
    }
    std::size_t user = 0;
    Rational departure;
    try {
      user = detail::parse_integer<std::size_t>(cells[*user_col], "user");
      departure = detail::parse_rational(cells[*dep_col], "departure");
    } catch (const ConfigError& e) {
      throw fail(e.what());
    }
    entries.emplace_back(user, departure);
  }
  if (!user_col) throw ConfigError(source + ": empty profile file");
  try {
    return profile_from_departures(entries, game);
  } catch (const ProfileError& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

inline TimeProfile load_profile(const std::string& path, const Game& game) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open profile file '" + path + "'");
  return read_profile_csv(in, path, game);
}

inline void write_snapshot_header(std::ostream& os) {
  os << "order,user,departure,departure_decimal,arrival,arrival_decimal,queue_delay,queue_delay_decimal,"
        "schedule_delay,schedule_delay_decimal,trip_cost,trip_cost_decimal\n";
}

/// One row per user in departure order; exact `p/q` columns each followed by
/// a 6-digit decimal derived from them.
inline void write_snapshot(std::ostream& os, const TripOutcome& o, const Game& game) {
  write_snapshot_header(os);
  const auto pair = [&](const Rational& v) { return v.to_string() + "," + v.to_decimal(6); };
  for (std::size_t k = 0; k < o.size(); ++k) {
    os << k + 1 << ',' << o.order[k] + 1 << ',' << pair(game.time(o.departure[k])) << ','
       << pair(game.time(o.arrival[k])) << ',' << pair(o.queue_delay[k]) << ',' << pair(o.schedule_delay[k]) << ','
       << pair(o.trip_cost[k]) << '\n';
  }
}

inline void write_snapshot_file(const fs::path& path, const TripOutcome& o, const Game& game) {
  std::ofstream f(path);
  write_snapshot(f, o, game);
}

// ---------------------------------------------------------------------------
// Commands. Each returns an exit code; human-readable lines go to `log`.

inline int cmd_equilibrium(const ExperimentConfig& c, std::ostream& log) {
  const Game game(c.game);
  const EquilibriumSolution sol = equilibrium_solution(game);
  const EquilibriumConstants k = equilibrium_constants(c.game);
  const FluidCorrespondence fluid = fluid_correspondence(c.game);
  prepare_output(c);
  write_snapshot_file(fs::path(c.out) / "equilibrium.csv", compute_arrivals(sol.profile(), game), game);
  std::ostringstream summary;
  summary << "first_departure = " << k.first_departure << '\n'
          << "last_departure = " << k.last_departure << '\n'
          << "equilibrium_cost = " << k.cost << '\n'
          << "epsilon = " << k.epsilon << '\n'
          << "critical_order = " << k.critical_order << '\n'
          << "early_departure_rate = " << fluid.early_rate << '\n'
          << "late_departure_rate = " << fluid.late_rate << '\n'
          << "total_mass = " << fluid.total_mass << '\n'
          << "fluid_cost = " << fluid.fluid_cost << '\n'
          << "fluid_first_departure = " << fluid.fluid_first_departure << '\n';
  std::ofstream(fs::path(c.out) / "summary.txt") << summary.str();
  log << summary.str();
  return exit_ok;
}

inline TimeProfile make_initial_profile(const ExperimentConfig& c, const Game& game) {
  if (c.initial == "equilibrium") return equilibrium_solution(game).profile();
  Rng rng = make_rng(c.seed, 0);
  if (c.initial == "special") return special_initial_profile(game, rng);
  if (c.initial == "uniform") return uniform_initial_profile(game, rng);
  if (c.initial.rfind("file:", 0) == 0) return load_profile(c.initial.substr(5), game);
  throw ConfigError("unknown initial profile '" + c.initial + "'");
}

inline std::optional<Tick> bound_tick(const std::optional<Rational>& time, const Game& game, const char* name) {
  if (!time) return std::nullopt;
  const auto t = game.to_tick(*time);
  if (!t || !game.in_horizon(*t)) throw ConfigError(std::string(name) + " must be a grid time inside the horizon");
  return t;
}

inline DynamicsParams make_params(const ExperimentConfig& c, const Game& game) {
  DynamicsParams p;
  p.kind = c.dynamics;
  p.seed = c.seed;
  p.max_days = c.max_days;
  p.stop_at_zero_rmse = c.stop_at_zero_rmse;
  p.max_candidates = c.max_candidates;
  p.stuck_threshold = c.stuck_threshold;
  p.lower_bound = bound_tick(c.lower_bound, game, "lower_bound");
  p.upper_bound = bound_tick(c.upper_bound, game, "upper_bound");
  return p;
}

inline std::string format_rmse(const DayRecord& r) {
  if (r.mse.is_zero()) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", r.rmse);
  return buf;
}

inline void write_trajectory_header(std::ostream& os) {
  os << "day,event,mode,user,from,to,rmse,mse,first_departure,fixed_prefix,lower_bound,upper_bound\n";
}

inline void write_trajectory_row(std::ostream& os, const DayRecord& r, const Game& game) {
  os << r.day << ',' << to_string(r.event) << ',' << to_string(r.mode) << ',';
  if (r.mover) os << *r.mover + 1;
  os << ',';
  if (r.from) os << game.time(*r.from);
  os << ',';
  if (r.to) os << game.time(*r.to);
  os << ',' << format_rmse(r) << ',' << r.mse << ',' << game.time(r.first_departure) << ',' << r.fixed_prefix << ','
     << game.time(r.lower_bound) << ',' << game.time(r.upper_bound) << '\n';
}

struct RunSummary {
  RunResult result;
  double final_rmse = 0;
};

/// Runs the dynamics and writes trajectory.csv, bounds.csv, snapshots,
/// final.csv and verdict.txt under `c.out`.
inline RunSummary execute_run(const ExperimentConfig& c) {
  const Game game(c.game);
  // Convergence is measured against the closed-form profile, which must lie on the grid.
  if (auto check = validate_grid(c.game); !check.ok()) throw GridError(std::move(check.violations));
  const DynamicsParams params = make_params(c, game);
  TimeProfile initial = make_initial_profile(c, game);
  prepare_output(c);
  const fs::path out(c.out);
  std::ofstream trajectory(out / "trajectory.csv");
  write_trajectory_header(trajectory);
  std::ofstream bounds(out / "bounds.csv");
  bounds << "day,diagnosis,definitive,first_departure,lower_bound,upper_bound,reason\n";
  std::vector<std::int64_t> snapshot_days = c.snapshot_days;
  std::sort(snapshot_days.begin(), snapshot_days.end());
  snapshot_days.erase(std::unique(snapshot_days.begin(), snapshot_days.end()), snapshot_days.end());

  const auto observer = [&](const DayRecord& r, const DynamicsState& state) {
    write_trajectory_row(trajectory, r, game);
    if (r.diagnosis) {
      bounds << r.day << ',' << to_string(r.diagnosis->kind) << ',' << (r.diagnosis->definitive ? "true" : "false")
             << ',' << game.time(r.first_departure) << ',' << game.time(r.lower_bound) << ','
             << game.time(r.upper_bound) << ',' << r.diagnosis->reason << '\n';
    }
    if (std::binary_search(snapshot_days.begin(), snapshot_days.end(), r.day)) {
      write_snapshot_file(out / ("snapshot_day_" + std::to_string(r.day) + ".csv"), state.outcome, game);
    }
  };
  RunSummary summary{run(game, std::move(initial), params, observer), 0.0};
  const RunResult& res = summary.result;
  const TripOutcome final_outcome = compute_arrivals(res.final_profile, game);
  const Rational mse = mean_squared_error(final_outcome, equilibrium_constants(c.game).cost);
  summary.final_rmse = rmse_from_mse(mse);
  write_snapshot_file(out / "final.csv", final_outcome, game);
  if (res.converged) {
    // The equilibrium is absorbing, so later requested days share the final profile.
    for (std::int64_t d : snapshot_days) {
      if (d > res.days) write_snapshot_file(out / ("snapshot_day_" + std::to_string(d) + ".csv"), final_outcome, game);
    }
  }
  std::ofstream verdict(out / "verdict.txt");
  verdict << "converged = " << (res.converged ? "true" : "false") << '\n'
          << "convergence_day = " << (res.convergence_day ? std::to_string(*res.convergence_day) : "none") << '\n'
          << "days = " << res.days << '\n'
          << "moves = " << res.moves << '\n'
          << "bound_updates = " << res.bound_updates << '\n'
          << "anomalies = " << res.anomalies << '\n'
          << "final_mse = " << mse << '\n';
  return summary;
}

inline int cmd_run(const ExperimentConfig& c, std::ostream& log) {
  const RunSummary s = execute_run(c);
  log << "converged = " << (s.result.converged ? "true" : "false") << '\n'
      << "days = " << s.result.days << '\n'
      << "bound_updates = " << s.result.bound_updates << '\n'
      << "output = " << c.out << '\n';
  return s.result.converged ? exit_ok : exit_failed;
}

inline int cmd_verify(const ExperimentConfig& c, std::ostream& log) {
  const Game game(c.game);
  std::string path = c.profile;
  if (path.empty() && c.initial.rfind("file:", 0) == 0) path = c.initial.substr(5);
  if (path.empty()) throw ConfigError("verify needs a profile file (--profile PATH)");
  const TimeProfile profile = load_profile(path, game);
  const Cost epsilon = c.epsilon.value_or(equilibrium_constants(c.game).epsilon);
  const EpsilonVerdict verdict = verify_epsilon_nash(profile, epsilon, game);
  const ImprovementScan scan = max_unilateral_improvement(profile, game);
  std::ostringstream report;
  report << "verdict = " << (verdict.holds ? "holds" : "violated") << '\n'
         << "epsilon = " << epsilon << '\n'
         << "max_improvement = " << scan.value << '\n';
  if (scan.witness) {
    const Deviation& w = *scan.witness;
    report << "witness_user = " << w.user + 1 << '\n'
           << "witness_from = " << game.time(w.from) << '\n'
           << "witness_to = " << game.time(w.to) << '\n'
           << "witness_current_cost = " << w.current << '\n'
           << "witness_deviated_cost = " << w.deviated << '\n';
  }
  log << report.str();
  if (!c.out.empty()) {
    prepare_output(c);
    std::ofstream(fs::path(c.out) / "verify.txt") << report.str();
  }
  return verdict.holds ? exit_ok : exit_failed;
}

struct SweepCell {
  std::size_t index = 0;
  std::uint64_t seed = 1;
  GameConfig game;
  std::string out;
  std::string status = "pending";
  std::string error;
  RunSummary summary;
};

inline std::vector<SweepCell> sweep_cells(const ExperimentConfig& c) {
  if (c.seeds.empty()) throw ConfigError("sweep needs at least one seed (seeds = ...)");
  std::vector<GameConfig> games;
  if (c.user_sizes.empty()) {
    games.push_back(c.game);
  } else {
    // Keep the total mass m(P-1) of the template fixed.
    const Rational mass = c.game.user_size * Rational(c.game.num_users - 1);
    for (const Rational& m : c.user_sizes) {
      const Rational others = mass / m;
      if (!others.is_integer()) throw ConfigError("user size " + m.to_string() + " does not divide the total mass");
      GameConfig g = c.game;
      g.user_size = m;
      g.num_users = others.num() + 1;
      games.push_back(g);
    }
  }
  std::vector<SweepCell> cells;
  for (const auto& g : games) {
    for (std::uint64_t seed : c.seeds) {
      SweepCell cell;
      cell.index = cells.size();
      cell.seed = seed;
      cell.game = g;
      cell.out = (fs::path(c.out) / ("cell_" + std::to_string(cell.index) + "_m" + g.user_size.to_decimal(4) +
                                     "_seed" + std::to_string(seed)))
                     .string();
      cells.push_back(cell);
    }
  }
  return cells;
}

/// Runs every (user size, seed) cell on a worker pool; each cell writes to its
/// own directory and sweep.csv is assembled after all workers finish.
inline int cmd_sweep(const ExperimentConfig& c, std::ostream& log, unsigned workers = 0) {
  std::vector<SweepCell> cells = sweep_cells(c);
  prepare_output(c);
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(cells.size()));
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      SweepCell& cell = cells[i];
      ExperimentConfig cc = c;
      cc.game = cell.game;
      cc.seed = cell.seed;
      cc.out = cell.out;
      try {
        cell.summary = execute_run(cc);
        cell.status = cell.summary.result.converged ? "converged" : "not-converged";
      } catch (const std::exception& e) {
        cell.status = "error";
        cell.error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  std::ofstream csv(fs::path(c.out) / "sweep.csv");
  csv << "cell,seed,user_size,num_users,equilibrium_cost,first_departure,last_departure,epsilon,status,"
         "convergence_day,days,final_rmse,bound_updates,anomalies,error\n";
  std::size_t converged = 0;
  for (const auto& cell : cells) {
    const EquilibriumConstants k = equilibrium_constants(cell.game);
    const RunResult& r = cell.summary.result;
    std::string error = cell.error;
    std::replace(error.begin(), error.end(), ',', ';');
    char rmse[40];
    std::snprintf(rmse, sizeof rmse, "%.9g", cell.summary.final_rmse);
    csv << cell.index << ',' << cell.seed << ',' << cell.game.user_size << ',' << cell.game.num_users << ','
        << k.cost << ',' << k.first_departure << ',' << k.last_departure << ',' << k.epsilon << ',' << cell.status
        << ',' << (r.convergence_day ? std::to_string(*r.convergence_day) : "") << ','
        << (cell.status == "error" ? "" : std::to_string(r.days)) << ','
        << (cell.status == "error" ? "" : (cell.summary.final_rmse == 0.0 ? std::string("0") : std::string(rmse)))
        << ',' << r.bound_updates << ',' << r.anomalies << ',' << error << '\n';
    converged += cell.status == "converged";
  }
  log << "cells = " << cells.size() << '\n' << "converged = " << converged << '\n' << "output = " << c.out << '\n';
  return converged == cells.size() ? exit_ok : exit_failed;
}

inline int cmd_acyclicity(const ExperimentConfig& c, std::ostream& log) {
  const Game game(c.game);
  const ProfileGraph graph = build_profile_graph(game, c.node_budget);
  const AcyclicityReport r = analyse_profile_graph(graph, game);
  prepare_output(c);
  std::ostringstream report;
  report << "symmetry_reduced = " << (r.symmetry_reduced ? "true" : "false") << '\n'
         << "nodes = " << r.nodes << '\n'
         << "labelled_profiles = " << static_cast<std::int64_t>(r.labelled_profiles) << '\n'
         << "edges = " << r.edges << '\n'
         << "equilibrium_is_sink = " << (r.equilibrium_is_sink ? "true" : "false") << '\n'
         << "sinks = " << r.sinks.size() << '\n'
         << "equilibrium_unique_sink = " << (r.equilibrium_unique_sink() ? "true" : "false") << '\n'
         << "unreachable = " << r.unreachable << '\n'
         << "is_weakly_acyclic = " << (r.is_weakly_acyclic ? "true" : "false") << '\n';
  for (const auto& sink : r.sinks) {
    report << "sink =";
    for (Tick t : sink) report << ' ' << game.time(t);
    report << '\n';
  }
  std::ofstream(fs::path(c.out) / "acyclicity.txt") << report.str();
  if (c.edge_list) {
    std::ofstream edges(fs::path(c.out) / "edges.txt");
    write_edge_list(edges, graph, game);
  }
  log << report.str();
  return r.is_weakly_acyclic && r.equilibrium_unique_sink() ? exit_ok : exit_failed;
}

/// Maps exceptions to exit codes: bad input 1, internal consistency 3.
template <class Command>
int guarded(Command&& command, std::ostream& err) {
  try {
    return command();
  } catch (const InvariantViolation& e) {
    err << "internal invariant violated: " << e.what() << '\n';
    return exit_internal;
  } catch (const std::overflow_error& e) {
    err << "arithmetic overflow: " << e.what() << '\n';
    return exit_internal;
  } catch (const ModelError& e) {
    err << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return exit_internal;
  }
}

}  // namespace dtc
