#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "psyllid/analysis.hpp"
#include "psyllid/io.hpp"
#include "psyllid/simulator.hpp"
#include "psyllid/thresholds.hpp"

namespace psyllid {

struct SweepAxis {
  std::string name;
  std::vector<double> values;
};

/// What a sweep ran over, kept alongside its results for provenance.
struct SweepSpec {
  std::string name;
  std::vector<SweepAxis> axes;
  Json settings = Json::object();
  std::vector<std::string> outputs;
};

struct SweepResult {
  SweepSpec spec;
  std::vector<std::string> columns;
  std::vector<std::vector<std::optional<double>>> rows;
  Json meta = Json::object();

  std::optional<double> at(std::size_t row, const std::string& column) const {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (columns[c] == column) return rows.at(row).at(c);
    }
    throw Error("no column '" + column + "' in sweep " + spec.name);
  }
};

struct RunOptions {
  SimulationConfig sim;
  ThresholdOptions thresholds;
  unsigned jobs = 1;
};

/// Evaluates f(0..n-1) on up to `jobs` threads; results come back in index
/// order and the lowest-index exception is rethrown.
template <class R, class F>
std::vector<R> parallel_map(std::size_t n, unsigned jobs, F&& f) {
  std::vector<std::optional<R>> out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i].emplace(f(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<R> res;
  res.reserve(n);
  for (auto& o : out) res.push_back(std::move(*o));
  return res;
}

inline std::vector<double> default_alpha_grid(std::size_t points = 21) { return linspace(0.0, 1.0, points); }

namespace detail {

inline SimulationConfig quiet(SimulationConfig c) {
  c.keep_samples = false;
  return c;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

inline Json spec_json(const SweepSpec& spec) {
  Json axes = Json::array();
  for (const auto& a : spec.axes) {
    Json vals = Json::array();
    for (double v : a.values) vals.push_back(json_number(v));
    axes.push_back(Json{{"name", a.name}, {"values", vals}});
  }
  return Json{{"name", spec.name}, {"axes", axes}, {"settings", spec.settings}, {"outputs", spec.outputs}};
}

inline void stamp(SweepResult& r, const ModelParams& p, const RunOptions& opt) {
  const Json spec = spec_json(r.spec);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(spec.dump())));
  r.meta = Json{{"sweep", r.spec.name},
                {"tool_version", kToolVersion},
                {"params", to_json(p)},
                {"spec", spec},
                {"spec_hash", hash},
                {"rows", r.rows.size()},
                {"tolerances",
                 Json{{"rtol", opt.sim.rtol},
                      {"atol", opt.sim.atol},
                      {"elimination_eps", opt.sim.elimination_eps},
                      {"t_max", json_number(opt.sim.t_max)},
                      {"threshold_tol", opt.thresholds.tol}}},
                {"initial", to_json(opt.sim.initial)}};
}

inline SweepResult make(SweepSpec spec, std::vector<std::string> columns) {
  SweepResult r;
  r.spec = std::move(spec);
  r.columns = std::move(columns);
  r.spec.outputs = r.columns;
  return r;
}

}  // namespace detail

/// Open-loop threshold curve: auxiliary-system threshold per alpha, with the
/// scarcity-system fold threshold alongside.
inline SweepResult fig5_open_ap_crit(const ModelParams& p, const std::vector<double>& alphas,
                                     const RunOptions& opt = {}) {
  auto r = detail::make({"fig5", {{"alpha", alphas}}, {}, {}},
                        {"alpha", "ap_crit_aux", "tangency_m", "ap_crit_scarcity", "tangency_a"});
  const bool fold = derived_quantities(p).theta_m > 1.0;
  r.rows = parallel_map<std::vector<std::optional<double>>>(alphas.size(), opt.jobs, [&](std::size_t i) {
    const auto aux = ap_crit_aux(p, alphas[i], opt.thresholds);
    std::optional<double> b, a;
    if (fold) {
      const auto res = ap_crit(p, alphas[i], opt.thresholds);
      b = res.a_p_crit;
      a = res.tangency_point;
    }
    return std::vector<std::optional<double>>{alphas[i], aux.a_p_crit, aux.tangency_point, b, a};
  });
  detail::stamp(r, p, opt);
  return r;
}

/// Open-loop totals with A_p = threshold(alpha) + A_p,min.
inline SweepResult fig6_open_totals(const ModelParams& p, double alpha, const std::vector<double>& ap_min_grid,
                                    const RunOptions& opt = {}) {
  auto r = detail::make({"fig6", {{"ap_min", ap_min_grid}}, Json{{"alpha", alpha}}, {}},
                        {"ap_min", "a_p", "elimination_time", "cost_integral", "cost_release_total"});
  const double base = ap_crit_aux(p, alpha, opt.thresholds).a_p_crit;
  r.rows = parallel_map<std::vector<std::optional<double>>>(ap_min_grid.size(), opt.jobs, [&](std::size_t i) {
    const double lure = base + ap_min_grid[i];
    const auto tr = integrate(p, ControlStrategy::open(alpha, lure), detail::quiet(opt.sim));
    return std::vector<std::optional<double>>{ap_min_grid[i], lure, tr.elimination_time,
                                              tr.pheromone_cost_integral, tr.pheromone_release_total};
  });
  detail::stamp(r, p, opt);
  return r;
}

/// Default lure axis of the minimal-time grid: from the alpha = 1 threshold
/// to five times the alpha = 0 threshold.
inline std::vector<double> fig7_default_ap_grid(const ModelParams& p, std::size_t points,
                                                const ThresholdOptions& t = {}) {
  return linspace(ap_crit_aux(p, 1.0, t).a_p_crit, 5.0 * ap_crit_aux(p, 0.0, t).a_p_crit, points);
}

/// Elimination time over an (alpha, A_p) grid; cells that never eliminate are
/// empty.
inline SweepResult fig7_min_time_grid(const ModelParams& p, const std::vector<double>& alphas,
                                      const std::vector<double>& ap_grid, const RunOptions& opt = {}) {
  auto r = detail::make({"fig7", {{"alpha", alphas}, {"a_p", ap_grid}}, {}, {}},
                        {"alpha", "a_p", "elimination_time"});
  const std::size_t n = alphas.size() * ap_grid.size();
  r.rows = parallel_map<std::vector<std::optional<double>>>(n, opt.jobs, [&](std::size_t i) {
    const double a = alphas[i / ap_grid.size()], lure = ap_grid[i % ap_grid.size()];
    const auto tr = integrate(p, ControlStrategy::open(a, lure), detail::quiet(opt.sim));
    return std::vector<std::optional<double>>{a, lure, tr.elimination_time};
  });
  detail::stamp(r, p, opt);
  return r;
}

inline SweepResult fig8_k_star_curve(const ModelParams& p, const std::vector<double>& alphas,
                                     const RunOptions& opt = {}) {
  auto r = detail::make({"fig8", {{"alpha", alphas}}, {}, {}}, {"alpha", "k_star"});
  for (double a : alphas) r.rows.push_back({a, k_star(p, a).value});
  detail::stamp(r, p, opt);
  return r;
}

struct PhaseRun {
  double alpha = 0.0;
  double gain = 0.0;
  Trajectory trajectory;
  EquilibriumReport abundance;  // closed-loop equilibrium of the abundance field
  EquilibriumReport scarcity;   // closed-loop equilibrium of the scarcity field
};

/// Closed-loop runs below and above the gain threshold for each alpha.
/// period <= 0 selects continuous feedback.
inline std::vector<PhaseRun> fig9_runs(const ModelParams& p, const std::vector<double>& alphas,
                                       double k_below, double k_above, double period,
                                       const RunOptions& opt = {}) {
  const std::size_t n = alphas.size() * 2;
  return parallel_map<PhaseRun>(n, opt.jobs, [&](std::size_t i) {
    PhaseRun run;
    run.alpha = alphas[i / 2];
    run.gain = i % 2 == 0 ? k_below : k_above;
    const auto s = period > 0.0 ? ControlStrategy::sampled(run.alpha, run.gain, period)
                                : ControlStrategy::continuous(run.alpha, run.gain);
    run.trajectory = integrate(p, s, opt.sim);
    run.abundance = equilibrium_E1P_closed(p, run.alpha, run.gain);
    run.scarcity = equilibrium_E2P_closed(p, run.alpha, run.gain);
    return run;
  });
}

inline SweepResult fig9_phase_portraits(const ModelParams& p, const std::vector<double>& alphas,
                                        double k_below, double k_above, double period,
                                        const RunOptions& opt = {}) {
  auto r = detail::make({"fig9",
                         {{"alpha", alphas}, {"k", {k_below, k_above}}},
                         Json{{"period", json_number(period)}, {"record_dt", json_number(opt.sim.record_dt)}},
                         {}},
                        {"alpha", "k", "t", "M", "A", "U", "F"});
  for (const auto& run : fig9_runs(p, alphas, k_below, k_above, period, opt)) {
    for (const auto& s : run.trajectory.samples) {
      r.rows.push_back({run.alpha, run.gain, s.t, s.x.males, s.x.receptive, s.x.fertilized, s.x.females()});
    }
  }
  detail::stamp(r, p, opt);
  return r;
}

/// Lure needed to start continuous feedback, k*(alpha) times the wild
/// receptive-female level, against the open-loop threshold.
inline SweepResult fig10_closed_initial_amount(const ModelParams& p, const std::vector<double>& alphas,
                                               const RunOptions& opt = {}) {
  auto r = detail::make({"fig10", {{"alpha", alphas}}, {}, {}},
                        {"alpha", "k_star", "a1_star", "ap_k_star", "ap_crit_aux", "ratio",
                         "ratio_total_females"});
  const auto e1 = equilibrium_E1(p);
  if (!e1.exists) throw PreconditionError("N_F <= 1: no wild equilibrium to start from");
  r.rows = parallel_map<std::vector<std::optional<double>>>(alphas.size(), opt.jobs, [&](std::size_t i) {
    const double k = k_star(p, alphas[i]).value;
    const double open = ap_crit_aux(p, alphas[i], opt.thresholds).a_p_crit;
    const double need = k * e1.coords.receptive;
    return std::vector<std::optional<double>>{alphas[i], k, e1.coords.receptive, need, open, need / open,
                                              k * e1.coords.females() / open};
  });
  detail::stamp(r, p, opt);
  return r;
}

/// Sampled feedback A_p = (k*(alpha) + 1) A(t_j) with t_j = 14 n j days.
inline SweepResult fig11_closed_sampled_totals(const ModelParams& p, const std::vector<double>& alphas,
                                               const std::vector<double>& n_grid, const RunOptions& opt = {}) {
  auto r = detail::make({"fig11", {{"alpha", alphas}, {"n", n_grid}}, {}, {}},
                        {"alpha", "n", "gain", "elimination_time", "cost_integral", "cost_release_total",
                         "releases"});
  const std::size_t n = alphas.size() * n_grid.size();
  r.rows = parallel_map<std::vector<std::optional<double>>>(n, opt.jobs, [&](std::size_t i) {
    const double a = alphas[i / n_grid.size()], weeks2 = n_grid[i % n_grid.size()];
    const double gain = k_star(p, a).value + 1.0;
    const auto tr = integrate(p, ControlStrategy::sampled(a, gain, 14.0 * weeks2), detail::quiet(opt.sim));
    return std::vector<std::optional<double>>{a, weeks2, gain, tr.elimination_time, tr.pheromone_cost_integral,
                                              tr.pheromone_release_total, static_cast<double>(tr.releases)};
  });
  detail::stamp(r, p, opt);
  return r;
}

/// Mixed control A_p(t_j) = min{threshold(alpha) + A_p,min, (k*(alpha) + 1) A(t_j)},
/// with the sampled closed-loop and open-loop (A_p = cap) totals for comparison.
inline SweepResult fig12_mixed_totals(const ModelParams& p, const std::vector<double>& alphas,
                                      const std::vector<double>& n_grid, double ap_min,
                                      const RunOptions& opt = {}) {
  auto r = detail::make({"fig12", {{"alpha", alphas}, {"n", n_grid}}, Json{{"ap_min", json_number(ap_min)}}, {}},
                        {"alpha", "n", "cap", "elimination_time", "cost_integral", "cost_release_total",
                         "sampled_elimination_time", "sampled_cost_integral", "sampled_cost_release_total",
                         "open_elimination_time", "open_cost_integral"});
  const std::size_t n = alphas.size() * n_grid.size();
  r.rows = parallel_map<std::vector<std::optional<double>>>(n, opt.jobs, [&](std::size_t i) {
    const double a = alphas[i / n_grid.size()], weeks2 = n_grid[i % n_grid.size()];
    const double k = k_star(p, a).value;
    const double cap = ap_crit_aux(p, a, opt.thresholds).a_p_crit + ap_min;
    const auto sim = detail::quiet(opt.sim);
    const auto mixed = integrate(p, ControlStrategy::mixed(a, cap, k, 14.0 * weeks2), sim);
    const auto sampled = integrate(p, ControlStrategy::sampled(a, k + 1.0, 14.0 * weeks2), sim);
    const auto open = integrate(p, ControlStrategy::open(a, cap), sim);
    return std::vector<std::optional<double>>{
        a, weeks2, cap, mixed.elimination_time, mixed.pheromone_cost_integral, mixed.pheromone_release_total,
        sampled.elimination_time, sampled.pheromone_cost_integral, sampled.pheromone_release_total,
        open.elimination_time, open.pheromone_cost_integral};
  });
  detail::stamp(r, p, opt);
  return r;
}

// ---------------------------------------------------------------- dispatch

struct SweepInfo {
  const char* name;
  const char* description;
};

inline const std::vector<SweepInfo>& sweep_catalog() {
  static const std::vector<SweepInfo> all{
      {"fig5", "open-loop lure threshold versus killing rate"},
      {"fig6", "open-loop pheromone totals versus A_p,min"},
      {"fig7", "elimination time over the (alpha, A_p) grid"},
      {"fig8", "feedback gain threshold k* versus killing rate"},
      {"fig9", "closed-loop phase trajectories below and above k*"},
      {"fig10", "lure needed to start continuous feedback versus open-loop threshold"},
      {"fig11", "sampled closed-loop pheromone totals every 2n weeks"},
      {"fig12", "mixed open/closed-loop pheromone totals"},
  };
  return all;
}

namespace detail {

inline std::vector<double> grid_or(const Json& s, const char* key, std::vector<double> fallback) {
  return s.contains(key) ? get_grid(s.at(key), std::string("sweep.") + key) : fallback;
}

inline double number_or(const Json& s, const char* key, double fallback) {
  return s.contains(key) ? get_number(s, key, "sweep") : fallback;
}

inline std::size_t points(const Json& s) {
  const double n = number_or(s, "points", 21.0);
  if (!(n >= 1.0) || n != std::floor(n)) throw ConfigError("sweep.points must be a positive integer");
  return static_cast<std::size_t>(n);
}

inline void check_alphas(const std::vector<double>& alphas) {
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("sweep alpha values must lie in [0, 1]");
  }
}

}  // namespace detail

/// Runs a named sweep with defaults overridden by the config's sweep
/// section.
inline SweepResult run_sweep(const std::string& name, const ScenarioConfig& cfg, unsigned jobs) {
  RunOptions opt{cfg.sim, cfg.thresholds, jobs};
  const Json& s = cfg.sweep;
  const auto& p = cfg.params;
  auto alphas = [&](std::vector<double> fallback) {
    auto g = detail::grid_or(s, "alpha_grid", std::move(fallback));
    detail::check_alphas(g);
    return g;
  };
  const std::vector<double> n_default{1, 2, 3, 4, 5, 6};

  if (name == "fig5") {
    expect_keys(s, {"alpha_grid", "points"}, "sweep");
    return fig5_open_ap_crit(p, alphas(default_alpha_grid(detail::points(s))), opt);
  }
  if (name == "fig6") {
    expect_keys(s, {"alpha", "ap_min_grid", "points"}, "sweep");
    const double a = detail::number_or(s, "alpha", 0.5);
    detail::check_alphas({a});
    return fig6_open_totals(p, a, detail::grid_or(s, "ap_min_grid", linspace(100.0, 5000.0, detail::points(s))),
                            opt);
  }
  if (name == "fig7") {
    expect_keys(s, {"alpha_grid", "ap_grid", "points"}, "sweep");
    const std::size_t n = detail::points(s);
    const auto ap = s.contains("ap_grid") ? get_grid(s.at("ap_grid"), "sweep.ap_grid")
                                          : fig7_default_ap_grid(p, n, cfg.thresholds);
    return fig7_min_time_grid(p, alphas(default_alpha_grid(n)), ap, opt);
  }
  if (name == "fig8") {
    expect_keys(s, {"alpha_grid", "points"}, "sweep");
    return fig8_k_star_curve(p, alphas(default_alpha_grid(detail::points(s))), opt);
  }
  if (name == "fig9") {
    expect_keys(s, {"alpha_grid", "k_below", "k_above", "period", "record_dt"}, "sweep");
    opt.sim.record_dt = detail::number_or(s, "record_dt", 5.0);
    return fig9_phase_portraits(p, alphas({0.0, 0.1, 0.2, 0.5, 1.0}), detail::number_or(s, "k_below", 2.5),
                                detail::number_or(s, "k_above", derived_quantities(p).n_m),
                                detail::number_or(s, "period", 0.0), opt);
  }
  if (name == "fig10") {
    expect_keys(s, {"alpha_grid", "points"}, "sweep");
    return fig10_closed_initial_amount(p, alphas(default_alpha_grid(detail::points(s))), opt);
  }
  if (name == "fig11") {
    expect_keys(s, {"alpha_grid", "n_grid", "points"}, "sweep");
    return fig11_closed_sampled_totals(p, alphas(default_alpha_grid(detail::points(s))),
                                       detail::grid_or(s, "n_grid", n_default), opt);
  }
  if (name == "fig12") {
    expect_keys(s, {"alpha_grid", "n_grid", "ap_min", "points"}, "sweep");
    return fig12_mixed_totals(p, alphas(default_alpha_grid(detail::points(s))),
                              detail::grid_or(s, "n_grid", n_default), detail::number_or(s, "ap_min", 500.0),
                              opt);
  }
  throw ConfigError("unknown sweep '" + name + "' (see --list)");
}

inline std::string sweep_csv(const SweepResult& r) {
  CsvTable t(r.columns);
  for (const auto& row : r.rows) {
    std::vector<std::string> cells;
    cells.reserve(row.size());
    for (const auto& v : row) cells.push_back(cell(v));
    t.add_row(std::move(cells));
  }
  return t.str();
}

inline Json sweep_json(const SweepResult& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    Json obj = Json::object();
    for (std::size_t c = 0; c < r.columns.size(); ++c) obj[r.columns[c]] = json_number(row[c]);
    rows.push_back(obj);
  }
  return Json{{"columns", r.columns}, {"rows", rows}};
}

/// Writes <name>.csv (or .json) and <name>.meta.json into dir.
inline void write_sweep(const SweepResult& r, const std::filesystem::path& dir, const std::string& preset,
                        bool as_json = false) {
  Json meta = r.meta;
  meta["preset"] = preset;
  if (as_json) {
    write_atomic(dir / (r.spec.name + ".json"), sweep_json(r).dump(2) + "\n");
  } else {
    write_atomic(dir / (r.spec.name + ".csv"), sweep_csv(r));
  }
  write_atomic(dir / (r.spec.name + ".meta.json"), meta.dump(2) + "\n");
}

}  // namespace psyllid
