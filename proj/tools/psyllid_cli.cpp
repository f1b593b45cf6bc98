// Command-line front end for the psyllid trap-control model.
//
//   psyllid_cli equilibria  [--config f] [--alpha a] [--k k] [--a-p x]
//   psyllid_cli thresholds  [--config f] [--alpha a | --alpha-grid a,b,...]
//   psyllid_cli simulate    [--config f]
//   psyllid_cli sweep NAME  [--config f] [--jobs n] | sweep --list
//   psyllid_cli presets
//
// Common flags: --out <dir>, --format {csv,json}. Exit codes: 0 ok,
// 2 config/usage, 3 model precondition, 4 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "psyllid/analysis.hpp"
#include "psyllid/experiments.hpp"
#include "psyllid/io.hpp"
#include "psyllid/simulator.hpp"
#include "psyllid/thresholds.hpp"

namespace fs = std::filesystem;
using namespace psyllid;

namespace {

enum Exit { kOk = 0, kUsage = 2, kPrecondition = 3, kNumerical = 4 };

struct Common {
  std::string config;
  std::string out;
  std::string format = "csv";
  unsigned jobs = 1;
};

ScenarioConfig load(const Common& c) {
  ScenarioConfig cfg = c.config.empty() ? parse_config(Json::object()) : load_config(c.config);
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";
  return cfg;
}

void emit(const Common& c, const std::string& stem, const Json& json, const std::string& csv) {
  if (c.out.empty()) return;
  if (c.format == "json") {
    write_atomic(fs::path(c.out) / (stem + ".json"), json.dump(2) + "\n");
  } else {
    write_atomic(fs::path(c.out) / (stem + ".csv"), csv);
  }
}

int cmd_equilibria(const Common& c, double alpha, double gain, double lure) {
  const auto cfg = load(c);
  const auto& p = cfg.params;
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("--alpha must lie in [0, 1]");
  if (!(gain >= 0.0) || !(lure >= 0.0)) throw ConfigError("--k and --a-p must be >= 0");

  const std::vector<EquilibriumReport> reports{
      equilibrium_E0(p),
      equilibrium_E1(p),
      equilibrium_E2(p),
      equilibrium_E1P_open(p, alpha, lure),
      equilibrium_E1P_closed(p, alpha, gain),
      equilibrium_E2P_closed(p, alpha, gain),
  };
  const auto e0_scarcity = equilibrium_E0(p, Region::Scarcity);
  const auto d = derived_quantities(p);

  Json j{{"preset", cfg.preset}, {"params", to_json(p)}, {"derived", to_json(d)}};
  Json list = Json::array();
  CsvTable t({"label", "exists", "M", "A", "U", "stability", "pws_class", "residual", "existence"});
  for (const auto& r : reports) {
    list.push_back(to_json(r));
    t.add_row({to_string(r.label), r.exists ? "true" : "false", r.exists ? cell(r.coords.males) : "",
               r.exists ? cell(r.coords.receptive) : "", r.exists ? cell(r.coords.fertilized) : "",
               to_string(r.exists ? r.stability.verdict : Stability::NotApplicable), to_string(r.pws_class),
               r.exists ? cell(r.residual) : "", r.existence_trace});
  }
  j["equilibria"] = list;
  j["E0_scarcity_field"] = to_json(e0_scarcity);
  emit(c, "equilibria", j, t.str());

  std::cout << "N_M = " << format_number(d.n_m) << "  N_F = " << format_number(d.n_f)
            << "  theta_M = " << format_number(d.theta_m) << "  P_hat = " << format_number(d.p_hat) << "\n";
  for (const auto& r : reports) {
    std::cout << to_string(r.label) << ": ";
    if (!r.exists) {
      std::cout << "does not exist (" << r.existence_trace << ")\n";
      continue;
    }
    std::cout << "(" << format_number(r.coords.males) << ", " << format_number(r.coords.receptive) << ", "
              << format_number(r.coords.fertilized) << ") " << to_string(r.stability.verdict) << " "
              << to_string(r.pws_class) << " [" << to_string(r.region) << " field]\n";
  }
  std::cout << "E0 under scarcity field: " << to_string(e0_scarcity.stability.verdict) << "\n";
  return kOk;
}

int cmd_thresholds(const Common& c, const std::vector<double>& alpha_flag) {
  const auto cfg = load(c);
  const auto& p = cfg.params;
  const auto alphas = alpha_flag.empty() ? cfg.alphas : alpha_flag;
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  }
  const auto d = derived_quantities(p);
  if (!(d.theta_m > 1.0)) {
    throw PreconditionError("theta_M = " + format_number(d.theta_m) +
                            " <= 1: the male-scarcity equilibrium condition (1-r) rho / delta > N_M fails");
  }

  CsvTable t({"alpha", "ap_crit", "tangency_a", "ap_crit_aux", "tangency_m", "k_star", "value_residual",
              "derivative_residual"});
  Json rows = Json::array();
  for (double a : alphas) {
    const auto fold = ap_crit(p, a, cfg.thresholds);
    const auto aux = ap_crit_aux(p, a, cfg.thresholds);
    const auto k = k_star(p, a);
    t.add_row({cell(a), cell(fold.a_p_crit), cell(fold.tangency_point), cell(aux.a_p_crit),
               cell(aux.tangency_point), cell(k.value), cell(fold.value_residual),
               cell(fold.derivative_residual)});
    rows.push_back(Json{{"alpha", a}, {"ap_crit", to_json(fold)}, {"ap_crit_aux", to_json(aux)},
                        {"k_star", json_number(k.value)}});
    std::cout << "alpha = " << format_number(a) << ": A_p^crit = " << format_number(fold.a_p_crit)
              << "  aux A_p^crit = " << format_number(aux.a_p_crit) << "  k* = " << format_number(k.value)
              << "\n";
  }
  emit(c, "thresholds", Json{{"preset", cfg.preset}, {"rows", rows}}, t.str());
  return kOk;
}

int cmd_simulate(const Common& c) {
  const auto cfg = load(c);
  const auto tr = integrate(cfg.params, cfg.strategy, cfg.sim);
  Json summary{{"preset", cfg.preset},
               {"params", to_json(cfg.params)},
               {"strategy", to_json(cfg.strategy)},
               {"sim", to_json(cfg.sim)},
               {"result", trajectory_summary(tr)}};
  if (!c.out.empty()) {
    const fs::path dir(c.out);
    if (c.format == "json") {
      Json rows = Json::array();
      for (const auto& s : tr.samples) {
        rows.push_back(Json{{"t", json_number(s.t)}, {"state", to_json(s.x)}, {"a_p", json_number(s.a_p)}});
      }
      write_atomic(dir / "trajectory.json", rows.dump(2) + "\n");
    } else {
      write_atomic(dir / "trajectory.csv", trajectory_csv(tr, cfg.params.mating_capacity));
    }
    write_atomic(dir / "summary.json", summary.dump(2) + "\n");
  }
  std::cout << "t_end = " << format_number(tr.t_end) << "  elimination_time = "
            << (tr.elimination_time ? format_number(*tr.elimination_time) : std::string("none"))
            << "  cost_integral = " << format_number(tr.pheromone_cost_integral) << "\n";
  return kOk;
}

int cmd_sweep(const Common& c, const std::string& name, bool list) {
  if (list) {
    for (const auto& s : sweep_catalog()) std::cout << s.name << "\t" << s.description << "\n";
    return kOk;
  }
  if (name.empty()) throw ConfigError("sweep needs a name (see --list)");
  const auto cfg = load(c);
  const auto result = run_sweep(name, cfg, c.jobs);
  write_sweep(result, c.out.empty() ? fs::path(".") : fs::path(c.out), cfg.preset, c.format == "json");
  std::cout << name << ": " << result.rows.size() << " rows\n";
  return kOk;
}

int cmd_presets() {
  for (const auto& p : presets()) {
    std::cout << p.name << "\t" << p.description << "\n  " << to_json(p.params).dump() << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Piecewise-smooth psyllid model under pheromone-trap control"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--config", common.config, "JSON scenario file")->check(CLI::ExistingFile);
  app.add_option("--out", common.out, "output directory");
  app.add_option("--format", common.format, "output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--jobs", common.jobs, "worker threads for sweeps")->check(CLI::PositiveNumber);

  double alpha = 0.5, gain = 2.5, lure = 1000.0;
  auto* eq = app.add_subcommand("equilibria", "all equilibria with stability and classification");
  eq->add_option("--alpha", alpha, "killing rate for controlled equilibria");
  eq->add_option("--k", gain, "feedback gain for closed-loop equilibria");
  eq->add_option("--a-p", lure, "lure strength for the open-loop equilibrium");

  std::vector<double> alphas;
  auto* th = app.add_subcommand("thresholds", "critical lure amounts and feedback gain");
  auto* alpha_opt = th->add_option("--alpha", alphas, "killing rate")->expected(1);
  th->add_option("--alpha-grid", alphas, "comma-separated killing rates")->delimiter(',')->excludes(alpha_opt);

  auto* sim = app.add_subcommand("simulate", "integrate one scenario");

  std::string sweep_name;
  bool list = false;
  auto* sw = app.add_subcommand("sweep", "regenerate figure data");
  sw->add_option("name", sweep_name, "sweep name");
  sw->add_flag("--list", list, "list available sweeps");

  auto* pr = app.add_subcommand("presets", "list parameter presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (const char* det = std::getenv("PSYLLID_SEED_DETERMINISTIC"); det && std::string(det) == "1") {
    common.jobs = 1;
  }

  try {
    if (eq->parsed()) return cmd_equilibria(common, alpha, gain, lure);
    if (th->parsed()) return cmd_thresholds(common, alphas);
    if (sim->parsed()) return cmd_simulate(common);
    if (sw->parsed()) return cmd_sweep(common, sweep_name, list);
    if (pr->parsed()) return cmd_presets();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const PreconditionError& e) {
    std::cerr << "precondition violated: " << e.what() << "\n";
    return kPrecondition;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
