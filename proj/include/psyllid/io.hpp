#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "psyllid/analysis.hpp"
#include "psyllid/error.hpp"
#include "psyllid/model.hpp"
#include "psyllid/simulator.hpp"
#include "psyllid/thresholds.hpp"

namespace psyllid {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "1.0.0";

// ---------------------------------------------------------------- numbers

/// 12 significant digits, shortest form, '.' decimal point regardless of
/// locale.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 12);
  return std::string(buf, res.ptr);
}

/// v rounded to 12 significant digits, so JSON serialization (shortest
/// round-trip) emits at most 12 digits.
inline double round12(double v) {
  if (!std::isfinite(v)) return v;
  const std::string s = format_number(v);
  double out = v;
  std::from_chars(s.data(), s.data() + s.size(), out);
  return out;
}

inline Json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return round12(v);
}

inline Json json_number(std::optional<double> v) { return v ? json_number(*v) : Json(nullptr); }

// ---------------------------------------------------------------- files

/// Writes to a sibling temporary and renames, so readers never observe a
/// partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) {
      fs::remove(tmp, ec);
      throw ConfigError("write failed for " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw ConfigError("cannot rename into " + path.string());
  }
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

/// RFC-4180 style table with a mandatory header row. Empty optional cells
/// stay empty.
class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> cells) {
    if (cells.size() != header_.size()) throw Error("CSV row width does not match header");
    rows_.push_back(std::move(cells));
  }

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += csv_field(cells[i]);
      }
      out += "\r\n";
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

  std::size_t rows() const { return rows_.size(); }

private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline std::string cell(double v) { return format_number(v); }
inline std::string cell(std::optional<double> v) { return v ? format_number(*v) : std::string(); }

// ---------------------------------------------------------------- presets

struct Preset {
  const char* name;
  const char* description;
  ModelParams params;
};

inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = [] {
    ModelParams low = table1_params();
    low.fecundity /= 50.0;
    return std::vector<Preset>{
        {"table1", "field-study parameters (Valencia sweet orange on Rangpur lime)", table1_params()},
        {"low_fecundity", "table1 with fecundity divided by 50: both offspring numbers below 1", low},
    };
  }();
  return all;
}

inline ModelParams preset_params(const std::string& name) {
  for (const auto& p : presets()) {
    if (name == p.name) return p.params;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

// ---------------------------------------------------------------- json views

inline Json to_json(const ModelParams& p) {
  return Json{{"r", json_number(p.sex_ratio)},          {"rho", json_number(p.fecundity)},
              {"sigma", json_number(p.density_survival)},  {"mu", json_number(p.male_mortality)},
              {"delta", json_number(p.female_mortality)},  {"gamma", json_number(p.mating_capacity)},
              {"nu", json_number(p.mating_rate)},          {"eta", json_number(p.remating_rate)}};
}

inline Json to_json(const State& x) {
  return Json::array({json_number(x.males), json_number(x.receptive), json_number(x.fertilized)});
}

inline Json to_json(const DerivedQuantities& d) {
  return Json{{"n_m", json_number(d.n_m)},
              {"n_f", json_number(d.n_f)},
              {"theta_m", json_number(d.theta_m)},
              {"vartheta", json_number(d.vartheta)},
              {"p_hat", json_number(d.p_hat)}};
}

inline Json to_json(const EquilibriumReport& r) {
  Json j{{"label", to_string(r.label)},
         {"exists", r.exists},
         {"existence", r.existence_trace},
         {"field", to_string(r.region)}};
  if (r.law.closed_loop) {
    j["control"] = Json{{"alpha", r.law.killing_rate}, {"k", json_number(r.law.gain)}};
  } else if (r.law.lure != 0.0 || r.law.killing_rate != 0.0) {
    j["control"] = Json{{"alpha", r.law.killing_rate}, {"a_p", json_number(r.law.lure)}};
  }
  j["pws_class"] = to_string(r.pws_class);
  if (!r.exists) {
    j["stability"] = to_string(Stability::NotApplicable);
    return j;
  }
  j["coords"] = to_json(r.coords);
  j["residual"] = json_number(r.residual);
  j["stability"] = to_string(r.stability.verdict);
  Json ev = Json::array();
  for (const auto& l : r.stability.eigenvalues) {
    ev.push_back(Json::array({json_number(l.real()), json_number(l.imag())}));
  }
  j["eigenvalues"] = ev;
  j["routh_hurwitz"] = Json{{"a1", json_number(r.stability.rh.a1)},
                            {"a2", json_number(r.stability.rh.a2)},
                            {"a3", json_number(r.stability.rh.a3)},
                            {"a1a2_minus_a3", json_number(r.stability.rh.hurwitz_minor())},
                            {"stable", r.stability.rh.stable()},
                            {"agrees_with_eigenvalues", r.stability.rh_agrees}};
  return j;
}

inline Json to_json(const ThresholdResult& t) {
  return Json{{"a_p_crit", json_number(t.a_p_crit)},
              {"tangency_point", json_number(t.tangency_point)},
              {"value_residual", json_number(t.value_residual)},
              {"derivative_residual", json_number(t.derivative_residual)},
              {"iterations", t.iterations},
              {"bracket", Json::array({json_number(t.bracket.lo), json_number(t.bracket.hi)})}};
}

inline Json to_json(const ControlStrategy& s) {
  Json j{{"alpha", s.alpha}, {"policy", policy_name(s.policy)}};
  std::visit(
      [&](const auto& pol) {
        using T = std::decay_t<decltype(pol)>;
        if constexpr (std::is_same_v<T, OpenLoop>) {
          j["a_p"] = json_number(pol.lure);
        } else if constexpr (std::is_same_v<T, ClosedLoopContinuous>) {
          j["k"] = json_number(pol.gain);
        } else if constexpr (std::is_same_v<T, ClosedLoopSampled>) {
          j["k"] = json_number(pol.gain);
          j["period"] = json_number(pol.period);
        } else {
          j["a_p_cap"] = json_number(pol.cap);
          j["k"] = json_number(pol.gain);
          j["period"] = json_number(pol.period);
        }
      },
      s.policy);
  return j;
}

inline Json to_json(const SimulationConfig& c) {
  return Json{{"initial", to_json(c.initial)},
              {"t_max", json_number(c.t_max)},
              {"rtol", c.rtol},
              {"atol", c.atol},
              {"elimination_eps", c.elimination_eps},
              {"record_dt", json_number(c.record_dt)},
              {"switch_tol", c.switch_tol}};
}

// ---------------------------------------------------------------- trajectory

inline std::string trajectory_csv(const Trajectory& tr, double gamma) {
  CsvTable t({"t", "M", "A", "U", "F", "a_p", "region_sign"});
  for (const auto& s : tr.samples) {
    const double sv = switching_value(s.x, s.a_p, gamma);
    const int sign = sv > 0.0 ? 1 : (sv < 0.0 ? -1 : 0);
    t.add_row({cell(s.t), cell(s.x.males), cell(s.x.receptive), cell(s.x.fertilized),
               cell(s.x.females()), cell(s.a_p), std::to_string(sign)});
  }
  return t.str();
}

inline Json trajectory_summary(const Trajectory& tr) {
  Json events = Json::array();
  for (const auto& e : tr.switch_events) {
    events.push_back(Json{{"t", json_number(e.t)}, {"direction", e.direction}});
  }
  return Json{{"t_end", json_number(tr.t_end)},
              {"final_state", to_json(tr.final_state)},
              {"elimination_eps", tr.elimination_eps},
              {"elimination_time", json_number(tr.elimination_time)},
              {"pheromone_cost_integral", json_number(tr.pheromone_cost_integral)},
              {"pheromone_release_total", json_number(tr.pheromone_release_total)},
              {"releases", tr.releases},
              {"switch_events", events},
              {"step_stats",
               Json{{"accepted", tr.step_stats.accepted},
                    {"rejected", tr.step_stats.rejected},
                    {"clamped", tr.step_stats.clamped},
                    {"rhs_evals", tr.step_stats.rhs_evals}}}};
}

// ---------------------------------------------------------------- config

/// Rejects keys outside `allowed` (fail-closed config).
inline void expect_keys(const Json& obj, std::initializer_list<const char*> allowed,
                        const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

inline double get_number(const Json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(where + "." + key + " is required");
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
  return v.get<double>();
}

inline std::vector<double> get_grid(const Json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + " must be a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError(where + " must contain only numbers");
    out.push_back(x.get<double>());
  }
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (!(out[i] > out[i - 1])) throw ConfigError(where + " must be strictly increasing");
  }
  return out;
}

struct ScenarioConfig {
  std::string preset = "table1";
  ModelParams params = table1_params();
  ControlStrategy strategy;
  SimulationConfig sim;
  bool initial_at_e1 = true;  // initial state defaults to the wild equilibrium
  std::vector<double> alphas{0.0, 0.5, 1.0};
  ThresholdOptions thresholds;
  Json sweep = Json::object();
  std::vector<std::string> warnings;
};

inline ModelParams parse_params(const Json& j, ModelParams base) {
  expect_keys(j, {"r", "rho", "sigma", "mu", "delta", "gamma", "nu", "eta"}, "params");
  const std::pair<const char*, double*> fields[] = {
      {"r", &base.sex_ratio},       {"rho", &base.fecundity},
      {"sigma", &base.density_survival}, {"mu", &base.male_mortality},
      {"delta", &base.female_mortality}, {"gamma", &base.mating_capacity},
      {"nu", &base.mating_rate},    {"eta", &base.remating_rate},
  };
  for (const auto& [key, slot] : fields) {
    if (j.contains(key)) *slot = get_number(j, key, "params");
  }
  return base;
}

inline ControlStrategy parse_strategy(const Json& j) {
  if (!j.is_object()) throw ConfigError("strategy must be a JSON object");
  const std::string policy = j.value("policy", std::string("open_loop"));
  const std::string where = "strategy";
  ControlStrategy s;
  if (policy == "open_loop") {
    expect_keys(j, {"policy", "alpha", "a_p"}, where);
    s.policy = OpenLoop{j.contains("a_p") ? get_number(j, "a_p", where) : 0.0};
  } else if (policy == "closed_loop_continuous") {
    expect_keys(j, {"policy", "alpha", "k"}, where);
    s.policy = ClosedLoopContinuous{get_number(j, "k", where)};
  } else if (policy == "closed_loop_sampled") {
    expect_keys(j, {"policy", "alpha", "k", "period"}, where);
    s.policy = ClosedLoopSampled{get_number(j, "k", where),
                                 j.contains("period") ? get_number(j, "period", where) : 14.0};
  } else if (policy == "mixed") {
    expect_keys(j, {"policy", "alpha", "k", "period", "a_p_cap"}, where);
    s.policy = Mixed{get_number(j, "a_p_cap", where), get_number(j, "k", where),
                     j.contains("period") ? get_number(j, "period", where) : 14.0};
  } else {
    throw ConfigError("unknown policy '" + policy + "'");
  }
  if (j.contains("alpha")) s.alpha = get_number(j, "alpha", where);
  validate(s);
  return s;
}

inline void parse_sim(const Json& j, ScenarioConfig& cfg) {
  expect_keys(j, {"initial", "t_max", "rtol", "atol", "elimination_eps", "record_dt", "switch_tol"},
              "sim");
  auto& c = cfg.sim;
  if (j.contains("initial")) {
    const auto& v = j.at("initial");
    if (v.is_string() && v.get<std::string>() == "E1") {
      cfg.initial_at_e1 = true;
    } else if (v.is_array() && v.size() == 3 && v[0].is_number() && v[1].is_number() &&
               v[2].is_number()) {
      cfg.initial_at_e1 = false;
      c.initial = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
    } else {
      throw ConfigError("sim.initial must be \"E1\" or an array [M, A, U]");
    }
  }
  if (j.contains("t_max")) c.t_max = get_number(j, "t_max", "sim");
  if (j.contains("rtol")) c.rtol = get_number(j, "rtol", "sim");
  if (j.contains("atol")) c.atol = get_number(j, "atol", "sim");
  if (j.contains("elimination_eps")) c.elimination_eps = get_number(j, "elimination_eps", "sim");
  if (j.contains("record_dt")) c.record_dt = get_number(j, "record_dt", "sim");
  if (j.contains("switch_tol")) c.switch_tol = get_number(j, "switch_tol", "sim");
}

/// Parses and validates a scenario document. Missing sections keep their
/// defaults; unknown keys anywhere are rejected.
inline ScenarioConfig parse_config(const Json& doc) {
  expect_keys(doc, {"preset", "params", "strategy", "sim", "thresholds", "sweep"}, "config");
  ScenarioConfig cfg;
  if (doc.contains("preset")) {
    if (!doc.at("preset").is_string()) throw ConfigError("preset must be a string");
    cfg.preset = doc.at("preset").get<std::string>();
    cfg.params = preset_params(cfg.preset);
  }
  if (doc.contains("params")) {
    const auto& pj = doc.at("params");
    if (!doc.contains("preset")) {
      expect_keys(pj, {"r", "rho", "sigma", "mu", "delta", "gamma", "nu", "eta"}, "params");
      for (const char* k : {"r", "rho", "sigma", "mu", "delta", "gamma", "nu", "eta"}) {
        if (!pj.contains(k)) throw ConfigError(std::string("params.") + k + " is required without a preset");
      }
      cfg.preset = "custom";
    } else {
      cfg.preset += "+overrides";
    }
    cfg.params = parse_params(pj, cfg.params);
  }
  cfg.warnings = validate(cfg.params);
  if (doc.contains("strategy")) cfg.strategy = parse_strategy(doc.at("strategy"));
  if (doc.contains("sim")) parse_sim(doc.at("sim"), cfg);
  if (doc.contains("thresholds")) {
    const auto& t = doc.at("thresholds");
    expect_keys(t, {"alpha", "alpha_grid", "tol", "grid_points", "domain_factor"}, "thresholds");
    if (t.contains("alpha") && t.contains("alpha_grid")) {
      throw ConfigError("thresholds: give either alpha or alpha_grid");
    }
    if (t.contains("alpha")) cfg.alphas = {get_number(t, "alpha", "thresholds")};
    if (t.contains("alpha_grid")) cfg.alphas = get_grid(t.at("alpha_grid"), "thresholds.alpha_grid");
    if (t.contains("tol")) cfg.thresholds.tol = get_number(t, "tol", "thresholds");
    if (t.contains("domain_factor")) {
      cfg.thresholds.domain_factor = get_number(t, "domain_factor", "thresholds");
    }
    if (t.contains("grid_points")) {
      const double n = get_number(t, "grid_points", "thresholds");
      if (!(n >= 2.0)) throw ConfigError("thresholds.grid_points must be >= 2");
      cfg.thresholds.grid_points = static_cast<std::size_t>(n);
    }
    for (double a : cfg.alphas) {
      if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("threshold alpha must lie in [0, 1]");
    }
  }
  if (doc.contains("sweep")) {
    if (!doc.at("sweep").is_object()) throw ConfigError("sweep must be a JSON object");
    cfg.sweep = doc.at("sweep");
  }
  if (cfg.initial_at_e1) {
    const auto e1 = equilibrium_E1(cfg.params);
    cfg.sim.initial = e1.exists ? e1.coords : State{};
  }
  validate(cfg.sim);
  return cfg;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

}  // namespace psyllid
