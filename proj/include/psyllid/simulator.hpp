#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "psyllid/error.hpp"
#include "psyllid/model.hpp"

namespace psyllid {

struct OpenLoop {
  double lure = 0.0;
};
struct ClosedLoopContinuous {
  double gain = 0.0;
};
struct ClosedLoopSampled {
  double gain = 0.0;
  double period = 14.0;
};
/// A_p(t_j) = min{cap, (gain + 1) A(t_j)}, held for one period.
struct Mixed {
  double cap = 0.0;
  double gain = 0.0;
  double period = 14.0;
};

using Policy = std::variant<OpenLoop, ClosedLoopContinuous, ClosedLoopSampled, Mixed>;

struct ControlStrategy {
  double alpha = 0.0;
  Policy policy = OpenLoop{};

  static ControlStrategy none() { return {}; }
  static ControlStrategy open(double alpha, double lure) { return {alpha, OpenLoop{lure}}; }
  static ControlStrategy continuous(double alpha, double gain) {
    return {alpha, ClosedLoopContinuous{gain}};
  }
  static ControlStrategy sampled(double alpha, double gain, double period) {
    return {alpha, ClosedLoopSampled{gain, period}};
  }
  static ControlStrategy mixed(double alpha, double cap, double gain, double period) {
    return {alpha, Mixed{cap, gain, period}};
  }

  bool is_sampled() const {
    return std::holds_alternative<ClosedLoopSampled>(policy) || std::holds_alternative<Mixed>(policy);
  }
  double period() const {
    if (const auto* s = std::get_if<ClosedLoopSampled>(&policy)) return s->period;
    if (const auto* m = std::get_if<Mixed>(&policy)) return m->period;
    return 0.0;
  }
};

inline const char* policy_name(const Policy& p) {
  switch (p.index()) {
    case 0: return "open_loop";
    case 1: return "closed_loop_continuous";
    case 2: return "closed_loop_sampled";
    default: return "mixed";
  }
}

inline void validate(const ControlStrategy& s) {
  if (!(s.alpha >= 0.0 && s.alpha <= 1.0)) throw ConfigError("killing rate must lie in [0, 1]");
  auto nonneg = [](double v, const char* what) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError(std::string(what) + " must be >= 0");
  };
  std::visit(
      [&](const auto& pol) {
        using T = std::decay_t<decltype(pol)>;
        if constexpr (std::is_same_v<T, OpenLoop>) {
          nonneg(pol.lure, "lure strength");
        } else if constexpr (std::is_same_v<T, ClosedLoopContinuous>) {
          nonneg(pol.gain, "feedback gain");
        } else {
          nonneg(pol.gain, "feedback gain");
          if (!(pol.period > 0.0) || !std::isfinite(pol.period)) {
            throw ConfigError("sampling period must be > 0");
          }
          if constexpr (std::is_same_v<T, Mixed>) nonneg(pol.cap, "lure cap");
        }
      },
      s.policy);
}

/// Lure in force given the receptive-female count the policy reads: the
/// current A for continuous feedback, A at the latest sampling instant for
/// sampled policies.
inline double active_ap(const ControlStrategy& s, double /*t*/, double a_sample) {
  return std::visit(
      [&](const auto& pol) -> double {
        using T = std::decay_t<decltype(pol)>;
        if constexpr (std::is_same_v<T, OpenLoop>) {
          return pol.lure;
        } else if constexpr (std::is_same_v<T, Mixed>) {
          return std::min(pol.cap, (pol.gain + 1.0) * a_sample);
        } else {
          return pol.gain * a_sample;
        }
      },
      s.policy);
}

struct SimulationConfig {
  State initial;
  double t_max = 5000.0;
  double rtol = 1e-8;
  double atol = 1e-10;
  double elimination_eps = 0.1;
  double record_dt = 1.0;     // <= 0 records every accepted step
  double switch_tol = 1e-9;   // days
  bool keep_samples = true;   // false records only the first and last state
  bool stop_at_elimination = true;
  double fixed_step = 0.0;    // > 0 disables error control
  std::int64_t max_steps = 50'000'000;
};

inline void validate(const SimulationConfig& c) {
  if (!(c.t_max > 0.0) || !std::isfinite(c.t_max)) throw ConfigError("t_max must be > 0");
  if (!(c.rtol > 0.0) || !(c.atol > 0.0)) throw ConfigError("tolerances must be > 0");
  if (!(c.elimination_eps > 0.0)) throw ConfigError("elimination_eps must be > 0");
  if (!(c.switch_tol > 0.0)) throw ConfigError("switch_tol must be > 0");
  if (!c.initial.finite() || c.initial.males < 0.0 || c.initial.receptive < 0.0 ||
      c.initial.fertilized < 0.0) {
    throw ConfigError("initial state must be finite and nonnegative");
  }
}

struct Sample {
  double t = 0.0;
  State x;
  double a_p = 0.0;
};

struct SwitchEvent {
  double t = 0.0;
  int direction = 0;  // +1 into male abundance, -1 into male scarcity
};

struct StepStats {
  std::int64_t accepted = 0;
  std::int64_t rejected = 0;
  std::int64_t clamped = 0;
  std::int64_t rhs_evals = 0;
};

struct Trajectory {
  std::vector<Sample> samples;
  std::vector<SwitchEvent> switch_events;
  std::optional<double> elimination_time;
  double elimination_eps = 0.1;
  double pheromone_cost_integral = 0.0;  // integral of A_p dt
  double pheromone_release_total = 0.0;  // sum of released lure amounts
  std::int64_t releases = 0;
  StepStats step_stats;
  double t_end = 0.0;
  State final_state;
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct DoPri {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - b_hat
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

class Integrator {
public:
  Integrator(const ModelParams& p, const ControlStrategy& s, const SimulationConfig& c)
      : p_(p), s_(s), c_(c) {}

  Trajectory run() {
    Trajectory tr;
    tr.elimination_eps = c_.elimination_eps;
    double t = 0.0;
    State y = c_.initial;
    const double period = s_.period();
    std::int64_t segment = 0;
    next_record_ = c_.record_dt > 0.0 ? c_.record_dt : 0.0;

    if (s_.is_sampled()) release(tr, y, 0.0);
    else held_ = active_ap(s_, 0.0, y.receptive);
    record(tr, t, y);

    if (y.max_norm() < c_.elimination_eps) {
      tr.elimination_time = 0.0;
      if (c_.stop_at_elimination) return finish(tr, t, y);
    }

    double h = c_.fixed_step > 0.0 ? c_.fixed_step : std::min(1.0, c_.t_max);
    while (t < c_.t_max) {
      double stop = c_.t_max;
      if (s_.is_sampled()) stop = std::min(stop, static_cast<double>(segment + 1) * period);
      if (c_.record_dt > 0.0 && c_.keep_samples) stop = std::min(stop, next_record_);

      const auto out = advance(tr, t, y, h, stop);
      t = out.t;
      y = out.y;

      if (out.eliminated && c_.stop_at_elimination) break;
      if (s_.is_sampled() && t >= static_cast<double>(segment + 1) * period) {
        ++segment;
        t = static_cast<double>(segment) * period;
        if (t < c_.t_max) release(tr, y, t);
      }
      if (!c_.keep_samples) continue;
      if (c_.record_dt <= 0.0) {
        record(tr, t, y);
      } else if (t >= next_record_) {
        record(tr, t, y);
        while (next_record_ <= t) next_record_ += c_.record_dt;
      }
    }
    return finish(tr, t, y);
  }

private:
  struct StepResult {
    State y;
    double err = 0.0;
    double cost = 0.0;  // integral of A_p over the step
  };
  struct Advance {
    double t;
    State y;
    bool eliminated = false;
  };

  bool continuous() const { return std::holds_alternative<ClosedLoopContinuous>(s_.policy); }

  double lure_at(const State& x) const {
    return continuous() ? std::get<ClosedLoopContinuous>(s_.policy).gain * x.receptive : held_;
  }

  State field(const State& x, double& lure, StepStats& st) const {
    lure = lure_at(x);
    ++st.rhs_evals;
    return rhs(p_, ControlInputs{lure, s_.alpha}, x);
  }

  double switching(const State& x) const { return switching_value(x, lure_at(x), p_.mating_capacity); }

  StepResult rk_step(const State& y, double h, StepStats& st) const {
    using T = DoPri;
    std::array<double, 7> lure{};
    const State k1 = field(y, lure[0], st);
    const State k2 = field(y + (h * T::a21) * k1, lure[1], st);
    const State k3 = field(y + h * (T::a31 * k1 + T::a32 * k2), lure[2], st);
    const State k4 = field(y + h * (T::a41 * k1 + T::a42 * k2 + T::a43 * k3), lure[3], st);
    const State k5 =
        field(y + h * (T::a51 * k1 + T::a52 * k2 + T::a53 * k3 + T::a54 * k4), lure[4], st);
    const State k6 = field(
        y + h * (T::a61 * k1 + T::a62 * k2 + T::a63 * k3 + T::a64 * k4 + T::a65 * k5), lure[5], st);
    StepResult r;
    r.y = y + h * (T::b1 * k1 + T::b3 * k3 + T::b4 * k4 + T::b5 * k5 + T::b6 * k6);
    r.cost = h * (T::b1 * lure[0] + T::b3 * lure[2] + T::b4 * lure[3] + T::b5 * lure[4] +
                  T::b6 * lure[5]);
    if (c_.fixed_step > 0.0) return r;

    const State k7 = field(r.y, lure[6], st);
    const State e = h * (T::e1 * k1 + T::e3 * k3 + T::e4 * k4 + T::e5 * k5 + T::e6 * k6 + T::e7 * k7);
    const auto ya = y.as_array(), yn = r.y.as_array(), ea = e.as_array();
    double sum = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      const double sc = c_.atol + c_.rtol * std::max(std::abs(ya[i]), std::abs(yn[i]));
      sum += (ea[i] / sc) * (ea[i] / sc);
    }
    r.err = std::sqrt(sum / 3.0);
    return r;
  }

  // Clamps round-off negatives; returns false when a component is too
  // negative to be round-off.
  bool clamp(State& y, StepStats& st) const {
    bool clamped = false;
    for (double* v : {&y.males, &y.receptive, &y.fertilized}) {
      if (*v < 0.0) {
        if (*v < -c_.atol) return false;
        *v = 0.0;
        clamped = true;
      }
    }
    if (clamped) ++st.clamped;
    return true;
  }

  // Smallest fraction theta of the step h at which pred(y(theta h)) holds,
  // to within switch_tol days.
  template <class Pred>
  double localize(const State& y, double h, Pred&& pred, StepStats& st) const {
    double lo = 0.0, hi = 1.0;
    while ((hi - lo) * h > c_.switch_tol) {
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      State ym = rk_step(y, mid * h, st).y;
      clamp(ym, st);
      (pred(ym) ? hi : lo) = mid;
    }
    return hi;
  }

  // One accepted step toward `stop`, with event handling.
  Advance advance(Trajectory& tr, double t, State y, double& h, double stop) {
    auto& st = tr.step_stats;
    for (;;) {
      if (++attempts_ > c_.max_steps) throw NumericalError("step budget exhausted");
      const bool clipped = t + h >= stop;
      const double hs = clipped ? stop - t : h;
      if (hs < 1e-14 * std::max(1.0, t)) {
        throw NumericalError("step size underflow at t = " + std::to_string(t) + ", state (" +
                             std::to_string(y.males) + ", " + std::to_string(y.receptive) + ", " +
                             std::to_string(y.fertilized) + ")");
      }
      StepResult r = rk_step(y, hs, st);
      if (!r.y.finite()) {
        if (c_.fixed_step > 0.0) throw NumericalError("non-finite state at t = " + std::to_string(t));
        ++st.rejected;
        h = 0.25 * hs;
        continue;
      }

      if (c_.fixed_step <= 0.0) {
        const double err = std::max(r.err, 1e-300);
        const double fac11 = std::pow(err, 0.17);
        if (err > 1.0) {
          ++st.rejected;
          h = hs / std::min(5.0, fac11 / 0.9);
          continue;
        }
        const double fac = std::clamp(fac11 / std::pow(err_old_, 0.04) / 0.9, 0.2, 10.0);
        err_old_ = std::max(err, 1e-4);
        // A clipped step keeps the controller's proposal for the next one.
        const double proposal = hs / fac;
        if (!clipped || proposal < h) h = proposal;
      }
      if (!clamp(r.y, st)) {
        ++st.rejected;
        h = 0.5 * hs;
        continue;
      }

      double taken = hs;
      State y_new = r.y;
      double cost = r.cost;

      // Switching-plane crossing: shorten the step to end just past it.
      const double s0 = switching(y), s1 = switching(y_new);
      if ((s0 < 0.0 && s1 > 0.0) || (s0 > 0.0 && s1 < 0.0)) {
        const bool up = s1 > 0.0;
        const double theta = localize(
            y, hs, [&](const State& x) { return up ? switching(x) > 0.0 : switching(x) < 0.0; }, st);
        if (theta < 1.0) {
          taken = theta * hs;
          StepResult part = rk_step(y, taken, st);
          clamp(part.y, st);
          y_new = part.y;
          cost = part.cost;
        }
        tr.switch_events.push_back({t + taken, up ? +1 : -1});
      }

      bool eliminated = false;
      if (!tr.elimination_time && y_new.max_norm() < c_.elimination_eps) {
        const double eps = c_.elimination_eps;
        const double theta =
            localize(y, taken, [&](const State& x) { return x.max_norm() < eps; }, st);
        tr.elimination_time = t + theta * taken;
        if (theta < 1.0 && c_.stop_at_elimination) {
          taken = theta * taken;
          StepResult part = rk_step(y, taken, st);
          clamp(part.y, st);
          y_new = part.y;
          cost = part.cost;
        }
        eliminated = true;
      }

      ++st.accepted;
      tr.pheromone_cost_integral += cost;
      const double t_new = (taken == hs && clipped) ? stop : t + taken;
      return {t_new, y_new, eliminated};
    }
  }

  void release(Trajectory& tr, const State& y, double t) {
    held_ = active_ap(s_, t, y.receptive);
    tr.pheromone_release_total += held_;
    ++tr.releases;
  }

  void record(Trajectory& tr, double t, const State& y) const {
    tr.samples.push_back(Sample{t, y, lure_at(y)});
  }

  Trajectory finish(Trajectory& tr, double t, const State& y) {
    if (tr.samples.back().t != t) record(tr, t, y);
    tr.t_end = t;
    tr.final_state = y;
    if (std::holds_alternative<OpenLoop>(s_.policy)) {
      const double lure = std::get<OpenLoop>(s_.policy).lure;
      tr.releases = lure > 0.0 ? static_cast<std::int64_t>(std::ceil(t)) : 0;
      tr.pheromone_release_total = lure * static_cast<double>(tr.releases);
    } else if (continuous()) {
      tr.pheromone_release_total = tr.pheromone_cost_integral;
    }
    return std::move(tr);
  }

  ModelParams p_;
  ControlStrategy s_;
  SimulationConfig c_;
  double held_ = 0.0;
  double next_record_ = 0.0;
  double err_old_ = 1e-4;
  std::int64_t attempts_ = 0;
};

}  // namespace detail

/// Integrates the controlled switched system with embedded Dormand-Prince
/// 5(4) steps under PI step-size control. Crossings of the switching plane
/// and the elimination threshold are localized by bisection on the step;
/// sampled policies stop at every sampling instant to update the lure.
inline Trajectory integrate(const ModelParams& p, const ControlStrategy& s, const SimulationConfig& c) {
  validate(p);
  validate(s);
  validate(c);
  return detail::Integrator(p, s, c).run();
}

/// First time the max-norm of the state drops below eps. Reuses the
/// integrator's localized value when eps matches the run's threshold, else
/// interpolates log-linearly between recorded samples.
inline std::optional<double> time_to_elimination(const Trajectory& tr, double eps) {
  if (eps == tr.elimination_eps) return tr.elimination_time;
  for (std::size_t i = 0; i < tr.samples.size(); ++i) {
    const double n1 = tr.samples[i].x.max_norm();
    if (n1 >= eps) continue;
    if (i == 0) return tr.samples[0].t;
    const double n0 = tr.samples[i - 1].x.max_norm();
    const double t0 = tr.samples[i - 1].t, t1 = tr.samples[i].t;
    if (!(n1 > 0.0)) return t1;
    const double w = std::log(n0 / eps) / std::log(n0 / n1);
    return t0 + std::clamp(w, 0.0, 1.0) * (t1 - t0);
  }
  return std::nullopt;
}

struct PheromoneTotals {
  double integral = 0.0;       // individual-days
  double release_total = 0.0;  // individuals
};

inline PheromoneTotals pheromone_accounting(const Trajectory& tr) {
  return {tr.pheromone_cost_integral, tr.pheromone_release_total};
}

}  // namespace psyllid
