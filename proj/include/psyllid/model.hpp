#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "psyllid/error.hpp"

namespace psyllid {

/// Biological constants of the adult psyllid model. Rates are per day,
/// population sizes are individuals.
struct ModelParams {
  double sex_ratio;         // r: fraction of emerging adults that are male
  double fecundity;         // rho: eggs per fertilized female per day
  double density_survival;  // sigma: egg-to-adult survival density parameter
  double male_mortality;    // mu
  double female_mortality;  // delta
  double mating_capacity;   // gamma: females fertilized per male
  double mating_rate;       // nu: transfer receptive -> fertilized
  double remating_rate;     // eta: transfer fertilized -> receptive

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Field-study parameter set (Valencia sweet orange on Rangpur lime).
inline constexpr ModelParams table1_params() {
  return ModelParams{0.41, 6.352, 0.001, 0.021, 0.023, 1.2, 0.25, 1.0};
}

/// Throws ConfigError when a parameter is outside its admissible range.
/// Returns soft warnings (currently only male mortality below female
/// mortality, which the biology assumes but no formula needs).
inline std::vector<std::string> validate(const ModelParams& p) {
  const std::array<std::pair<const char*, double>, 8> fields{{
      {"r", p.sex_ratio},
      {"rho", p.fecundity},
      {"sigma", p.density_survival},
      {"mu", p.male_mortality},
      {"delta", p.female_mortality},
      {"gamma", p.mating_capacity},
      {"nu", p.mating_rate},
      {"eta", p.remating_rate},
  }};
  for (const auto& [name, value] : fields) {
    if (!std::isfinite(value) || value <= 0.0) {
      throw ConfigError(std::string("parameter ") + name + " must be finite and > 0");
    }
  }
  if (p.sex_ratio >= 1.0) throw ConfigError("parameter r must lie in (0, 1)");
  if (p.mating_capacity < 1.0) throw ConfigError("parameter gamma must be >= 1");

  std::vector<std::string> warnings;
  if (p.male_mortality < p.female_mortality) {
    warnings.emplace_back("mu < delta: males are assumed to die at least as fast as females");
  }
  return warnings;
}

/// Phase point: males, mating-available females, fertilized females.
struct State {
  double males = 0.0;
  double receptive = 0.0;
  double fertilized = 0.0;

  constexpr double females() const { return receptive + fertilized; }
  constexpr double total() const { return males + receptive + fertilized; }
  double max_norm() const {
    return std::max({std::abs(males), std::abs(receptive), std::abs(fertilized)});
  }
  bool finite() const {
    return std::isfinite(males) && std::isfinite(receptive) && std::isfinite(fertilized);
  }
  constexpr std::array<double, 3> as_array() const { return {males, receptive, fertilized}; }

  constexpr State& operator+=(const State& o) {
    males += o.males;
    receptive += o.receptive;
    fertilized += o.fertilized;
    return *this;
  }
  friend constexpr State operator+(State a, const State& b) { return a += b; }
  friend constexpr State operator-(const State& a, const State& b) {
    return {a.males - b.males, a.receptive - b.receptive, a.fertilized - b.fertilized};
  }
  friend constexpr State operator*(double s, const State& a) {
    return {s * a.males, s * a.receptive, s * a.fertilized};
  }
  friend bool operator==(const State&, const State&) = default;
};

/// Trap inputs: lure strength in "false females" and the male-killing rate.
struct ControlInputs {
  double lure = 0.0;          // A_p
  double killing_rate = 0.0;  // alpha in [0, 1]
};

inline void validate(const ControlInputs& c) {
  if (!std::isfinite(c.lure) || c.lure < 0.0) throw ConfigError("lure strength must be >= 0");
  if (!(c.killing_rate >= 0.0 && c.killing_rate <= 1.0)) {
    throw ConfigError("male-killing rate must lie in [0, 1]");
  }
}

enum class Region { Abundance, Scarcity };

/// min{gamma m / (lure + a), 1}; 1 when lure + a == 0 (the result only ever
/// multiplies a, so the value there is unobservable).
inline double mating_fraction(double m, double a, double lure, double gamma) {
  const double seekers = lure + a;
  if (seekers <= 0.0) return 1.0;
  return std::min(gamma * m / seekers, 1.0);
}

/// gamma M - (A + A_p): positive in the male-abundance region, negative in
/// the male-scarcity region, zero on the switching plane.
inline double switching_value(const State& x, double lure, double gamma) {
  return gamma * x.males - (x.receptive + lure);
}

namespace detail {

inline void require_finite(const State& x) {
  if (!x.finite()) throw NumericalError("non-finite state component (corrupted state)");
}

// Per-capita removal rate of males by traps. Zero whenever the lure is off,
// including the 0/0 corner A = A_p = 0.
inline double trap_kill_rate(const ControlInputs& c, double a) {
  if (c.lure == 0.0) return 0.0;
  return c.killing_rate * c.lure / (c.lure + a);
}

// Shared assembly: `mated` is the flux A -> U.
inline State assemble(const ModelParams& p, const ControlInputs& c, const State& x, double mated) {
  const double recruits = p.fecundity * x.fertilized * std::exp(-p.density_survival * x.total());
  const double kill = trap_kill_rate(c, x.receptive);
  return {
      p.sex_ratio * recruits - kill * x.males - p.male_mortality * x.males,
      (1.0 - p.sex_ratio) * recruits - mated + p.remating_rate * x.fertilized -
          p.female_mortality * x.receptive,
      mated - p.remating_rate * x.fertilized - p.female_mortality * x.fertilized,
  };
}

}  // namespace detail

/// Controlled switched field; the min-form of the mating term makes it
/// continuous across the switching plane.
inline State rhs(const ModelParams& p, const ControlInputs& c, const State& x) {
  detail::require_finite(x);
  const double frac = mating_fraction(x.males, x.receptive, c.lure, p.mating_capacity);
  return detail::assemble(p, c, x, p.mating_rate * frac * x.receptive);
}

/// Male-abundance constituent: every receptive female mates.
inline State rhs_abundance(const ModelParams& p, const ControlInputs& c, const State& x) {
  detail::require_finite(x);
  return detail::assemble(p, c, x, p.mating_rate * x.receptive);
}

/// Male-scarcity constituent: a fraction gamma M / (A_p + A) of receptive
/// females mates.
inline State rhs_scarcity(const ModelParams& p, const ControlInputs& c, const State& x) {
  detail::require_finite(x);
  const double seekers = c.lure + x.receptive;
  const double mated =
      seekers > 0.0 ? p.mating_rate * (p.mating_capacity * x.males / seekers) * x.receptive : 0.0;
  return detail::assemble(p, c, x, mated);
}

inline State rhs_region(const ModelParams& p, const ControlInputs& c, const State& x, Region region) {
  return region == Region::Abundance ? rhs_abundance(p, c, x) : rhs_scarcity(p, c, x);
}

/// Uncontrolled model, written out on its own so that the zero-control
/// reduction of `rhs` can be checked against it.
inline State natural_rhs(const ModelParams& p, const State& x) {
  detail::require_finite(x);
  const double recruits = p.fecundity * x.fertilized * std::exp(-p.density_survival * x.total());
  const double frac = mating_fraction(x.males, x.receptive, 0.0, p.mating_capacity);
  const double mated = p.mating_rate * frac * x.receptive;
  return {
      p.sex_ratio * recruits - p.male_mortality * x.males,
      (1.0 - p.sex_ratio) * recruits - mated + p.remating_rate * x.fertilized -
          p.female_mortality * x.receptive,
      mated - p.remating_rate * x.fertilized - p.female_mortality * x.fertilized,
  };
}

struct PopulationCap {
  double value = 0.0;       // P_hat, individuals
  bool degenerate = false;  // rho <= min(mu, delta): no positive cap
};

/// Carrying capacity of the comparison Ricker equation bounding M + A + U.
inline PopulationCap population_cap(const ModelParams& p) {
  const double ratio = p.fecundity / std::min(p.male_mortality, p.female_mortality);
  if (!(ratio > 1.0)) return {0.0, true};
  return {std::log(ratio) / p.density_survival, false};
}

}  // namespace psyllid
