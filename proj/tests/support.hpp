#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "psyllid/analysis.hpp"
#include "psyllid/model.hpp"

namespace psyllid::test {

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

inline double rel_err(const State& a, const State& b) {
  const double scale = std::max({a.max_norm(), b.max_norm(), 1e-300});
  return (a - b).max_norm() / scale;
}

/// Random biologically plausible parameter sets, seeded for reproducibility.
class ParamSampler {
public:
  explicit ParamSampler(std::uint64_t seed) : rng_(seed) {}

  ModelParams operator()() {
    ModelParams p;
    p.sex_ratio = uniform(0.2, 0.8);
    p.fecundity = std::exp(uniform(std::log(0.05), std::log(20.0)));
    p.density_survival = std::exp(uniform(std::log(1e-4), std::log(1e-2)));
    p.male_mortality = uniform(0.005, 0.1);
    p.female_mortality = uniform(0.005, 0.1);
    p.mating_capacity = uniform(1.0, 3.0);
    p.mating_rate = uniform(0.05, 1.0);
    p.remating_rate = uniform(0.1, 2.0);
    return p;
  }

  /// Draws until the predicate holds.
  template <class Pred>
  ModelParams draw_until(Pred&& pred) {
    for (;;) {
      const ModelParams p = (*this)();
      if (pred(p)) return p;
    }
  }

  State state(double hi) { return {uniform(0.0, hi), uniform(0.0, hi), uniform(0.0, hi)}; }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

  std::mt19937_64& engine() { return rng_; }

private:
  std::mt19937_64 rng_;
};

/// Central finite-difference Jacobian of an arbitrary field.
template <class Field>
Matrix3 fd_jacobian(Field&& f, const State& x, double rel_h = 1e-6) {
  Matrix3 j;
  const auto base = x.as_array();
  for (int c = 0; c < 3; ++c) {
    auto up = base, down = base;
    const double h = rel_h * std::max(1.0, std::abs(base[static_cast<std::size_t>(c)]));
    up[static_cast<std::size_t>(c)] += h;
    down[static_cast<std::size_t>(c)] -= h;
    const auto fu = f(State{up[0], up[1], up[2]}).as_array();
    const auto fd = f(State{down[0], down[1], down[2]}).as_array();
    for (int r = 0; r < 3; ++r) {
      j(r, c) = (fu[static_cast<std::size_t>(r)] - fd[static_cast<std::size_t>(r)]) / (2.0 * h);
    }
  }
  return j;
}

}  // namespace psyllid::test
