#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "psyllid/analysis.hpp"
#include "psyllid/error.hpp"
#include "psyllid/model.hpp"
#include "psyllid/roots.hpp"

namespace psyllid {

struct ThresholdOptions {
  double tol = 1e-9;            // outer, relative in A_p
  double inner_tol = 1e-11;     // inner maximization, relative in A or M
  double domain_factor = 2.0;   // A search domain = factor * ln(N_M) / sigma
  std::size_t grid_points = 10000;
  int max_expansions = 60;
};

struct ThresholdResult {
  double a_p_crit = 0.0;
  double tangency_point = 0.0;  // A (scarcity system) or M (auxiliary system)
  double value_residual = 0.0;       // max of the tangency function, relative
  double derivative_residual = 0.0;  // slope of the tangency function at its peak
  int iterations = 0;
  Bracket bracket;
};

namespace detail {

// Reduction of the open-loop male-scarcity equilibrium system to a scalar
// equation in A: phi(A) = A, with M(A) and U(A) recovered afterwards.
class ScarcityReduction {
public:
  ScarcityReduction(const ModelParams& p, double alpha, double lure)
      : p_(p), alpha_(alpha), lure_(lure), d_(derived_quantities(p)) {
    if (!(d_.theta_m > 1.0)) {
      throw PreconditionError("theta_M = " + std::to_string(d_.theta_m) +
                              " <= 1: need (1-r) rho / delta > N_M");
    }
    mate_ = p.mating_capacity * p.mating_rate / (p.remating_rate + p.female_mortality);
    dr_ = p.female_mortality * p.sex_ratio;
    lure_weight_ = (alpha + p.male_mortality) / p.male_mortality;
  }

  double f(double a) const { return std::exp(-p_.density_survival * spread(a)); }

  double phi(double a) const { return d_.n_m * a * f(a) - lure_weight_ * lure_; }

  double value(double a) const { return phi(a) - a; }

  double derivative(double a) const {
    const double num = numerator(a), den = denominator(a);
    double ratio, dratio;
    if (den > 0.0) {
      ratio = num / den;
      dratio = a * (dr_ * (mate_ + 1.0) * den - num * dr_ * mate_ * (d_.theta_m - 1.0)) / (den * den);
    } else {
      ratio = (mate_ + 1.0) / (mate_ * (d_.theta_m - 1.0));
      dratio = 0.0;
    }
    const double ds = 1.0 + ratio + dratio;
    return d_.n_m * f(a) * (1.0 - p_.density_survival * a * ds) - 1.0;
  }

  State back_substitute(double a) const {
    const double den = denominator(a);
    return {dr_ * (a + lure_) * a / den, a, dr_ * mate_ * a * a / den};
  }

  double search_limit(double factor) const {
    return factor * std::log(d_.n_m) / p_.density_survival;
  }

  const DerivedQuantities& derived() const { return d_; }

private:
  double numerator(double a) const { return dr_ * lure_ + dr_ * (mate_ + 1.0) * a; }
  double denominator(double a) const {
    return (1.0 - p_.sex_ratio) * (alpha_ + p_.male_mortality) * lure_ +
           dr_ * mate_ * (d_.theta_m - 1.0) * a;
  }
  // A (1 + num / den): total population along the reduction.
  double spread(double a) const {
    if (a == 0.0) return 0.0;
    return a * (1.0 + numerator(a) / denominator(a));
  }

  ModelParams p_;
  double alpha_, lure_;
  DerivedQuantities d_;
  double mate_ = 0.0, dr_ = 0.0, lure_weight_ = 0.0;
};

inline void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("killing rate must lie in [0, 1]");
}

inline std::vector<double> grid_with(double lo, double hi, std::size_t n, double extra) {
  auto xs = linspace(lo, hi, std::max<std::size_t>(n, 2));
  if (extra > lo && extra < hi) xs.insert(std::upper_bound(xs.begin(), xs.end(), extra), extra);
  return xs;
}

}  // namespace detail

/// phi(A; A_p) - A for the open-loop male-scarcity equilibrium problem.
inline double scarcity_fixed_point_fn(double a, const ModelParams& p, double alpha, double lure) {
  return detail::ScarcityReduction(p, alpha, lure).value(a);
}

/// Exponential factor f(A; A_p) of the reduction, evaluated as written.
inline double scarcity_exponential_factor(double a, const ModelParams& p, double alpha, double lure) {
  return detail::ScarcityReduction(p, alpha, lure).f(a);
}

struct ScarcityRoots {
  std::vector<double> receptive;  // sorted A-coordinates
  std::vector<State> states;
  std::size_t count() const { return receptive.size(); }
};

/// Positive equilibria of the open-loop male-scarcity field, found by a sign
/// scan of phi(A) - A (grid plus the interior maximizer) and bisection.
inline ScarcityRoots count_equilibria_scarcity(const ModelParams& p, double alpha, double lure,
                                               const ThresholdOptions& opts = {}) {
  detail::check_alpha(alpha);
  const detail::ScarcityReduction red(p, alpha, lure);
  const double hi = red.search_limit(opts.domain_factor);
  const double lo = hi / static_cast<double>(opts.grid_points);
  auto value = [&](double a) { return red.value(a); };
  auto slope = [&](double a) { return red.derivative(a); };
  const auto peak = maximize_with_derivative(value, slope, lo, hi, opts.inner_tol);

  ScarcityRoots out;
  for (const auto& br : scan_sign_changes(value, detail::grid_with(lo, hi, opts.grid_points, peak.x))) {
    const double a = find_root_bracketed(value, br.lo, br.hi, 1e-15);
    out.receptive.push_back(a);
    out.states.push_back(red.back_substitute(a));
  }
  return out;
}

/// Critical lure above which the open-loop male-scarcity field has no
/// positive equilibrium: zero crossing of psi(A_p) = max_A [phi(A; A_p) - A].
inline ThresholdResult ap_crit(const ModelParams& p, double alpha, const ThresholdOptions& opts = {}) {
  detail::check_alpha(alpha);
  const auto d = derived_quantities(p);
  if (!(d.theta_m > 1.0)) {
    throw PreconditionError("theta_M = " + std::to_string(d.theta_m) +
                            " <= 1: need (1-r) rho / delta > N_M");
  }
  if (!(d.n_m > 1.0)) throw PreconditionError("N_M <= 1: no positive scarcity equilibrium");

  struct Peak {
    double value, at, slope;
  };
  auto psi = [&](double lure) {
    const detail::ScarcityReduction red(p, alpha, lure);
    const double hi = red.search_limit(opts.domain_factor);
    auto value = [&](double a) { return red.value(a); };
    auto slope = [&](double a) { return red.derivative(a); };
    const auto e = maximize_with_derivative(value, slope, 0.0, hi, opts.inner_tol);
    return Peak{e.value, e.x, red.derivative(e.x)};
  };

  ThresholdResult res;
  double lo = 0.0, hi = d.p_hat > 0.0 ? d.p_hat : 1.0 / p.density_survival;
  Peak at_lo = psi(lo), at_hi = psi(hi);
  int expansions = 0;
  while (at_hi.value >= 0.0) {
    if (++expansions > opts.max_expansions) {
      throw NumericalError("no sign change of psi for A_p in [0, " + std::to_string(hi) + "]");
    }
    lo = hi;
    at_lo = at_hi;
    hi *= 2.0;
    at_hi = psi(hi);
  }
  while (hi - lo > opts.tol * hi) {
    const double mid = 0.5 * (lo + hi);
    const Peak m = psi(mid);
    ++res.iterations;
    if (m.value >= 0.0) {
      lo = mid;
      at_lo = m;
    } else {
      hi = mid;
      at_hi = m;
    }
  }
  // psi is smooth in A_p; one secant step on the final bracket.
  const double w = at_lo.value / (at_lo.value - at_hi.value);
  res.a_p_crit = lo + w * (hi - lo);
  const Peak fin = psi(res.a_p_crit);
  res.tangency_point = fin.at;
  res.value_residual = std::abs(fin.value) / std::max(1.0, fin.at);
  res.derivative_residual = std::abs(fin.slope);
  res.bracket = {lo, hi};
  return res;
}

/// g(M) of the auxiliary male-scarcity system.
inline double aux_g(double m, const ModelParams& p) {
  const double n_m = derived_quantities(p).n_m;
  return ((1.0 - p.sex_ratio) * p.fecundity + p.remating_rate) * p.male_mortality * n_m * m *
         (n_m - std::exp(p.density_survival * m));
}

/// h(M; A_p, alpha) of the auxiliary male-scarcity system.
inline double aux_h(double m, const ModelParams& p, double alpha, double lure) {
  const double n_m = derived_quantities(p).n_m;
  return p.sex_ratio * p.fecundity * p.female_mortality * lure *
         (n_m + alpha / p.male_mortality * std::exp(p.density_survival * m));
}

namespace detail {

struct AuxProblem {
  const ModelParams& p;
  double alpha;
  double n_m, sigma, g_scale, h_scale, upper;

  AuxProblem(const ModelParams& params, double a) : p(params), alpha(a) {
    n_m = derived_quantities(p).n_m;
    sigma = p.density_survival;
    g_scale = ((1.0 - p.sex_ratio) * p.fecundity + p.remating_rate) * p.male_mortality * n_m;
    h_scale = p.sex_ratio * p.fecundity * p.female_mortality;
    upper = std::log(n_m) / sigma;
  }

  double g(double m) const { return aux_g(m, p); }
  double dg(double m) const {
    const double e = std::exp(sigma * m);
    return g_scale * ((n_m - e) - sigma * m * e);
  }
  double gap(double m, double lure) const { return g(m) - aux_h(m, p, alpha, lure); }
  double dgap(double m, double lure) const {
    return dg(m) - h_scale * lure * alpha / p.male_mortality * sigma * std::exp(sigma * m);
  }
};

}  // namespace detail

/// Number of positive roots of g - h on (0, ln(N_M) / sigma).
inline std::size_t count_aux_roots(const ModelParams& p, double alpha, double lure,
                                   const ThresholdOptions& opts = {}) {
  const detail::AuxProblem aux(p, alpha);
  const double lo = aux.upper / static_cast<double>(opts.grid_points), hi = aux.upper;
  auto gap = [&](double m) { return aux.gap(m, lure); };
  auto dgap = [&](double m) { return aux.dgap(m, lure); };
  const auto peak = maximize_with_derivative(gap, dgap, lo, hi, opts.inner_tol);
  return scan_sign_changes(gap, detail::grid_with(lo, hi, opts.grid_points, peak.x)).size();
}

/// Lure at which g and h become tangent; above it the auxiliary system, and
/// hence the controlled system, has only the trivial equilibrium.
inline ThresholdResult ap_crit_aux(const ModelParams& p, double alpha, const ThresholdOptions& opts = {}) {
  detail::check_alpha(alpha);
  const detail::AuxProblem aux(p, alpha);
  if (!(aux.n_m > 1.0)) throw PreconditionError("N_M <= 1: the population declines without control");

  auto dg = [&](double m) { return aux.dg(m); };
  const double m_hat = find_root_bracketed(dg, 0.0, aux.upper, opts.inner_tol);
  const double closed_form = aux.g(m_hat) / (aux.h_scale * aux.n_m);

  ThresholdResult res;
  if (alpha == 0.0) {
    res.a_p_crit = closed_form;
    res.tangency_point = m_hat;
    res.derivative_residual = std::abs(aux.dg(m_hat)) / aux.g_scale;
    res.bracket = {closed_form, closed_form};
    return res;
  }

  // h grows with alpha, so the alpha = 0 value bounds the threshold above.
  double hi = closed_form, lo = 0.5 * closed_form;
  int expansions = 0;
  while (count_aux_roots(p, alpha, lo, opts) < 2) {
    if (++expansions > opts.max_expansions) {
      throw NumericalError("no lure in (0, " + std::to_string(closed_form) +
                           "] gives two auxiliary roots");
    }
    hi = lo;
    lo *= 0.5;
  }
  while (hi - lo > opts.tol * hi) {
    const double mid = 0.5 * (lo + hi);
    ++res.iterations;
    (count_aux_roots(p, alpha, mid, opts) >= 2 ? lo : hi) = mid;
  }

  auto peak_at = [&](double lure) {
    auto gap = [&](double m) { return aux.gap(m, lure); };
    auto dgap = [&](double m) { return aux.dgap(m, lure); };
    return maximize_with_derivative(gap, dgap, 0.0, aux.upper, opts.inner_tol);
  };
  const auto plo = peak_at(lo), phi_ = peak_at(hi);
  const double w = plo.value / (plo.value - phi_.value);
  res.a_p_crit = std::isfinite(w) && w >= 0.0 && w <= 1.0 ? lo + w * (hi - lo) : 0.5 * (lo + hi);
  const auto fin = peak_at(res.a_p_crit);
  res.tangency_point = fin.x;
  res.value_residual = std::abs(fin.value) / aux.g(m_hat);
  res.derivative_residual = std::abs(aux.dgap(fin.x, res.a_p_crit)) / aux.g_scale;
  res.bracket = {lo, hi};
  return res;
}

}  // namespace psyllid
