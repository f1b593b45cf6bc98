#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <string>

#include <Eigen/Dense>

#include "psyllid/error.hpp"
#include "psyllid/model.hpp"

namespace psyllid {

using Matrix3 = Eigen::Matrix3d;

/// Threshold quantities that depend only on the biological parameters.
struct DerivedQuantities {
  double n_m = 0.0;       // male basic offspring number
  double n_f = 0.0;       // female basic offspring number
  double theta_m = 0.0;   // existence ratio of the male-scarcity equilibrium
  double vartheta = 0.0;  // standardized mortality (1 - r) mu + r delta
  double p_hat = 0.0;     // population cap
};

inline DerivedQuantities derived_quantities(const ModelParams& p) {
  const double r = p.sex_ratio, rho = p.fecundity, mu = p.male_mortality,
               delta = p.female_mortality, gamma = p.mating_capacity, nu = p.mating_rate,
               eta = p.remating_rate;
  DerivedQuantities d;
  d.n_m = gamma * r * rho * nu / (mu * (delta + eta));
  d.n_f = (1.0 - r) * rho * nu / (delta * (delta + eta + nu));
  d.theta_m = (1.0 - r) * mu * (delta + eta) / (gamma * r * delta * nu);
  d.vartheta = (1.0 - r) * mu + r * delta;
  d.p_hat = population_cap(p).value;
  return d;
}

/// Male offspring number of the closed-loop scarcity system with feedback
/// A_p = k A and killing rate alpha; equals n_m at k = 0.
inline double controlled_male_offspring(const ModelParams& p, double gain, double alpha) {
  const double mu = p.male_mortality;
  return p.sex_ratio * p.fecundity * p.mating_capacity * p.mating_rate /
         ((p.female_mortality + p.remating_rate) * (gain * (alpha + mu) + mu));
}

enum class EquilibriumLabel { E0, E1, E2, E1P_open, E1P_closed, E2P_closed };
enum class Stability { LAS, UnstableSaddle, Repeller, NotApplicable };
enum class PwsClass { Regular, Virtual, OnSwitchingPlane, NotApplicable };

inline const char* to_string(EquilibriumLabel l) {
  switch (l) {
    case EquilibriumLabel::E0: return "E0";
    case EquilibriumLabel::E1: return "E1";
    case EquilibriumLabel::E2: return "E2";
    case EquilibriumLabel::E1P_open: return "E1P_open";
    case EquilibriumLabel::E1P_closed: return "E1P_closed";
    case EquilibriumLabel::E2P_closed: return "E2P_closed";
  }
  return "?";
}
inline const char* to_string(Stability s) {
  switch (s) {
    case Stability::LAS: return "LAS";
    case Stability::UnstableSaddle: return "Unstable-saddle";
    case Stability::Repeller: return "Repeller";
    case Stability::NotApplicable: return "NotApplicable";
  }
  return "?";
}
inline const char* to_string(PwsClass c) {
  switch (c) {
    case PwsClass::Regular: return "Regular";
    case PwsClass::Virtual: return "Virtual";
    case PwsClass::OnSwitchingPlane: return "OnSwitchingPlane";
    case PwsClass::NotApplicable: return "NotApplicable";
  }
  return "?";
}
inline const char* to_string(Region r) {
  return r == Region::Abundance ? "abundance" : "scarcity";
}

/// How the lure is set for the field an equilibrium belongs to: a fixed
/// amount (open loop) or proportional to wild receptive females (closed loop).
struct ControlLaw {
  double killing_rate = 0.0;
  double lure = 0.0;
  double gain = 0.0;
  bool closed_loop = false;

  static ControlLaw none() { return {}; }
  static ControlLaw open(double alpha, double lure) { return {alpha, lure, 0.0, false}; }
  static ControlLaw feedback(double alpha, double gain) { return {alpha, 0.0, gain, true}; }

  ControlInputs inputs_at(const State& x) const {
    return {closed_loop ? gain * x.receptive : lure, killing_rate};
  }
};

/// Characteristic polynomial lambda^3 + a1 lambda^2 + a2 lambda + a3 and the
/// Routh-Hurwitz test on its coefficients.
struct RouthHurwitz {
  double a1 = 0.0, a2 = 0.0, a3 = 0.0;

  double hurwitz_minor() const { return a1 * a2 - a3; }
  bool stable() const { return a1 > 0.0 && a3 > 0.0 && hurwitz_minor() > 0.0; }
};

inline RouthHurwitz routh_hurwitz(const Matrix3& j) {
  const double minors = (j(0, 0) * j(1, 1) - j(0, 1) * j(1, 0)) +
                        (j(0, 0) * j(2, 2) - j(0, 2) * j(2, 0)) +
                        (j(1, 1) * j(2, 2) - j(1, 2) * j(2, 1));
  return {-j.trace(), minors, -j.determinant()};
}

struct StabilityReport {
  Stability verdict = Stability::NotApplicable;
  std::array<std::complex<double>, 3> eigenvalues{};
  RouthHurwitz rh;
  bool rh_agrees = true;
  Matrix3 jacobian = Matrix3::Zero();
};

struct EquilibriumReport {
  EquilibriumLabel label = EquilibriumLabel::E0;
  State coords;
  bool exists = false;
  std::string existence_trace;
  Region region = Region::Abundance;  // constituent field the point solves
  ControlLaw law;
  double residual = 0.0;  // max-norm of that field at coords
  StabilityReport stability;
  PwsClass pws_class = PwsClass::NotApplicable;
};

/// Analytic Jacobian of the selected open-loop constituent field.
inline Matrix3 jacobian(const ModelParams& p, const ControlInputs& c, const State& x, Region region) {
  const double r = p.sex_ratio, rho = p.fecundity, sigma = p.density_survival,
               mu = p.male_mortality, delta = p.female_mortality, gamma = p.mating_capacity,
               nu = p.mating_rate, eta = p.remating_rate;
  const double e = std::exp(-sigma * x.total());
  const double dr_dpop = -sigma * rho * x.fertilized * e;  // d(recruits)/dM = d/dA
  const double dr_du = rho * e * (1.0 - sigma * x.fertilized);

  const double seekers = c.lure + x.receptive;
  double kill = 0.0, dkill_da = 0.0;
  if (c.lure != 0.0) {
    kill = c.killing_rate * c.lure / seekers;
    dkill_da = -c.killing_rate * c.lure / (seekers * seekers);
  }

  // Partial derivatives of the mating flux A -> U.
  double dmate_dm = 0.0, dmate_da = 0.0;
  if (region == Region::Abundance) {
    dmate_da = nu;
  } else if (seekers > 0.0) {
    dmate_dm = nu * gamma * x.receptive / seekers;
    dmate_da = nu * gamma * x.males * c.lure / (seekers * seekers);
  } else {
    dmate_dm = nu * gamma;  // limit of A / (A_p + A) along A_p = 0
  }

  Matrix3 j;
  j << r * dr_dpop - kill - mu, r * dr_dpop - dkill_da * x.males, r * dr_du,
      (1.0 - r) * dr_dpop - dmate_dm, (1.0 - r) * dr_dpop - dmate_da - delta,
      (1.0 - r) * dr_du + eta,
      dmate_dm, dmate_da, -(eta + delta);
  return j;
}

/// Jacobian of the closed-loop constituent field where A_p = gain * A, so the
/// per-capita trap kill is alpha k / (k + 1) and the scarcity mating flux is
/// nu gamma M / (k + 1).
inline Matrix3 closed_loop_jacobian(const ModelParams& p, double alpha, double gain, const State& x,
                                    Region region) {
  const double r = p.sex_ratio, rho = p.fecundity, sigma = p.density_survival,
               mu = p.male_mortality, delta = p.female_mortality, gamma = p.mating_capacity,
               nu = p.mating_rate, eta = p.remating_rate;
  const double e = std::exp(-sigma * x.total());
  const double dr_dpop = -sigma * rho * x.fertilized * e;
  const double dr_du = rho * e * (1.0 - sigma * x.fertilized);
  const double kill = alpha * gain / (gain + 1.0);

  const double dmate_dm = region == Region::Abundance ? 0.0 : nu * gamma / (gain + 1.0);
  const double dmate_da = region == Region::Abundance ? nu : 0.0;

  Matrix3 j;
  j << r * dr_dpop - kill - mu, r * dr_dpop, r * dr_du,
      (1.0 - r) * dr_dpop - dmate_dm, (1.0 - r) * dr_dpop - dmate_da - delta,
      (1.0 - r) * dr_du + eta,
      dmate_dm, dmate_da, -(eta + delta);
  return j;
}

inline Matrix3 jacobian(const ModelParams& p, const ControlLaw& law, const State& x, Region region) {
  if (law.closed_loop) return closed_loop_jacobian(p, law.killing_rate, law.gain, x, region);
  return jacobian(p, ControlInputs{law.lure, law.killing_rate}, x, region);
}

/// Field of the constituent system an equilibrium belongs to.
inline State field(const ModelParams& p, const ControlLaw& law, const State& x, Region region) {
  return rhs_region(p, law.inputs_at(x), x, region);
}

namespace detail {

// Closed-form Routh-Hurwitz coefficients at the positive natural equilibria.
inline RouthHurwitz rh_closed_form_e1(const ModelParams& p, const State& e1) {
  const auto d = derived_quantities(p);
  const double mu = p.male_mortality, delta = p.female_mortality, nu = p.mating_rate,
               eta = p.remating_rate;
  const double s = p.fecundity / d.n_f * p.density_survival * e1.fertilized;
  return {mu + nu + eta + 2.0 * delta + s,
          mu * (nu + delta) + mu * (eta + delta) + (d.vartheta + nu + eta + delta) * s,
          d.vartheta * (nu + eta + delta) * s};
}

inline RouthHurwitz rh_closed_form_e2(const ModelParams& p, const State& e2) {
  const auto d = derived_quantities(p);
  const double mu = p.male_mortality, delta = p.female_mortality, eta = p.remating_rate;
  const double s = mu * p.density_survival * e2.males / p.sex_ratio;
  return {mu + eta + 2.0 * delta + s, delta * (mu + eta + delta) + (eta + delta + d.vartheta) * s,
          (eta + delta) * d.vartheta * s};
}

inline double relative_gap(const State& a, const State& b) {
  const double scale = std::max({a.max_norm(), b.max_norm(), 1e-300});
  return (a - b).max_norm() / scale;
}

}  // namespace detail

/// Eigenvalue verdict plus Routh-Hurwitz corroboration. At the positive
/// natural equilibria the coefficients come from their closed forms; elsewhere
/// from the principal minors of the Jacobian.
inline StabilityReport stability_verdict(const ModelParams& p, const EquilibriumReport& report) {
  StabilityReport out;
  if (!report.exists) return out;

  out.jacobian = jacobian(p, report.law, report.coords, report.region);
  Eigen::EigenSolver<Matrix3> solver(out.jacobian, /*computeEigenvectors=*/false);
  const auto ev = solver.eigenvalues();
  for (int i = 0; i < 3; ++i) out.eigenvalues[static_cast<std::size_t>(i)] = ev(i);
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end(), [](auto a, auto b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });

  const bool natural = !report.law.closed_loop && report.law.lure == 0.0;
  if (natural && report.label == EquilibriumLabel::E1) {
    out.rh = detail::rh_closed_form_e1(p, report.coords);
  } else if (natural && report.label == EquilibriumLabel::E2) {
    out.rh = detail::rh_closed_form_e2(p, report.coords);
  } else {
    out.rh = routh_hurwitz(out.jacobian);
  }

  int positive = 0, negative = 0;
  for (const auto& l : out.eigenvalues) {
    if (l.real() < 0.0) ++negative;
    else ++positive;
  }
  out.verdict = positive == 0 ? Stability::LAS
                : negative == 0 ? Stability::Repeller
                                : Stability::UnstableSaddle;

  // Only a decisive spectrum has to match; eigenvalues within rounding of the
  // imaginary axis make either answer defensible.
  const double scale = std::max(out.jacobian.cwiseAbs().maxCoeff(), 1e-300);
  double closest = scale;
  for (const auto& l : out.eigenvalues) closest = std::min(closest, std::abs(l.real()));
  const bool decisive = closest > 1e-9 * scale;
  out.rh_agrees = (out.rh.stable() == (out.verdict == Stability::LAS)) || !decisive;
  if (!out.rh_agrees) {
    throw ConsistencyError(std::string("Routh-Hurwitz and eigenvalue verdicts disagree at ") +
                           to_string(report.label));
  }
  return out;
}

namespace detail {

// Regular when the point lies in the region of the field it solves.
inline PwsClass classify_point(const ModelParams& p, const EquilibriumReport& rep) {
  const auto c = rep.law.inputs_at(rep.coords);
  const double s = switching_value(rep.coords, c.lure, p.mating_capacity);
  const double scale = p.mating_capacity * rep.coords.males + rep.coords.receptive + c.lure;
  if (std::abs(s) <= 1e-9 * scale) return PwsClass::OnSwitchingPlane;
  const bool inside = rep.region == Region::Abundance ? s > 0.0 : s < 0.0;
  return inside ? PwsClass::Regular : PwsClass::Virtual;
}

inline EquilibriumReport finish(const ModelParams& p, EquilibriumReport rep) {
  if (rep.exists && rep.label != EquilibriumLabel::E0) rep.pws_class = classify_point(p, rep);
  if (rep.exists) {
    rep.residual = field(p, rep.law, rep.coords, rep.region).max_norm();
    rep.stability = stability_verdict(p, rep);
  }
  return rep;
}

}  // namespace detail

/// Trivial equilibrium, linearised in the requested constituent field.
inline EquilibriumReport equilibrium_E0(const ModelParams& p, Region region = Region::Abundance) {
  EquilibriumReport rep;
  rep.label = EquilibriumLabel::E0;
  rep.region = region;
  rep.exists = true;
  rep.existence_trace = "always exists";
  rep.pws_class = PwsClass::OnSwitchingPlane;
  return detail::finish(p, rep);
}

struct PwsClassification {
  PwsClass e1 = PwsClass::NotApplicable;
  PwsClass e2 = PwsClass::NotApplicable;
};

inline PwsClassification classify_pws(const ModelParams& p);

/// Positive equilibrium of the male-abundance field.
inline EquilibriumReport equilibrium_E1(const ModelParams& p) {
  const auto d = derived_quantities(p);
  EquilibriumReport rep;
  rep.label = EquilibriumLabel::E1;
  rep.region = Region::Abundance;
  rep.exists = d.n_f > 1.0;
  rep.existence_trace = "N_F = " + std::to_string(d.n_f) + (rep.exists ? " > 1" : " <= 1");

  const double r = p.sex_ratio, mu = p.male_mortality, delta = p.female_mortality,
               nu = p.mating_rate, eta = p.remating_rate;
  const double level = d.n_f > 1.0 ? std::log(d.n_f) / p.density_survival : 0.0;
  rep.coords = {
      r * delta / d.vartheta * level,
      (1.0 - r) * mu / d.vartheta * (delta + eta) / (delta + eta + nu) * level,
      (1.0 - r) * mu / d.vartheta * nu / (delta + eta + nu) * level,
  };
  rep = detail::finish(p, rep);
  rep.pws_class = classify_pws(p).e1;
  return rep;
}

/// The two algebraic forms of the positive male-scarcity equilibrium.
struct E2Forms {
  State by_theta;      // written through theta_M
  State by_mortality;  // written through the standardized mortality
};

inline E2Forms equilibrium_E2_forms(const ModelParams& p) {
  const auto d = derived_quantities(p);
  const double r = p.sex_ratio, rho = p.fecundity, mu = p.male_mortality,
               delta = p.female_mortality, gamma = p.mating_capacity, nu = p.mating_rate,
               eta = p.remating_rate;
  const double level = std::log(d.n_m) / p.density_survival;
  const double denom = gamma * nu * d.theta_m + eta + delta;
  E2Forms f;
  f.by_theta = {(delta + eta) / denom * level, gamma * nu * (d.theta_m - 1.0) / denom * level,
                gamma * nu / denom * level};
  f.by_mortality = {r * delta / d.vartheta * level,
                    mu / d.vartheta * delta / rho * ((1.0 - r) * rho / delta - d.n_m) * level,
                    mu / d.vartheta * delta / rho * d.n_m * level};
  return f;
}

/// Positive equilibrium of the male-scarcity field. Both closed forms are
/// evaluated and must agree.
inline EquilibriumReport equilibrium_E2(const ModelParams& p) {
  const auto d = derived_quantities(p);
  EquilibriumReport rep;
  rep.label = EquilibriumLabel::E2;
  rep.region = Region::Scarcity;
  const bool nm_ok = d.n_m > 1.0, theta_ok = d.theta_m > 1.0;
  rep.exists = nm_ok && theta_ok;
  if (!nm_ok) {
    rep.existence_trace = "N_M = " + std::to_string(d.n_m) + " <= 1";
  } else if (!theta_ok) {
    rep.existence_trace = "theta_M = " + std::to_string(d.theta_m) +
                          " <= 1 (need (1-r) rho / delta > N_M)";
  } else {
    rep.existence_trace = "N_M > 1 and theta_M > 1";
  }
  if (!rep.exists) return rep;

  const auto forms = equilibrium_E2_forms(p);
  if (detail::relative_gap(forms.by_theta, forms.by_mortality) > 1e-12) {
    throw ConsistencyError("closed forms of E2 disagree beyond 1e-12 relative");
  }
  rep.coords = forms.by_theta;
  rep = detail::finish(p, rep);
  rep.pws_class = classify_pws(p).e2;
  return rep;
}

/// Regular/virtual position of E1 and E2 relative to the natural switching
/// plane. Offspring numbers within 1e-9 relative count as equal.
inline PwsClassification classify_pws(const ModelParams& p) {
  const auto d = derived_quantities(p);
  PwsClassification out;
  const bool equal = std::abs(d.n_m - d.n_f) <= 1e-9 * std::max(d.n_m, d.n_f);
  if (equal && d.n_f > 1.0) {
    out.e1 = out.e2 = PwsClass::OnSwitchingPlane;
    return out;
  }
  if (d.n_f > 1.0) out.e1 = d.n_m > d.n_f ? PwsClass::Regular : PwsClass::Virtual;
  if (d.n_m > 1.0 && d.theta_m > 1.0) out.e2 = d.n_f > d.n_m ? PwsClass::Regular : PwsClass::Virtual;
  return out;
}

/// Next-generation matrices at the origin for the closed-loop fields.
struct NextGeneration {
  Matrix3 f, v1, v2;
  Matrix3 fv1_inv, fv2_inv;
  double rho1 = 0.0;  // spectral radius of F V1^-1
  double rho2 = 0.0;  // spectral radius of F V2^-1
};

inline double spectral_radius(const Matrix3& m) {
  Eigen::EigenSolver<Matrix3> solver(m, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

inline NextGeneration ngm_builder(const ModelParams& p, double gain, double alpha) {
  if (!(gain >= 0.0)) throw ConfigError("feedback gain must be >= 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("killing rate must lie in [0, 1]");
  const double r = p.sex_ratio, rho = p.fecundity, mu = p.male_mortality,
               delta = p.female_mortality, gamma = p.mating_capacity, nu = p.mating_rate,
               eta = p.remating_rate;
  const double male_loss = alpha * gain / (gain + 1.0) + mu;
  const double mating = gamma * nu / (gain + 1.0);

  NextGeneration ngm;
  ngm.f << 0, 0, r * rho, 0, 0, (1.0 - r) * rho, 0, 0, 0;
  ngm.v1 << male_loss, 0, 0, 0, nu + delta, -eta, 0, -nu, eta + delta;
  ngm.v2 << male_loss, 0, 0, mating, delta, -eta, -mating, 0, eta + delta;

  for (const Matrix3* v : {&ngm.v1, &ngm.v2}) {
    if (std::abs(v->determinant()) < 1e-300) throw NumericalError("singular transition matrix V");
  }
  ngm.fv1_inv = ngm.f * ngm.v1.inverse();
  ngm.fv2_inv = ngm.f * ngm.v2.inverse();
  ngm.rho1 = spectral_radius(ngm.fv1_inv);
  ngm.rho2 = spectral_radius(ngm.fv2_inv);

  const auto d = derived_quantities(p);
  const double n_m_tilde = controlled_male_offspring(p, gain, alpha);
  if (std::abs(ngm.rho1 - d.n_f) > 1e-12 * d.n_f ||
      std::abs(ngm.rho2 - n_m_tilde) > 1e-12 * n_m_tilde) {
    throw ConsistencyError("next-generation spectral radii disagree with closed forms");
  }
  return ngm;
}

struct GainThreshold {
  double value = 0.0;
  std::string note;
};

/// Smallest feedback gain that pushes the controlled male offspring number
/// below one, from a given N_M.
inline GainThreshold k_star(double n_m, double mu, double alpha) {
  if (n_m <= 1.0) return {0.0, "N_M <= 1: population declines without control"};
  return {mu * (n_m - 1.0) / (alpha + mu), {}};
}

inline GainThreshold k_star(const ModelParams& p, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("killing rate must lie in [0, 1]");
  return k_star(derived_quantities(p).n_m, p.male_mortality, alpha);
}

/// Coefficients of the quadratic whose positive root is the receptive-female
/// coordinate of the open-loop abundance equilibrium.
struct Quadratic {
  double a = 0.0, b = 0.0, c = 0.0;
  double discriminant() const { return b * b - 4.0 * a * c; }
  // Roots without cancellation: q = -(b + sign(b) sqrt(D)) / 2.
  std::array<double, 2> roots() const {
    const double sq = std::sqrt(std::max(discriminant(), 0.0));
    const double q = -0.5 * (b + std::copysign(sq, b));
    if (q == 0.0) return {0.0, 0.0};
    return {q / a, c / q};
  }
};

inline Quadratic open_loop_abundance_quadratic(const ModelParams& p, double alpha, double lure) {
  const auto d = derived_quantities(p);
  const double r = p.sex_ratio, mu = p.male_mortality, delta = p.female_mortality,
               nu = p.mating_rate, eta = p.remating_rate;
  const double level = std::log(d.n_f) / p.density_survival;
  const double stretch = (delta + nu + eta) / (delta + eta);
  return {stretch * d.vartheta / (1.0 - r),
          (d.vartheta / (1.0 - r) + alpha) * stretch * lure - mu * level,
          -(mu + alpha) * lure * level};
}

inline EquilibriumReport equilibrium_E1P_open(const ModelParams& p, double alpha, double lure) {
  if (!(lure >= 0.0)) throw ConfigError("lure strength must be >= 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("killing rate must lie in [0, 1]");
  const auto d = derived_quantities(p);
  EquilibriumReport rep;
  rep.label = EquilibriumLabel::E1P_open;
  rep.region = Region::Abundance;
  rep.law = ControlLaw::open(alpha, lure);
  rep.exists = d.n_f > 1.0;
  rep.existence_trace = "N_F = " + std::to_string(d.n_f) + (rep.exists ? " > 1" : " <= 1");
  if (!rep.exists) return rep;

  const auto quad = open_loop_abundance_quadratic(p, alpha, lure);
  const auto roots = quad.roots();
  const double a_star = std::max(roots[0], roots[1]);

  const double mu = p.male_mortality, delta = p.female_mortality, nu = p.mating_rate,
               eta = p.remating_rate;
  const double kill = lure == 0.0 ? 0.0 : alpha * lure / (a_star + lure);
  const double u_star = nu / (delta + eta) * a_star;
  const double m_star = p.sex_ratio * p.fecundity / (mu + kill) / d.n_f * u_star;
  rep.coords = {m_star, a_star, u_star};

  const double level = std::log(d.n_f) / p.density_survival;
  if (std::abs(rep.coords.total() - level) > 1e-10 * level) {
    throw ConsistencyError("open-loop abundance equilibrium violates the total-population identity");
  }
  return detail::finish(p, rep);
}

inline EquilibriumReport equilibrium_E1P_closed(const ModelParams& p, double alpha, double gain) {
  if (!(gain >= 0.0)) throw ConfigError("feedback gain must be >= 0");
  const auto d = derived_quantities(p);
  EquilibriumReport rep;
  rep.label = EquilibriumLabel::E1P_closed;
  rep.region = Region::Abundance;
  rep.law = ControlLaw::feedback(alpha, gain);
  rep.exists = d.n_f > 1.0;
  rep.existence_trace = "N_F = " + std::to_string(d.n_f) + (rep.exists ? " > 1" : " <= 1");
  if (!rep.exists) return rep;

  const double r = p.sex_ratio, mu = p.male_mortality, delta = p.female_mortality,
               nu = p.mating_rate, eta = p.remating_rate, k = gain;
  const double level = std::log(d.n_f) / p.density_survival;
  const double loss = alpha * k + (k + 1.0) * mu;
  const double denom = (k + 1.0) * r * delta + loss * (1.0 - r);
  rep.coords = {(k + 1.0) * r * delta / denom * level,
                (eta + delta) * (1.0 - r) / (nu + eta + delta) * loss / denom * level,
                nu * (1.0 - r) / (nu + eta + delta) * loss / denom * level};
  return detail::finish(p, rep);
}

/// Positive equilibrium of the closed-loop scarcity field. Exists while the
/// controlled male offspring number stays above one (gain below k*).
inline EquilibriumReport equilibrium_E2P_closed(const ModelParams& p, double alpha, double gain) {
  if (!(gain >= 0.0)) throw ConfigError("feedback gain must be >= 0");
  EquilibriumReport rep;
  rep.label = EquilibriumLabel::E2P_closed;
  rep.region = Region::Scarcity;
  rep.law = ControlLaw::feedback(alpha, gain);
  const double n_m_tilde = controlled_male_offspring(p, gain, alpha);
  const double theta_tilde = (1.0 - p.sex_ratio) * p.fecundity / p.female_mortality / n_m_tilde;
  rep.exists = n_m_tilde > 1.0 && theta_tilde > 1.0;
  rep.existence_trace = "controlled N_M = " + std::to_string(n_m_tilde) +
                        (n_m_tilde > 1.0 ? " > 1" : " <= 1 (gain >= k*)");
  if (!rep.exists) return rep;

  const double gamma_nu = p.mating_capacity * p.mating_rate;
  const double outflow = (gain + 1.0) * (p.female_mortality + p.remating_rate);
  const double denom = gamma_nu * theta_tilde + outflow;
  const double level = std::log(n_m_tilde) / p.density_survival;
  rep.coords = {outflow / denom * level, gamma_nu * (theta_tilde - 1.0) / denom * level,
                gamma_nu / denom * level};
  return detail::finish(p, rep);
}

// Local-stability regions stated for the constituent fields, as predicates.
inline bool e0_las_under_abundance(const ModelParams& p) { return derived_quantities(p).n_f < 1.0; }
inline bool e0_las_under_scarcity(const ModelParams& p) { return derived_quantities(p).n_m < 1.0; }
inline bool e1_las(const ModelParams& p) { return derived_quantities(p).n_f > 1.0; }
inline bool e2_las(const ModelParams& p) {
  const auto d = derived_quantities(p);
  return d.n_m > 1.0 && d.theta_m > 1.0;
}
inline bool e0_las_closed_loop_scarcity(const ModelParams& p, double alpha, double gain) {
  return gain > k_star(p, alpha).value;
}

}  // namespace psyllid
