#include <gtest/gtest.h>

#include <cmath>

#include <boost/multiprecision/cpp_int.hpp>

#include "psyllid/analysis.hpp"
#include "support.hpp"

using namespace psyllid;
using psyllid::test::fd_jacobian;
using psyllid::test::ParamSampler;
using psyllid::test::rel_err;

namespace {

using Rational = boost::multiprecision::cpp_rational;

// Exact rational evaluation of the offspring numbers from the double inputs.
struct ExactOffspring {
  double n_m, n_f;
};

ExactOffspring exact_offspring(const ModelParams& p) {
  const Rational r(p.sex_ratio), rho(p.fecundity), mu(p.male_mortality), delta(p.female_mortality),
      gamma(p.mating_capacity), nu(p.mating_rate), eta(p.remating_rate);
  const Rational n_m = gamma * r * rho * nu / (mu * (delta + eta));
  const Rational n_f = (1 - r) * rho * nu / (delta * (delta + eta + nu));
  return {static_cast<double>(n_m), static_cast<double>(n_f)};
}

double level(const ModelParams& p, double n) { return std::log(n) / p.density_survival; }

// Parameters with N_M = N_F = 2 built from Table 1 by solving for rho and gamma.
ModelParams coalescing_params() {
  auto p = table1_params();
  const double d = p.female_mortality, e = p.remating_rate, n = p.mating_rate, r = p.sex_ratio;
  p.fecundity = 2.0 * d * (d + e + n) / ((1.0 - r) * n);
  p.mating_capacity = 2.0 * p.male_mortality * (d + e) / (r * p.fecundity * n);
  return p;
}

}  // namespace

TEST(Derived, Table1Values) {
  const auto d = derived_quantities(table1_params());
  EXPECT_NEAR(d.n_m, 36.37, 0.005);
  EXPECT_NEAR(d.n_f, 32.00, 0.005);
  EXPECT_NEAR(d.vartheta, 0.02182, 1e-15);
  EXPECT_NEAR(d.theta_m, 4.48, 0.005);
  EXPECT_GT(d.theta_m, 1.0);
}

TEST(Derived, MatchesRationalOracle) {
  ParamSampler s(101);
  for (int i = 0; i < 200; ++i) {
    const auto p = i == 0 ? table1_params() : s();
    const auto d = derived_quantities(p);
    const auto exact = exact_offspring(p);
    ASSERT_LT(rel_err(d.n_m, exact.n_m), 1e-12);
    ASSERT_LT(rel_err(d.n_f, exact.n_f), 1e-12);
  }
}

TEST(Derived, PaperValuesWithinFourPercent) {
  const auto d = derived_quantities(table1_params());
  EXPECT_LT(rel_err(d.n_m, 37.4256), 0.04);
  EXPECT_LT(rel_err(d.n_f, 32.2013), 0.04);
}

TEST(Derived, VarthetaBetweenMortalities) {
  ParamSampler s(103);
  for (int i = 0; i < 1000; ++i) {
    const auto p = s();
    if (p.male_mortality == p.female_mortality) continue;
    const auto d = derived_quantities(p);
    ASSERT_GT(d.vartheta, std::min(p.male_mortality, p.female_mortality));
    ASSERT_LT(d.vartheta, std::max(p.male_mortality, p.female_mortality));
    ASSERT_GT(d.n_m, 0.0);
    ASSERT_GT(d.n_f, 0.0);
    ASSERT_GT(d.theta_m, 0.0);
  }
}

TEST(E1, Table1NearFieldInitialization) {
  const auto p = table1_params();
  const auto e1 = equilibrium_E1(p);
  ASSERT_TRUE(e1.exists);
  EXPECT_LT(rel_err(e1.coords.males, 1519.0), 0.02);
  EXPECT_LT(rel_err(e1.coords.receptive, 1590.0), 0.02);
  EXPECT_LT(rel_err(e1.coords.fertilized, 383.0), 0.02);
  EXPECT_LT(natural_rhs(p, e1.coords).max_norm(), 1e-9);
  EXPECT_EQ(e1.stability.verdict, Stability::LAS);
  EXPECT_EQ(e1.pws_class, PwsClass::Regular);
}

TEST(E1, BoundaryAtUnitFemaleOffspring) {
  auto p = table1_params();
  const double d = p.female_mortality, e = p.remating_rate, n = p.mating_rate;
  p.fecundity = d * (d + e + n) / ((1.0 - p.sex_ratio) * n);
  const auto e1 = equilibrium_E1(p);
  EXPECT_NEAR(derived_quantities(p).n_f, 1.0, 1e-14);
  EXPECT_LT(e1.coords.max_norm(), 1e-9);
}

TEST(E2, Table1ExistsAndIsVirtual) {
  const auto p = table1_params();
  const auto e2 = equilibrium_E2(p);
  ASSERT_TRUE(e2.exists);
  EXPECT_LT(rel_err(e2.coords.total(), level(p, derived_quantities(p).n_m)), 1e-10);
  EXPECT_EQ(e2.pws_class, PwsClass::Virtual);
  EXPECT_EQ(e2.stability.verdict, Stability::LAS);
  const auto d = derived_quantities(p);
  // Male coordinate written through the standardized mortality.
  const double m2 = p.sex_ratio * p.female_mortality / d.vartheta * level(p, d.n_m);
  EXPECT_LT(rel_err(e2.coords.males, m2), 1e-12);
}

TEST(E2, ThetaBelowOneBlocksExistence) {
  auto p = table1_params();
  p.mating_capacity = 10.0;  // theta_M scales with 1/gamma
  const auto d = derived_quantities(p);
  ASSERT_GT(d.n_m, 1.0);
  ASSERT_LT(d.theta_m, 1.0);
  const auto e2 = equilibrium_E2(p);
  EXPECT_FALSE(e2.exists);
  EXPECT_NE(e2.existence_trace.find("theta_M"), std::string::npos);
}

TEST(E2, ClosedFormsAgree) {
  ParamSampler s(107);
  int n = 0;
  while (n < 200) {
    const auto p = s.draw_until([](const ModelParams& q) { return e2_las(q); });
    const auto f = equilibrium_E2_forms(p);
    ASSERT_LT(rel_err(f.by_theta, f.by_mortality), 1e-12);
    ++n;
  }
}

TEST(E0, SaddleUnderBothFieldsForTable1) {
  const auto p = table1_params();
  EXPECT_EQ(equilibrium_E0(p, Region::Abundance).stability.verdict, Stability::UnstableSaddle);
  EXPECT_EQ(equilibrium_E0(p, Region::Scarcity).stability.verdict, Stability::UnstableSaddle);
}

TEST(E0, StableWhenFecundityCollapses) {
  auto p = table1_params();
  p.fecundity /= 50.0;
  ASSERT_LT(derived_quantities(p).n_f, 1.0);
  EXPECT_EQ(equilibrium_E0(p).stability.verdict, Stability::LAS);
  EXPECT_FALSE(equilibrium_E1(p).exists);
}

TEST(Jacobian, AtOriginMatchesTextbookPattern) {
  const auto p = table1_params();
  const auto j1 = jacobian(p, ControlInputs{}, State{}, Region::Abundance);
  Matrix3 expect1;
  expect1 << -p.male_mortality, 0, p.sex_ratio * p.fecundity, 0, -(p.mating_rate + p.female_mortality),
      (1 - p.sex_ratio) * p.fecundity + p.remating_rate, 0, p.mating_rate,
      -(p.remating_rate + p.female_mortality);
  EXPECT_LT((j1 - expect1).cwiseAbs().maxCoeff(), 1e-15);

  const auto j2 = jacobian(p, ControlInputs{}, State{}, Region::Scarcity);
  EXPECT_NEAR(j2(2, 0), p.mating_capacity * p.mating_rate, 1e-15);
  EXPECT_EQ(j2(2, 1), 0.0);
  EXPECT_EQ(j2(2, 2), -(p.female_mortality + p.remating_rate));
}

TEST(Jacobian, MatchesFiniteDifferences) {
  ParamSampler s(109);
  for (int i = 0; i < 100; ++i) {
    const auto p = s();
    const State x{s.uniform(10, 3000), s.uniform(10, 3000), s.uniform(10, 3000)};
    const double alpha = s.uniform(0, 1), lure = s.uniform(0, 2000), gain = s.uniform(0, 10);
    for (Region region : {Region::Abundance, Region::Scarcity}) {
      for (const ControlLaw law : {ControlLaw::open(alpha, lure), ControlLaw::feedback(alpha, gain)}) {
        const auto analytic = jacobian(p, law, x, region);
        const auto numeric = fd_jacobian([&](const State& y) { return field(p, law, y, region); }, x);
        const double scale = analytic.cwiseAbs().maxCoeff();
        ASSERT_LT((analytic - numeric).cwiseAbs().maxCoeff() / scale, 1e-6)
            << "sample " << i << " region " << to_string(region) << " closed " << law.closed_loop;
      }
    }
  }
}

TEST(Stability, RouthHurwitzClosedFormsMatchMinors) {
  ParamSampler s(113);
  for (int i = 0; i < 100; ++i) {
    const auto p = s.draw_until([](const ModelParams& q) { return e1_las(q) && e2_las(q); });
    const auto e1 = equilibrium_E1(p);
    const auto e2 = equilibrium_E2(p);
    const auto m1 = routh_hurwitz(jacobian(p, ControlInputs{}, e1.coords, Region::Abundance));
    const auto m2 = routh_hurwitz(jacobian(p, ControlInputs{}, e2.coords, Region::Scarcity));
    for (const auto& [closed, minors] : {std::pair{e1.stability.rh, m1}, std::pair{e2.stability.rh, m2}}) {
      EXPECT_LT(rel_err(closed.a1, minors.a1), 1e-9);
      EXPECT_LT(rel_err(closed.a2, minors.a2), 1e-9);
      EXPECT_LT(rel_err(closed.a3, minors.a3), 1e-8);
    }
  }
}

TEST(Stability, VerdictsAgreeAcrossRegimes) {
  ParamSampler s(127);
  int above = 0, below = 0;
  for (int i = 0; i < 200; ++i) {
    auto p = s();
    if (i % 2) p.fecundity *= 0.02;
    const auto d = derived_quantities(p);
    (d.n_f > 1.0 ? above : below)++;
    for (const auto& rep : {equilibrium_E0(p), equilibrium_E0(p, Region::Scarcity), equilibrium_E1(p),
                            equilibrium_E2(p)}) {
      if (!rep.exists) continue;
      ASSERT_TRUE(rep.stability.rh_agrees);
    }
    EXPECT_EQ(equilibrium_E0(p).stability.verdict == Stability::LAS, e0_las_under_abundance(p));
    EXPECT_EQ(equilibrium_E0(p, Region::Scarcity).stability.verdict == Stability::LAS,
              e0_las_under_scarcity(p));
    if (e1_las(p)) {
      EXPECT_EQ(equilibrium_E1(p).stability.verdict, Stability::LAS);
    }
    if (e2_las(p)) {
      EXPECT_EQ(equilibrium_E2(p).stability.verdict, Stability::LAS);
    }
  }
  EXPECT_GT(above, 10);
  EXPECT_GT(below, 10);
}

TEST(Existence, GatingOverRandomSweep) {
  ParamSampler s(131);
  for (int i = 0; i < 1000; ++i) {
    auto p = s();
    if (i % 3 == 0) p.fecundity *= 0.05;
    const auto d = derived_quantities(p);
    const auto e1 = equilibrium_E1(p);
    const auto e2 = equilibrium_E2(p);
    ASSERT_EQ(e1.exists, d.n_f > 1.0);
    ASSERT_EQ(e2.exists, d.n_m > 1.0 && d.theta_m > 1.0);
    if (e1.exists) {
      ASSERT_LT(rel_err(e1.coords.total(), level(p, d.n_f)), 1e-10);
      ASSERT_LT(rhs_abundance(p, {}, e1.coords).max_norm(), 1e-9 * e1.coords.max_norm());
      ASSERT_GE(e1.coords.males, 0.0);
    }
    if (e2.exists) {
      ASSERT_LT(rel_err(e2.coords.total(), level(p, d.n_m)), 1e-10);
      ASSERT_LT(rhs_scarcity(p, {}, e2.coords).max_norm(), 1e-9 * e2.coords.max_norm());
      ASSERT_GE(e2.coords.receptive, 0.0);
    }
  }
}

TEST(Classification, Table1) {
  const auto c = classify_pws(table1_params());
  EXPECT_EQ(c.e1, PwsClass::Regular);
  EXPECT_EQ(c.e2, PwsClass::Virtual);
}

TEST(Classification, NoPositiveEquilibria) {
  auto p = table1_params();
  p.fecundity /= 500.0;
  const auto c = classify_pws(p);
  EXPECT_EQ(c.e1, PwsClass::NotApplicable);
  EXPECT_EQ(c.e2, PwsClass::NotApplicable);
}

TEST(Classification, CoalescenceOnSwitchingPlane) {
  const auto p = coalescing_params();
  const auto d = derived_quantities(p);
  ASSERT_NEAR(d.n_m, 2.0, 1e-12);
  ASSERT_NEAR(d.n_f, 2.0, 1e-12);
  const auto c = classify_pws(p);
  EXPECT_EQ(c.e1, PwsClass::OnSwitchingPlane);
  EXPECT_EQ(c.e2, PwsClass::OnSwitchingPlane);
  const auto e1 = equilibrium_E1(p), e2 = equilibrium_E2(p);
  EXPECT_LT(rel_err(e1.coords, e2.coords), 1e-10);
}

TEST(Classification, GeometryAgreesWithOffspringOrdering) {
  ParamSampler s(137);
  for (int i = 0; i < 300; ++i) {
    const auto p = s.draw_until([](const ModelParams& q) { return e1_las(q) && e2_las(q); });
    const auto d = derived_quantities(p);
    if (std::abs(d.n_m - d.n_f) < 1e-6 * d.n_f) continue;
    const auto e1 = equilibrium_E1(p);
    const auto e2 = equilibrium_E2(p);
    const double s1 = switching_value(e1.coords, 0.0, p.mating_capacity);
    const double s2 = switching_value(e2.coords, 0.0, p.mating_capacity);
    ASSERT_EQ(e1.pws_class == PwsClass::Regular, s1 > 0.0);
    ASSERT_EQ(e2.pws_class == PwsClass::Regular, s2 < 0.0);
  }
}

TEST(NextGeneration, Table1Identities) {
  const auto p = table1_params();
  const auto d = derived_quantities(p);
  const auto base = ngm_builder(p, 0.0, 0.0);
  EXPECT_LT(rel_err(base.rho2, d.n_m), 1e-12);
  EXPECT_LT(rel_err(base.rho1, d.n_f), 1e-12);
  const auto ctl = ngm_builder(p, 10.0, 0.5);
  EXPECT_LT(rel_err(ctl.rho1, d.n_f), 1e-12);
  EXPECT_LT(ctl.rho2, d.n_m);
}

TEST(NextGeneration, RandomIdentities) {
  ParamSampler s(139);
  for (int i = 0; i < 200; ++i) {
    const auto p = s();
    const double k = s.uniform(0, 50), alpha = s.uniform(0, 1);
    NextGeneration ngm;
    ASSERT_NO_THROW(ngm = ngm_builder(p, k, alpha));
    ASSERT_LT(rel_err(ngm.rho2, controlled_male_offspring(p, k, alpha)), 1e-12);
  }
}

TEST(NextGeneration, RejectsBadInputs) {
  EXPECT_THROW(ngm_builder(table1_params(), -1.0, 0.5), ConfigError);
  EXPECT_THROW(ngm_builder(table1_params(), 1.0, 1.5), ConfigError);
}

TEST(GainThreshold, Examples) {
  const auto p = table1_params();
  const auto d = derived_quantities(p);
  EXPECT_NEAR(k_star(p, 0.0).value, d.n_m - 1.0, 1e-12);
  EXPECT_NEAR(k_star(37.4256, 0.021, 0.0).value, 36.4256, 1e-12);
  EXPECT_NEAR(k_star(37.4256, 0.021, 1.0).value, 0.749, 5e-4);
  EXPECT_NEAR(k_star(p, 0.5).value, 1.4256, 5e-4);
  const auto none = k_star(0.8, 0.021, 0.3);
  EXPECT_EQ(none.value, 0.0);
  EXPECT_FALSE(none.note.empty());
  EXPECT_THROW(k_star(p, -0.1), ConfigError);
}

TEST(GainThreshold, Monotonicity) {
  const auto p = table1_params();
  double prev = INFINITY;
  for (int i = 0; i <= 100; ++i) {
    const double k = k_star(p, i / 100.0).value;
    ASSERT_LT(k, prev);
    prev = k;
  }
  double prev_k = INFINITY, prev_a = INFINITY;
  for (int i = 1; i <= 100; ++i) {
    const double by_k = controlled_male_offspring(p, i * 0.5, 0.3);
    const double by_a = controlled_male_offspring(p, 2.0, i / 100.0);
    ASSERT_LT(by_k, prev_k);
    ASSERT_LT(by_a, prev_a);
    prev_k = by_k;
    prev_a = by_a;
  }
  // At k* the controlled offspring number is exactly one.
  for (double a : {0.0, 0.25, 1.0}) {
    EXPECT_NEAR(controlled_male_offspring(p, k_star(p, a).value, a), 1.0, 1e-12);
  }
}

TEST(E1POpen, ReducesToE1WithoutLure) {
  const auto p = table1_params();
  const auto e1 = equilibrium_E1(p);
  for (double alpha : {0.0, 0.5, 1.0}) {
    EXPECT_LT(rel_err(equilibrium_E1P_open(p, alpha, 0.0).coords, e1.coords), 1e-12);
  }
}

TEST(E1POpen, Table1ResidualAndValues) {
  const auto p = table1_params();
  const auto e = equilibrium_E1P_open(p, 0.5, 1000.0);
  ASSERT_TRUE(e.exists);
  EXPECT_LT(rhs_abundance(p, ControlInputs{1000.0, 0.5}, e.coords).max_norm(), 1e-9);
  EXPECT_NEAR(e.coords.males, 310.49, 0.01);
  EXPECT_NEAR(e.coords.receptive, 2535.59, 0.01);
  EXPECT_NEAR(e.coords.fertilized, 619.65, 0.01);
}

TEST(E1POpen, OneSignedRootRandom) {
  ParamSampler s(149);
  for (int i = 0; i < 300; ++i) {
    const auto p = s.draw_until([](const ModelParams& q) { return e1_las(q); });
    const double alpha = s.uniform(0, 1), lure = s.uniform(1, 5000);
    const auto q = open_loop_abundance_quadratic(p, alpha, lure);
    const auto roots = q.roots();
    ASSERT_GT(q.discriminant(), 0.0);
    ASSERT_GT(std::max(roots[0], roots[1]), 0.0);
    ASSERT_LE(std::min(roots[0], roots[1]), 0.0);
    const auto e = equilibrium_E1P_open(p, alpha, lure);
    ASSERT_LT(rhs_abundance(p, ControlInputs{lure, alpha}, e.coords).max_norm(), 1e-9 * e.coords.max_norm());
  }
}

TEST(E1PClosed, ReducesToE1) {
  const auto p = table1_params();
  const auto e1 = equilibrium_E1(p);
  EXPECT_LT(rel_err(equilibrium_E1P_closed(p, 0.5, 0.0).coords, e1.coords), 1e-12);
  EXPECT_LT(rel_err(equilibrium_E1P_closed(p, 0.0, 5.0).coords, e1.coords), 1e-12);
}

TEST(E1PClosed, Table1Residual) {
  const auto p = table1_params();
  const auto e = equilibrium_E1P_closed(p, 0.5, 2.5);
  const auto e1 = equilibrium_E1(p);
  EXPECT_LT(field(p, e.law, e.coords, Region::Abundance).max_norm(), 1e-9);
  EXPECT_LT(e.coords.males, e1.coords.males);
  EXPECT_NEAR(e.coords.males, 140.55, 0.01);
  EXPECT_EQ(e.pws_class, PwsClass::Virtual);
}

TEST(E2PClosed, ReducesToE2) {
  const auto p = table1_params();
  EXPECT_LT(rel_err(equilibrium_E2P_closed(p, 0.0, 0.0).coords, equilibrium_E2(p).coords), 1e-12);
}

TEST(E2PClosed, ExistenceAndResidual) {
  const auto p = table1_params();
  const double ks = k_star(p, 0.2).value;
  EXPECT_FALSE(equilibrium_E2P_closed(p, 0.2, 1.01 * ks).exists);
  const auto e = equilibrium_E2P_closed(p, 0.2, 0.5 * ks);
  ASSERT_TRUE(e.exists);
  EXPECT_LT(field(p, e.law, e.coords, Region::Scarcity).max_norm(), 1e-9);
  const double n_tilde = controlled_male_offspring(p, 0.5 * ks, 0.2);
  EXPECT_LT(rel_err(e.coords.total(), level(p, n_tilde)), 1e-10);
}

TEST(E2PClosed, RandomResidual) {
  ParamSampler s(151);
  int checked = 0;
  for (int i = 0; i < 500 && checked < 100; ++i) {
    const auto p = s();
    const double alpha = s.uniform(0, 1);
    const double k = k_star(p, alpha).value * s.uniform(0, 1);
    const auto e = equilibrium_E2P_closed(p, alpha, k);
    if (!e.exists) continue;
    ASSERT_LT(field(p, e.law, e.coords, Region::Scarcity).max_norm(), 1e-9 * e.coords.max_norm());
    ++checked;
  }
  EXPECT_GT(checked, 50);
}
