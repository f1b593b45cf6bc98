#include <gtest/gtest.h>

#include <cmath>

#include "psyllid/model.hpp"
#include "support.hpp"

using namespace psyllid;
using psyllid::test::ParamSampler;

TEST(Params, Table1Values) {
  const auto p = table1_params();
  EXPECT_EQ(p.sex_ratio, 0.41);
  EXPECT_EQ(p.fecundity, 6.352);
  EXPECT_EQ(p.density_survival, 0.001);
  EXPECT_EQ(p.male_mortality, 0.021);
  EXPECT_EQ(p.female_mortality, 0.023);
  EXPECT_EQ(p.mating_capacity, 1.2);
  EXPECT_EQ(p.mating_rate, 0.25);
  EXPECT_EQ(p.remating_rate, 1.0);
}

TEST(Params, ValidationRejectsOutOfRange) {
  auto p = table1_params();
  p.sex_ratio = 1.0;
  EXPECT_THROW(validate(p), ConfigError);
  p = table1_params();
  p.mating_capacity = 0.9;
  EXPECT_THROW(validate(p), ConfigError);
  p = table1_params();
  p.density_survival = 0.0;
  EXPECT_THROW(validate(p), ConfigError);
  p = table1_params();
  p.fecundity = NAN;
  EXPECT_THROW(validate(p), ConfigError);
}

TEST(Params, MortalityOrderingIsOnlyAWarning) {
  auto p = table1_params();  // mu = 0.021 < delta = 0.023
  EXPECT_EQ(validate(p).size(), 1u);
  p.male_mortality = 0.03;
  EXPECT_TRUE(validate(p).empty());
}

TEST(Control, Validation) {
  EXPECT_NO_THROW(validate(ControlInputs{0.0, 0.0}));
  EXPECT_THROW(validate(ControlInputs{-1.0, 0.5}), ConfigError);
  EXPECT_THROW(validate(ControlInputs{10.0, 1.5}), ConfigError);
}

TEST(MatingFraction, Examples) {
  EXPECT_EQ(mating_fraction(10, 5, 0, 1.2), 1.0);
  EXPECT_EQ(mating_fraction(0, 5, 0, 1.2), 0.0);
  EXPECT_EQ(mating_fraction(1519, 1590, 0, 1.2), 1.0);
  EXPECT_EQ(mating_fraction(0, 0, 0, 1.2), 1.0);
  EXPECT_DOUBLE_EQ(mating_fraction(1, 100, 50, 1.2), 1.2 / 150.0);
}

TEST(Rhs, OriginIsEquilibrium) {
  const auto d = rhs(table1_params(), {}, State{});
  EXPECT_EQ(d, (State{0, 0, 0}));
}

TEST(Rhs, ReceptiveFemalesOnly) {
  const auto d = rhs(table1_params(), {}, State{0, 100, 0});
  EXPECT_EQ(d.males, 0.0);
  EXPECT_EQ(d.fertilized, 0.0);
  EXPECT_NEAR(d.receptive, -2.3, 1e-12);
}

TEST(Rhs, NonFiniteStateIsAnError) {
  EXPECT_THROW(rhs(table1_params(), {}, State{NAN, 1, 1}), NumericalError);
  EXPECT_THROW(rhs_scarcity(table1_params(), {}, State{1, INFINITY, 1}), NumericalError);
}

TEST(Rhs, TrapKillVanishesWithoutLure) {
  const auto p = table1_params();
  const State x{500, 0, 10};
  // alpha > 0 but A_p = 0 and A = 0: the 0/0 kill term must be 0.
  EXPECT_EQ(rhs(p, ControlInputs{0.0, 1.0}, x), natural_rhs(p, x));
}

TEST(Rhs, AbundanceConstituentDeepInRegion) {
  const auto p = table1_params();
  const State x{1000, 10, 10};
  EXPECT_EQ(rhs_abundance(p, {}, x), rhs(p, {}, x));
}

TEST(Rhs, ScarcityConstituentHandEvaluation) {
  const auto d = rhs_scarcity(table1_params(), {}, State{1, 1000, 0});
  EXPECT_NEAR(d.fertilized, 0.3, 1e-15);
}

TEST(Rhs, ScarcityMatingTermsVanishAtZeroSeekers) {
  ParamSampler s(7);
  for (int i = 0; i < 100; ++i) {
    const auto p = s();
    const State x{s.uniform(0, 1000), 0.0, s.uniform(0, 1000)};
    const auto d = rhs_scarcity(p, {}, x);
    EXPECT_NEAR(d.fertilized, -(p.remating_rate + p.female_mortality) * x.fertilized, 1e-12 * x.fertilized);
  }
}

TEST(SwitchingValue, Examples) {
  EXPECT_NEAR(switching_value(State{1519, 1590, 383}, 0, 1.2), 232.8, 1e-9);
  EXPECT_EQ(switching_value(State{}, 0, 1.2), 0.0);
  EXPECT_NEAR(switching_value(State{1, 100, 0}, 50, 1.2), -148.8, 1e-12);
}

TEST(PopulationCap, Examples) {
  const auto cap = population_cap(table1_params());
  EXPECT_FALSE(cap.degenerate);
  EXPECT_NEAR(cap.value, 1000.0 * std::log(6.352 / 0.021), 1e-9);
  EXPECT_NEAR(cap.value, 5712.0, 0.01);

  auto p = table1_params();
  p.fecundity = 0.021;
  const auto flat = population_cap(p);
  EXPECT_TRUE(flat.degenerate);
  EXPECT_EQ(flat.value, 0.0);
}

// ---------------------------------------------------------------- properties

TEST(ModelProperty, FieldContinuityOnSwitchingPlane) {
  ParamSampler s(11);
  for (int i = 0; i < 10000; ++i) {
    const auto p = s();
    const ControlInputs c{s.uniform(0, 1000), s.uniform(0, 1)};
    const double a = s.uniform(0, 1000), u = s.uniform(0, 1000);
    const State x{(a + c.lure) / p.mating_capacity, a, u};
    const auto diff = rhs_abundance(p, c, x) - rhs_scarcity(p, c, x);
    ASSERT_LT(diff.max_norm(), 1e-12) << "sample " << i;
  }
}

TEST(ModelProperty, BoundaryNonnegativity) {
  ParamSampler s(13);
  for (int i = 0; i < 5000; ++i) {
    const auto p = s();
    const ControlInputs c{s.uniform(0, 2000), s.uniform(0, 1)};
    State x = s.state(3000);
    const int face = i % 3;
    if (face == 0) x.males = 0;
    if (face == 1) x.receptive = 0;
    if (face == 2) x.fertilized = 0;
    const auto d = rhs(p, c, x);
    if (face == 0) {
      ASSERT_GE(d.males, 0.0);
    }
    if (face == 1) {
      ASSERT_GE(d.receptive, 0.0);
    }
    if (face == 2) {
      ASSERT_GE(d.fertilized, 0.0);
    }
  }
}

TEST(ModelProperty, ZeroControlReducesBitForBit) {
  ParamSampler s(17);
  for (int i = 0; i < 5000; ++i) {
    const auto p = s();
    const auto x = s.state(5000);
    ASSERT_EQ(rhs(p, ControlInputs{0.0, 0.0}, x), natural_rhs(p, x));
  }
  // Region-specific constituents too, including the origin and axes.
  const auto p = table1_params();
  for (const State x : {State{}, State{0, 5, 0}, State{5, 0, 0}, State{0, 0, 5}}) {
    EXPECT_EQ(rhs(p, {}, x), natural_rhs(p, x));
  }
}

TEST(ModelProperty, TotalPopulationDissipatesAboveCap) {
  ParamSampler s(19);
  int checked = 0;
  while (checked < 2000) {
    const auto p = s();
    const auto cap = population_cap(p);
    if (cap.degenerate) continue;
    const ControlInputs c{s.uniform(0, 1000), s.uniform(0, 1)};
    State x = s.state(1.0);
    const double target = cap.value * s.uniform(1.0001, 3.0);
    x = (target / x.total()) * x;
    const auto d = rhs(p, c, x);
    ASSERT_LT(d.total(), 0.0);
    ++checked;
  }
}
