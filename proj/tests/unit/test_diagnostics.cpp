#include "diatom/diagnostics.hpp"

#include "support/generators.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace diatom;
using diatom::testing::Generator;

namespace {

const ParameterSet kRef = reference_parameters();

Trajectory reference_run() {
  return integrate(reference_initial_state(kRef), kRef, IntegrationConfig{});
}

Trajectory synthetic(std::vector<StateVector> states, StateVector initial = StateVector::Zero()) {
  Trajectory t;
  t.initial = initial;
  for (std::size_t j = 0; j < states.size(); ++j) t.times.push_back(double(j + 1));
  t.states = std::move(states);
  return t;
}

ParameterSet starved() {
  ParameterSet p = kRef;
  p.N_in = 1e-3;
  return p;
}

StateVector starved_start(const ParameterSet& p) {
  StateVector x0;
  x0 << p.N_in, p.C_in, 0.0, 0.0, 1e-4, 0.0;
  return x0;
}

IntegrationConfig window(double t_end) {
  IntegrationConfig cfg;
  cfg.t_end = t_end;
  cfg.sample_period = t_end;
  return cfg;
}

}  // namespace

TEST(Positivity, ReferenceRunPasses) {
  const RegimeReport r = check_positivity(reference_run(), 1e-9);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.max_violation, 0.0);
  EXPECT_EQ(r.interval_end, 50.0);
}

TEST(Positivity, SyntheticNegativeEntryFails) {
  StateVector bad = StateVector::Ones();
  bad[kC] = -1.0;
  const RegimeReport r = check_positivity(synthetic({StateVector::Ones(), bad}), 1e-9);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.max_violation, 1.0);
}

TEST(Positivity, ZeroTrajectoryPasses) {
  EXPECT_TRUE(check_positivity(synthetic({StateVector::Zero(), StateVector::Zero()}), 0.0).pass);
}

TEST(QuotaThreshold, ReferenceRunPasses) {
  const RegimeReport r = check_quota_threshold(reference_run(), kRef, 1e-9);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.interval_start, 0.0);
}

TEST(QuotaThreshold, NeverReachedIsVacuous) {
  StateVector x = StateVector::Zero();
  x[kQN] = 0.5 * kRef.Q_min_N;
  x[kQC] = 0.5 * kRef.Q_min_C;
  EXPECT_TRUE(check_quota_threshold(synthetic({x, x, x}), kRef, 0.0).pass);
}

TEST(QuotaThreshold, DipAfterCrossingFails) {
  StateVector below = StateVector::Zero(), above = StateVector::Zero();
  below[kQN] = kRef.Q_min_N - 0.25;
  above[kQN] = kRef.Q_min_N + 1.0;
  below[kQC] = above[kQC] = 10.0;
  const RegimeReport r = check_quota_threshold(synthetic({below, above, below}), kRef, 1e-9);
  EXPECT_FALSE(r.pass);
  EXPECT_DOUBLE_EQ(r.max_violation, 0.25);
  EXPECT_EQ(r.interval_start, 1.0);
}

TEST(QuotaThreshold, RandomParameterSetsPass) {
  Generator g(50);
  int checked = 0;
  for (int n = 0; n < 20; ++n) {
    const ParameterSet p = g.parameters_near(kRef, 0.2);
    try {
      const Trajectory t = integrate(reference_initial_state(p), p, IntegrationConfig{});
      EXPECT_TRUE(check_positivity(t, 1e-9).pass);
      EXPECT_TRUE(check_quota_threshold(t, p, 1e-9).pass);
      ++checked;
    } catch (const BlowUpError&) {
    }
  }
  EXPECT_GT(checked, 10);
}

TEST(LimitedRegime, StarvedChemostatMatchesClosedForms) {
  const ParameterSet p = starved();
  const LimitedRegimeReport r = limited_regime_oracle(starved_start(p), p, window(5));
  EXPECT_TRUE(r.biomass_decay.pass) << r.biomass_decay.max_violation;
  EXPECT_TRUE(r.nitrogen_quota.pass) << r.nitrogen_quota.max_violation;
  EXPECT_TRUE(r.carbon_quota.pass) << r.carbon_quota.max_violation;
  EXPECT_EQ(r.biomass_decay.interval_end, 5.0);
  EXPECT_LT(r.biomass_decay.max_violation, 1e-9);
  // Carbon uptake fills Q_C past its minimum within a fraction of one step.
  EXPECT_EQ(r.carbon_quota.interval_end, 0.0);
}

TEST(LimitedRegime, CarbonStarvedQuotaFollowsUptakeIntegral) {
  ParameterSet p = starved();
  p.C_in = 1e-3;
  const LimitedRegimeReport r = limited_regime_oracle(starved_start(p), p, window(5));
  EXPECT_TRUE(r.pass()) << r.biomass_decay.max_violation << ' ' << r.nitrogen_quota.max_violation
                        << ' ' << r.carbon_quota.max_violation;
  EXPECT_GT(r.carbon_quota.interval_end, 1.0);
}

TEST(LimitedRegime, FittedDecayExponent) {
  const ParameterSet p = starved();
  IntegrationConfig cfg = window(5);
  cfg.sample_period = 0.1;
  const Trajectory t = integrate(starved_start(p), p, cfg);
  EXPECT_NEAR(exponential_growth_rate(t, 0.0, 5.0), -(p.a + p.m_D), 1e-4);
}

TEST(LimitedRegime, ZeroBiomassTriviallyDecays) {
  const ParameterSet p = starved();
  StateVector x0 = starved_start(p);
  x0[kD] = 0.0;
  const LimitedRegimeReport r = limited_regime_oracle(x0, p, window(5));
  EXPECT_TRUE(r.pass());
  EXPECT_EQ(r.biomass_decay.max_violation, 0.0);
}

TEST(LimitedRegime, RandomStarvedConfigurations) {
  Generator g(51);
  for (int n = 0; n < 20; ++n) {
    ParameterSet p = g.parameters_near(kRef, 0.2);
    p.N_in = 1e-3;
    StateVector x0 = starved_start(p);
    x0[kQN] = g.uniform(0.0, 0.5 * p.Q_min_N);
    const LimitedRegimeReport r = limited_regime_oracle(x0, p, window(5));
    EXPECT_TRUE(r.pass()) << r.biomass_decay.max_violation << ' ' << r.nitrogen_quota.max_violation
                          << ' ' << r.carbon_quota.max_violation;
  }
}

TEST(LimitedRegime, PreconditionNotMet) {
  EXPECT_THROW(limited_regime_oracle(reference_initial_state(kRef), kRef, window(5)),
               PreconditionNotMet);
}

TEST(GrowthRate, ReferenceExponentialPhase) {
  EXPECT_NEAR(exponential_growth_rate(reference_run(), 5.0, 20.0), 0.335, 0.01);
}

TEST(GrowthRate, ExactOnPureExponential) {
  std::vector<StateVector> states;
  for (int j = 1; j <= 10; ++j) {
    StateVector x = StateVector::Zero();
    x[kD] = 2.0 * std::exp(0.3 * j);
    states.push_back(x);
  }
  StateVector x0 = StateVector::Zero();
  x0[kD] = 2.0;
  EXPECT_NEAR(exponential_growth_rate(synthetic(states, x0), 0.0, 10.0), 0.3, 1e-12);
  EXPECT_THROW(exponential_growth_rate(synthetic(states, x0), 20.0, 30.0), std::invalid_argument);
}

TEST(Report, LineFormat) {
  std::ostringstream out;
  write_report_header(out);
  write_report(out, RegimeReport{"positivity", 0.0, 50.0, 0.0, 1e-9, true});
  EXPECT_EQ(out.str(), "property,interval_start,interval_end,max_violation,pass\npositivity,0,50,0,1\n");
}
