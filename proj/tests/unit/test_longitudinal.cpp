#include <doctest.h>

#include <cmath>

#include "mvtlab/errors.hpp"
#include "mvtlab/longitudinal.hpp"

using namespace mvtlab;

namespace {
TwoWaveParams confounding() { return fixture_two_wave_confounding().two_wave; }

TwoWaveParams null_system(std::size_t m) {
  TwoWaveParams p;
  p.lag.assign(m, std::vector<double>(m, 0.0));
  p.outcome_current.assign(m, 0.0);
  p.outcome_prior.assign(m, 0.0);
  p.error_sd_prior.assign(m, 1.0);
  p.error_sd_current.assign(m, 1.0);
  return p;
}
}  // namespace

TEST_CASE("path tracing on the confounding fixture") {
  // Cov(X_1^t, Y) = 0.5 * 0.5 * 0.5 = 0.125, Var(X_1^t) = 1.25
  const StrategySlopes s = analytic_bias(confounding(), 0);
  CHECK(s[Strategy::naive] == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(std::abs(s[Strategy::current_plus_prior]) < 1e-14);
  CHECK(std::abs(s[Strategy::current_all]) < 1e-14);
  CHECK(s.true_effect == 0.0);
  // mean of the prior wave only partly blocks the path through X_2^{t-1}
  CHECK(s[Strategy::prior_summary] > 0.0);
  CHECK(s[Strategy::prior_summary] < s[Strategy::naive]);
}

TEST_CASE("no cross-lags means every strategy returns the structural effect") {
  TwoWaveParams p = null_system(3);
  p.outcome_current = {0.3, 0.2, 0.0};
  p.lag[1][1] = 0.4;
  const StrategySlopes s = analytic_bias(p, 0);
  for (Strategy st : kStrategies) CHECK(s[st] == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("simulation is reproducible with the documented schema") {
  const Dataset a = simulate_two_wave(confounding(), 1000, 4);
  CHECK(a == simulate_two_wave(confounding(), 1000, 4, 3));
  for (auto name : {"X_1_t0", "X_2_t0", "X_1_t1", "X_2_t1", "Y"}) CHECK(a.has(name));
  CHECK_THROWS_AS(simulate_two_wave(confounding(), 0, 4), InvalidParameter);
}

TEST_CASE("strategy estimates at n = 100000 sit on the oracle") {
  const TwoWaveParams p = confounding();
  const Dataset d = simulate_two_wave(p, 100000, 21);
  MeasureSpec mean;
  const StrategyReport r = analyze_strategies(d, 0, mean, &p);
  for (const auto& s : r.results) {
    CAPTURE(to_string(s.strategy));
    REQUIRE(s.analytic);
    CHECK(std::abs(s.estimate - *s.analytic) < 3.5 * s.standard_error);
  }
  CHECK(std::abs(r[Strategy::naive].estimate - 0.1) < 0.01);
  CHECK(std::abs(r[Strategy::current_plus_prior].estimate) < 0.01);
}

TEST_CASE("null system gives null estimates") {
  const TwoWaveParams p = null_system(3);
  const Dataset d = simulate_two_wave(p, 20000, 2);
  for (const auto& s : analyze_strategies(d, 1, {}, &p).results) CHECK(std::abs(s.estimate) < 3.5 * s.standard_error);
}

TEST_CASE("noiseless latent layer reproduces the indicator-level analysis") {
  TwoWaveParams p = confounding();
  p.latent = true;
  p.loadings_prior = {1.0, 1.0};
  p.loadings_current = {1.0, 1.0};
  p.indicator_noise_sd = {0.0, 0.0};
  const StrategySlopes latent = analytic_bias(p, 0);
  const StrategySlopes plain = analytic_bias(confounding(), 0);
  for (Strategy s : kStrategies) CHECK(latent[s] == doctest::Approx(plain[s]).epsilon(1e-12));
}

TEST_CASE("indicator noise makes the prior-wave adjustment leak more as noise grows") {
  TwoWaveParams p = confounding();
  p.latent = true;
  p.loadings_prior = {1.0, 1.0};
  p.loadings_current = {1.0, 1.0};
  // absolute leak rises while noise is below the latent scale; beyond it
  // attenuation of every slope takes over, so the share of the naive bias
  // left unremoved is the quantity that keeps growing
  double leak = -1.0, share = -1.0;
  for (double noise : {0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0}) {
    CAPTURE(noise);
    p.indicator_noise_sd = {noise, noise};
    const StrategySlopes s = analytic_bias(p, 0);
    const double next_share = s[Strategy::current_plus_prior] / s[Strategy::naive];
    CHECK(next_share > share);
    share = next_share;
    if (noise <= 1.0) {
      CHECK(s[Strategy::current_plus_prior] > leak);
      leak = s[Strategy::current_plus_prior];
    }
  }
  CHECK(leak > 0.0);
}

TEST_CASE("ordinal indicators have no closed form") {
  TwoWaveParams p = confounding();
  p.ordinal_cutpoints = {{0.0}, {0.0}};
  CHECK_THROWS_AS(analytic_bias(p, 0), NonlinearParams);
  MeasureSpec custom;
  custom.form = MeasureForm::custom_table;
  custom.table = {{{0, 0}, 0}};
  CHECK_THROWS_AS(analytic_bias(confounding(), 0, custom), NonlinearParams);
  CHECK_THROWS_AS(analytic_bias(confounding(), 5), IndexOutOfRange);
}
