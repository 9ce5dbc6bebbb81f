#include <doctest.h>

#include "mvtlab/dgp_engine.hpp"
#include "mvtlab/errors.hpp"
#include "mvtlab/mvt_verifier.hpp"
#include "mvtlab/scenario.hpp"

using namespace mvtlab;

TEST_CASE("three-version fixture carries the stated law") {
  const Scenario s = fixture_three_version();
  CHECK(s.kind == ScenarioKind::coarsened_versions);
  CHECK(s.mode == ScenarioMode::discrete);
  CHECK(s.discrete.version_values == std::vector<double>{1, 2, 3});
  CHECK(s.discrete.version_probs[0][0] == std::vector<double>{0.2, 0.3, 0.5});
  CHECK(s.discrete.outcome_means[0] == std::vector<double>{1, 2, 3});
  CHECK(s.violation_free());
}

TEST_CASE("every fixture survives a JSON round trip") {
  for (auto name : fixture_names()) {
    CAPTURE(name);
    const Scenario s = fixture_by_name(name);
    const Scenario back = scenario_from_json(Json::parse(to_json(s).dump()));
    CHECK(back == s);
    CHECK(scenario_hash(back) == scenario_hash(s));
  }
  CHECK(scenario_hash(fixture_three_version()) != scenario_hash(fixture_linear_versions()));
}

TEST_CASE("unknown fixture names are rejected") {
  CHECK_THROWS_AS(fixture_by_name("nope"), InvalidParameter);
}

TEST_CASE("probabilities must sum to one") {
  const Json p{{"versions", {{"probs", {0.2, 0.3, 0.4}}}},
               {"version_to_exposure", {1, 1, 0}},
               {"outcome_means", {1, 2, 3}}};
  CHECK_THROWS_AS(build_scenario(ScenarioKind::coarsened_versions, p), InvalidProbability);
}

TEST_CASE("negative probabilities are rejected") {
  const Json p{{"versions", {{"probs", {-0.2, 0.7, 0.5}}}},
               {"version_to_exposure", {1, 1, 0}},
               {"outcome_means", {1, 2, 3}}};
  CHECK_THROWS_AS(build_scenario(ScenarioKind::coarsened_versions, p), InvalidProbability);
}

TEST_CASE("a zero loading in a structural reflective model is rejected") {
  CHECK_THROWS_AS(build_scenario(ScenarioKind::structural_reflective,
                                 Json{{"loadings", {0.9, 0.0, 0.7}}, {"latent_effects", {0.4}}}),
                  ZeroLoadingInStructuralReflective);
}

TEST_CASE("loadings with communality of one or more need explicit error scales") {
  CHECK_THROWS_AS(build_scenario(ScenarioKind::structural_reflective,
                                 Json{{"loadings", {1.2, 0.8, 0.7}}, {"latent_effects", {0.4}}}),
                  MissingParameter);
}

TEST_CASE("kind rules on outcome paths") {
  SUBCASE("structural kinds forbid indicator effects") {
    CHECK_THROWS_AS(build_scenario(ScenarioKind::structural_reflective,
                                   Json{{"loadings", {0.9, 0.8, 0.7}},
                                        {"latent_effects", {0.4}},
                                        {"indicator_effects", {0.1, 0, 0}}}),
                    InvalidParameter);
  }
  SUBCASE("indicator-causal kinds forbid latent effects") {
    CHECK_THROWS_AS(build_scenario(ScenarioKind::indicator_causal_reflective,
                                   Json{{"loadings", {0.9, 0.8, 0.7}},
                                        {"latent_effects", {0.4}},
                                        {"indicator_effects", {0.1, 0, 0}}}),
                    InvalidParameter);
  }
}

TEST_CASE("violation targets are range checked") {
  const Scenario s = fixture_discrete_reflective();
  CHECK_THROWS_AS(inject_violation(s, {ViolationKind::direct_indicator_effect, {7}, 0.3}), IndexOutOfRange);
}

TEST_CASE("contrast values must have positive probability in every stratum") {
  Json p = scenario_params(fixture_three_version());
  p["contrast"] = {{"a", 2}, {"a_star", 0}};
  CHECK_THROWS_AS(build_scenario(ScenarioKind::coarsened_versions, p), PositivityViolation);
}

TEST_CASE("a zero-magnitude violation leaves every observable unchanged") {
  const Scenario base = fixture_discrete_reflective();
  const PopulationTable t0 = enumerate_population(base);
  for (ViolationKind kind : {ViolationKind::direct_indicator_effect, ViolationKind::common_cause_u,
                             ViolationKind::unmeasured_confounder, ViolationKind::consistency_breach}) {
    CAPTURE(to_string(kind));
    const Scenario s = inject_violation(base, {kind, {0}, 0.0, 0.8});
    const PopulationTable t = enumerate_population(s);
    CHECK(mvt_lhs(t, 2, 1) == doctest::Approx(mvt_lhs(t0, 2, 1)).epsilon(1e-12));
    CHECK(mvt_rhs(t, 2, 1) == doctest::Approx(mvt_rhs(t0, 2, 1)).epsilon(1e-12));
  }
}

TEST_CASE("violations are stored in canonical order") {
  Scenario s = fixture_discrete_reflective();
  s = inject_violation(s, {ViolationKind::unmeasured_confounder, {}, 0.2});
  s = inject_violation(s, {ViolationKind::direct_indicator_effect, {1}, 0.3});
  REQUIRE(s.violations.size() == 2);
  CHECK(s.violations[0].kind == ViolationKind::direct_indicator_effect);
  CHECK_FALSE(s.violation_free());
}

TEST_CASE("random scenarios are reproducible and respect the size limits") {
  RandomScenarioOptions o;
  o.max_strata = 4;
  o.max_versions = 16;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Scenario a = random_discrete_scenario(seed, o);
    CHECK(a == random_discrete_scenario(seed, o));
    CHECK(a.strata() <= 4);
    CHECK(a.discrete.versions() <= 16);
    CHECK(a.violation_free());
    REQUIRE(a.contrast);
    CHECK(a.contrast->a != a.contrast->a_star);
  }
}

TEST_CASE("measure specs validate their weights") {
  MeasureSpec m;
  m.form = MeasureForm::weighted_sum;
  m.weights = {0.7, 0.3};
  CHECK_NOTHROW(m.validate(2));
  CHECK_THROWS_AS(m.validate(3), WeightLengthMismatch);
  CHECK(m.linear_weights(2) == std::vector<double>{0.7, 0.3});
  MeasureSpec mean;
  CHECK(mean.linear_weights(4) == std::vector<double>{0.25, 0.25, 0.25, 0.25});
}
