#include <doctest.h>

#include <cmath>

#include "mvtlab/errors.hpp"
#include "mvtlab/mvt_verifier.hpp"
#include "oracle.hpp"

using namespace mvtlab;

TEST_CASE("three-version fixture: both sides equal -1.4") {
  const IdentityReport r = verify_identity(fixture_three_version());
  CHECK(r.lhs == doctest::Approx(-1.4).epsilon(1e-12));
  CHECK(r.rhs == doctest::Approx(-1.4).epsilon(1e-12));
  CHECK(r.pass);
  CHECK(r.size == 3);
}

TEST_CASE("enumerator agrees with the brute-force oracle, violations included") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    RandomScenarioOptions o;
    if (seed % 5 == 1) o.violation = ViolationKind::direct_indicator_effect;
    if (seed % 5 == 2) o.violation = ViolationKind::common_cause_u;
    if (seed % 5 == 3) o.violation = ViolationKind::unmeasured_confounder;
    if (seed % 5 == 4) o.violation = ViolationKind::consistency_breach;
    const Scenario s = random_discrete_scenario(seed, o);
    const PopulationTable t = enumerate_population(s);
    const auto want = oracle::identity_sides(s, s.contrast->a, s.contrast->a_star);
    CAPTURE(seed);
    CHECK(std::abs(mvt_lhs(t, s.contrast->a, s.contrast->a_star) - want.lhs) < 1e-10);
    CHECK(std::abs(mvt_rhs(t, s.contrast->a, s.contrast->a_star) - want.rhs) < 1e-10);
  }
}

TEST_CASE("violation-free random scenarios satisfy the identity exactly") {
  for (const IdentityReport& r : run_battery(25, 3)) {
    CHECK(r.abs_diff <= 1e-10);
    CHECK(r.pass);
  }
}

TEST_CASE("a direct indicator effect breaks the identity") {
  const Scenario s =
      inject_violation(fixture_discrete_reflective(), {ViolationKind::direct_indicator_effect, {0}, 0.3});
  const IdentityReport r = verify_identity(s);
  CHECK_FALSE(r.pass);
  CHECK(r.abs_diff > 1e-3);
  const auto want = oracle::identity_sides(s, 2, 1);
  CHECK(r.abs_diff == doctest::Approx(std::abs(want.lhs - want.rhs)).epsilon(1e-9));
}

TEST_CASE("derivation chain attributes the broken assumption") {
  struct Case {
    ViolationKind kind;
    ChainStep expected;
  };
  for (Case c : {Case{ViolationKind::direct_indicator_effect, ChainStep::independence},
                 Case{ViolationKind::common_cause_u, ChainStep::independence},
                 Case{ViolationKind::consistency_breach, ChainStep::consistency},
                 Case{ViolationKind::unmeasured_confounder, ChainStep::unconfoundedness}}) {
    CAPTURE(to_string(c.kind));
    RandomScenarioOptions o;
    o.violation = c.kind;
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
      const Scenario s = random_discrete_scenario(seed, o);
      const ChainReport chain =
          verify_derivation_chain(enumerate_population(s), s.contrast->a, s.contrast->a_star);
      CHECK(chain.first_break == c.expected);
    }
  }
  const Scenario clean = fixture_discrete_reflective();
  const ChainReport chain = verify_derivation_chain(enumerate_population(clean), 2, 1);
  CHECK(chain.first_break == ChainStep::none);
  CHECK_FALSE(chain.break_index());
  CHECK(chain.values[0] == doctest::Approx(chain.values[4]));
}

TEST_CASE("redefining versions repairs direct effects and common causes") {
  const Scenario base = fixture_discrete_reflective();
  const Scenario direct = inject_violation(base, {ViolationKind::direct_indicator_effect, {1}, 0.4});
  const Scenario cause = inject_violation(base, {ViolationKind::common_cause_u, {0}, 0.5, 0.9});
  REQUIRE_FALSE(verify_identity(direct).pass);
  REQUIRE_FALSE(verify_identity(cause).pass);
  const Scenario fixed_direct = redefine_versions(direct, Augmentation::include_indicators);
  const Scenario fixed_cause = redefine_versions(cause, Augmentation::include_common_cause);
  CHECK(verify_identity(fixed_direct).abs_diff <= 1e-10);
  CHECK(verify_identity(fixed_cause).abs_diff <= 1e-10);
  // the observational side is unchanged by relabelling versions
  CHECK(verify_identity(fixed_direct).lhs == doctest::Approx(verify_identity(direct).lhs).epsilon(1e-12));
  CHECK(verify_identity(fixed_cause).lhs == doctest::Approx(verify_identity(cause).lhs).epsilon(1e-12));
  CHECK_THROWS_AS(redefine_versions(base, Augmentation::include_common_cause), InapplicableAugmentation);
}

TEST_CASE("population regression slope equals the one-unit hypothetical-trial contrast") {
  const Scenario s = fixture_linear_versions();
  const PopulationTable t = enumerate_population(s);
  const RegressionFit f = population_regression(t);
  for (double a : {0.0, 1.0}) CHECK(std::abs(f.coefficient("A") - mvt_rhs(t, a + 1, a)) < 1e-10);
  CHECK(f.coefficient("A") == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("quadrature check on continuous models") {
  VerifyOptions o;
  o.mode = VerifyMode::quadrature;
  const IdentityReport good = verify_identity(fixture_structural_reflective(), o);
  CHECK(good.pass);
  CHECK(good.abs_diff < 1e-10);
  // latent-only versions cannot absorb a causal indicator
  Scenario s = fixture_indicator_causal_reflective();
  s.continuous.version = {true, false, false};
  const IdentityReport bad = verify_identity(s, o);
  CHECK_FALSE(bad.pass);
  CHECK(bad.abs_diff > 0.01);
}

TEST_CASE("empirical mode tracks the exact answer") {
  VerifyOptions o;
  o.mode = VerifyMode::empirical;
  o.n = 20000;
  o.replicates = 5;
  o.seed = 12;
  const IdentityReport r = verify_identity(fixture_discrete_reflective(), o);
  CHECK(r.pass);
  CHECK(r.lhs == doctest::Approx(verify_identity(fixture_discrete_reflective()).lhs).epsilon(0.1));
  CHECK(r.standard_error > 0);
  o.replicates = 1;
  const IdentityReport single = verify_identity(fixture_structural_reflective(), o);
  CHECK(single.standard_error > 0);
  CHECK(single.pass);
}

TEST_CASE("observed-only data cannot supply the trial side") {
  Dataset d = sample_dataset(fixture_three_version(), 100, 1);
  Dataset observed;
  for (const auto& c : d.columns())
    if (c.name != "K" && c.name.rfind("Y_k_", 0) != 0) observed.add_column(c.name, c.values, c.categorical);
  CHECK_THROWS_AS(mvt_rhs(observed, 1, 0), MissingPotentialOutcomes);
}

TEST_CASE("positivity failures surface") {
  const PopulationTable t = enumerate_population(fixture_three_version());
  CHECK_THROWS_AS(mvt_lhs(t, 5, 0), PositivityViolation);
}
