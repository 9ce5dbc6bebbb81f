#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mvtlab/compiled_law.hpp"
#include "mvtlab/dgp_engine.hpp"
#include "mvtlab/errors.hpp"
#include "mvtlab/psychometrics.hpp"

using namespace mvtlab;

TEST_CASE("three-version population table") {
  const PopulationTable t = enumerate_population(fixture_three_version());
  REQUIRE(t.cells.size() == 3);
  CHECK(t.cells[0].prob == doctest::Approx(0.2));
  CHECK(t.cells[1].prob == doctest::Approx(0.3));
  CHECK(t.cells[2].prob == doctest::Approx(0.5));
  CHECK(t.exposure_levels == std::vector<double>{0, 1});
  CHECK(t.potential_means[0] == std::vector<double>{1, 2, 3});
  CHECK(t.total_probability() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("enumerated tables are normalised") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const PopulationTable t = enumerate_population(random_discrete_scenario(seed));
    CHECK(std::abs(t.total_probability() - 1.0) < 1e-12);
    const Matrix pa = t.exposure_given_stratum();
    for (const auto& row : pa) CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0));
  }
}

TEST_CASE("continuous scenarios are not enumerable") {
  CHECK_THROWS_AS(enumerate_population(fixture_structural_reflective()), ContinuousScenarioNotEnumerable);
}

TEST_CASE("sampling is reproducible and independent of the thread count") {
  for (auto name : {"discrete_reflective", "structural_reflective", "two_wave_confounding"}) {
    CAPTURE(name);
    const Scenario s = fixture_by_name(name);
    const Dataset a = sample_dataset(s, 2000, 99, 1);
    CHECK(a == sample_dataset(s, 2000, 99, 3));
    CHECK_FALSE(a == sample_dataset(s, 2000, 100, 1));
    CHECK(a.provenance.seed == 99);
    CHECK(a.provenance.simulated);
  }
}

TEST_CASE("discrete datasets carry versions and potential outcomes") {
  const Dataset d = sample_dataset(fixture_discrete_reflective(), 500, 1);
  CHECK(d.has("C_1"));
  CHECK(d.column("C_1").categorical);
  CHECK(d.column("K").categorical);
  CHECK(d.indicator_names().size() == 3);
  CHECK(d.potential_names().size() == 3);
  for (double k : d.values("K")) CHECK((k >= 1 && k <= 3));
  CHECK_THROWS_AS(d.column("X_9"), MissingColumn);
}

TEST_CASE("empirical version frequencies match the population table") {
  const Scenario s = fixture_three_version();
  const std::size_t n = 200000;
  const Dataset d = sample_dataset(s, n, 5);
  const std::vector<double> p{0.2, 0.3, 0.5};
  for (std::size_t k = 0; k < 3; ++k) {
    const double hits = static_cast<double>(
        std::count(d.values("K").begin(), d.values("K").end(), static_cast<double>(k + 1)));
    const double se = std::sqrt(p[k] * (1 - p[k]) / n);
    CHECK(std::abs(hits / n - p[k]) < 4 * se);
  }
}

TEST_CASE("continuous indicators reproduce the implied covariance") {
  const Dataset d = sample_dataset(fixture_structural_reflective(), 100000, 3);
  const Eigen::MatrixXd s = sample_covariance(d, d.indicator_names());
  const double loadings[4] = {0.9, 0.8, 0.7, 0.6};
  for (int i = 0; i < 4; ++i) {
    CHECK(s(i, i) == doctest::Approx(1.0).epsilon(0.02));
    for (int j = i + 1; j < 4; ++j) CHECK(std::abs(s(i, j) - loadings[i] * loadings[j]) < 0.015);
  }
}

TEST_CASE("measures") {
  const std::vector<double> x{1, 2, 3, 0};
  MeasureSpec mean;
  CHECK(measure_value(x, mean) == doctest::Approx(1.5));
  MeasureSpec sum;
  sum.form = MeasureForm::sum;
  CHECK(measure_value(x, sum) == 6.0);
  MeasureSpec weighted;
  weighted.form = MeasureForm::weighted_sum;
  weighted.weights = {0.7, 0.3};
  const std::vector<double> two{1, 2};
  CHECK(measure_value(two, weighted) == doctest::Approx(1.3));
  CHECK_THROWS_AS(measure_value(x, weighted), WeightLengthMismatch);
  MeasureSpec table;
  table.form = MeasureForm::custom_table;
  table.table = {{{1, 2}, 7.0}};
  CHECK(measure_value(two, table) == 7.0);
  CHECK_THROWS_AS(measure_value(std::vector<double>{2, 2}, table), InvalidParameter);
}

TEST_CASE("coarsening into exposure categories") {
  const std::vector<double> values{0.1, 0.5, 0.9, 1.5};
  const std::vector<double> cuts{0.5, 1.0};
  CHECK(coarsen_exposure(values, cuts) == std::vector<double>{0, 1, 1, 2});
  CHECK(coarsen_value(1.0, cuts) == 2);
  const std::vector<double> empty_middle{0.1, 1.5};
  CHECK_THROWS_AS(coarsen_exposure(empty_middle, cuts), EmptyCategory);
  const std::vector<double> bad{1.0, 0.5};
  CHECK_THROWS_AS(coarsen_exposure(values, bad), InvalidParameter);
}

TEST_CASE("ordinal levels count the cutpoints below a value") {
  const std::vector<double> cuts{-0.8, 0.0, 0.8};
  CHECK(ordinal_level(cuts, -2.0) == 0.0);
  CHECK(ordinal_level(cuts, -0.5) == 1.0);
  CHECK(ordinal_level(cuts, 0.5) == 2.0);
  CHECK(ordinal_level(cuts, 3.0) == 3.0);
}

TEST_CASE("dataset bookkeeping") {
  Dataset d;
  d.add_column("X_1", {1, 2, 3});
  d.add_column("X_2", {4, 5, 6});
  CHECK_THROWS_AS(d.add_column("X_3", {1, 2}), InvalidParameter);
  CHECK_THROWS_AS(d.add_column("X_1", {1, 2, 3}), InvalidParameter);
  CHECK(d.rows() == 3);
  const std::vector<std::size_t> rows{2, 2, 0};
  const Dataset t = d.take(rows);
  CHECK(t.values("X_2") == std::vector<double>{6, 6, 4});
}
