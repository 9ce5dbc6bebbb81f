#include <doctest.h>

#include <cmath>

#include "mvtlab/errors.hpp"
#include "mvtlab/estimation.hpp"
#include "mvtlab/random.hpp"

using namespace mvtlab;

TEST_CASE("OLS recovers an exact linear relation") {
  Dataset d;
  std::vector<double> x1, x2, y;
  for (int i = 0; i < 40; ++i) {
    x1.push_back(i % 7);
    x2.push_back(std::sin(i));
    y.push_back(1.5 + 2.0 * x1.back() - 0.75 * x2.back());
  }
  d.add_column("X_1", x1);
  d.add_column("X_2", x2);
  d.add_column("Y", y);
  const RegressionFit f = fit_ols(d, "Y", {"X_1", "X_2"});
  CHECK(f.coefficient("(intercept)") == doctest::Approx(1.5).epsilon(1e-10));
  CHECK(f.coefficient("X_1") == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(f.coefficient("X_2") == doctest::Approx(-0.75).epsilon(1e-10));
  CHECK_THROWS_AS(f.coefficient("X_3"), MissingColumn);
}

TEST_CASE("simple-regression standard error matches the textbook formula") {
  Dataset d;
  std::vector<double> x, y;
  Stream rng(1, StreamFamily::rows, 0);
  for (int i = 0; i < 200; ++i) {
    x.push_back(rng.normal());
    y.push_back(0.5 * x.back() + rng.normal());
  }
  d.add_column("X", x);
  d.add_column("Y", y);
  const RegressionFit f = fit_ols(d, "Y", {"X"});
  double mx = 0, my = 0;
  for (int i = 0; i < 200; ++i) mx += x[i] / 200, my += y[i] / 200;
  double sxx = 0, sxy = 0;
  for (int i = 0; i < 200; ++i) sxx += (x[i] - mx) * (x[i] - mx), sxy += (x[i] - mx) * (y[i] - my);
  const double slope = sxy / sxx;
  double rss = 0;
  for (int i = 0; i < 200; ++i) {
    const double r = y[i] - my - slope * (x[i] - mx);
    rss += r * r;
  }
  CHECK(f.coefficient("X") == doctest::Approx(slope).epsilon(1e-12));
  CHECK(f.standard_error("X") == doctest::Approx(std::sqrt(rss / 198 / sxx)).epsilon(1e-10));
}

TEST_CASE("categorical regressors become level indicators") {
  Dataset d;
  d.add_column("C_1", {0, 1, 2, 0, 1, 2, 0, 1}, true);
  std::vector<double> y;
  for (double c : d.values("C_1")) y.push_back(c == 0 ? 1.0 : c == 1 ? 3.0 : 6.0);
  d.add_column("Y", y);
  const RegressionFit f = fit_ols(d, "Y", {"C_1"});
  CHECK(f.coefficient("C_1=1") == doctest::Approx(2.0));
  CHECK(f.coefficient("C_1=2") == doctest::Approx(5.0));
}

TEST_CASE("regression guards") {
  Dataset d;
  d.add_column("X_1", {1, 2, 3, 4});
  d.add_column("X_2", {2, 4, 6, 8});
  d.add_column("Y", {1, 0, 1, 0});
  CHECK_THROWS_AS(fit_ols(d, "Y", {"X_1", "X_2"}), RankDeficient);
  Dataset tiny;
  tiny.add_column("X_1", {1, 2});
  tiny.add_column("Y", {1, 2});
  CHECK_THROWS_AS(fit_ols(tiny, "Y", {"X_1"}), InsufficientRows);
}

TEST_CASE("standardized contrast by hand") {
  // stratum 0: E[Y|1]=2, E[Y|0]=1; stratum 1: E[Y|1]=5, E[Y|0]=1; P(c) = (0.5, 0.5)
  Dataset d;
  d.add_column("C_1", {0, 0, 0, 0, 1, 1, 1, 1}, true);
  d.add_column("A", {1, 1, 0, 0, 1, 0, 0, 0});
  d.add_column("Y", {1, 3, 1, 1, 5, 0, 1, 2});
  const ContrastEstimate e = standardized_contrast(d, "Y", "A", 1, 0, {"C_1"});
  CHECK(e.value == doctest::Approx(0.5 * 1 + 0.5 * 4));
  CHECK(e.weights == std::vector<double>{0.5, 0.5});
  Dataset gap;
  gap.add_column("C_1", {0, 0, 1, 1}, true);
  gap.add_column("A", {1, 0, 0, 0});
  gap.add_column("Y", {1, 0, 1, 0});
  CHECK_THROWS_AS(standardized_contrast(gap, "Y", "A", 1, 0, {"C_1"}), PositivityViolation);
}

TEST_CASE("item-by-item associations in both modes") {
  Dataset d;
  std::vector<double> x1, x2, y;
  Stream rng(4, StreamFamily::rows, 0);
  for (int i = 0; i < 5000; ++i) {
    const double common = rng.normal();
    x1.push_back(common + rng.normal());
    x2.push_back(common + rng.normal());
    y.push_back(x1.back() + rng.normal());
  }
  d.add_column("X_1", x1);
  d.add_column("X_2", x2);
  d.add_column("Y", y);
  const auto joint = item_by_item(d, "Y", {}, ItemMode::joint);
  REQUIRE(joint.size() == 2);
  CHECK(std::abs(joint[1].coefficient / joint[1].standard_error) < 4);
  const auto marginal = item_by_item(d, "Y", {}, ItemMode::marginal);
  CHECK(marginal[1].coefficient / marginal[1].standard_error > 10);  // association through X_1
}

TEST_CASE("type-7 quantiles") {
  CHECK(quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
  CHECK(quantile({5}, 0.9) == 5);
}

TEST_CASE("bootstrap intervals are deterministic and guarded") {
  Dataset d;
  std::vector<double> v;
  for (int i = 0; i < 300; ++i) v.push_back(i % 17);
  d.add_column("Y", v);
  const Statistic mean = [](const Dataset& x) {
    double s = 0;
    for (double y : x.values("Y")) s += y;
    return s / static_cast<double>(x.rows());
  };
  const Interval a = bootstrap_ci(d, mean, 200, 9);
  const Interval b = bootstrap_ci(d, mean, 200, 9, 0.95, 3);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);
  CHECK(a.lower < a.estimate);
  CHECK(a.estimate < a.upper);
  CHECK_THROWS_AS(bootstrap_ci(d, mean, 50, 9), TooFewReplicates);
  CHECK(bootstrap_rows(10, 3, 4) == bootstrap_rows(10, 3, 4));
}
