// Acceptance suite: one pass/fail line per criterion. Tolerances, sizes and
// seeds are fixed here; the process exits non-zero when any line fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "mvtlab/cli_io.hpp"
#include "mvtlab/dgp_engine.hpp"
#include "mvtlab/estimation.hpp"
#include "mvtlab/longitudinal.hpp"
#include "mvtlab/mvt_verifier.hpp"
#include "mvtlab/psychometrics.hpp"
#include "mvtlab/random.hpp"
#include "mvtlab/scenario.hpp"

#ifndef MVTLAB_CONFIG_DIR
#define MVTLAB_CONFIG_DIR "configs"
#endif

using namespace mvtlab;
namespace fs = std::filesystem;

namespace {

// pinned tolerances
constexpr double kExactTol = 1e-10;
constexpr double kBatteryBudget = 5.0;        // seconds
constexpr double kConvergenceBudget = 120.0;  // seconds
constexpr double kCalibrationBudget = 600.0;  // seconds
constexpr double kRmsrThreshold = 0.02;
constexpr double kLevel = 0.05;
constexpr double kSizeLow = 0.03, kSizeHigh = 0.07;
constexpr double kMinPower = 0.80;
constexpr double kLongitudinalTol = 0.01;
constexpr double kAnalyticTol = 1e-12;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / (v.size() - 1);
}

double welch_p(const std::vector<double>& x, const std::vector<double>& y) {
  const double vx = variance(x) / x.size(), vy = variance(y) / y.size();
  const double t = (mean(x) - mean(y)) / std::sqrt(vx + vy);
  const double df = (vx + vy) * (vx + vy) /
                    (vx * vx / (x.size() - 1) + vy * vy / (y.size() - 1));
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

Dataset replicate_data(const Scenario& s, std::size_t n, std::uint64_t seed, std::size_t r) {
  return sample_dataset(s, n, derive_seed(seed, StreamFamily::replicate, r));
}

// 1 -------------------------------------------------------------------------
Outcome exact_identity_battery() {
  constexpr std::size_t count = 30;
  constexpr std::uint64_t seed = 20240101;
  RandomScenarioOptions o;
  o.max_strata = 4;
  o.max_versions = 16;
  const auto start = Clock::now();
  const std::vector<IdentityReport> reports = run_battery(count, seed, o);
  const double elapsed = seconds_since(start);

  std::size_t max_c = 0, max_k = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const Scenario s = random_discrete_scenario(derive_seed(seed, StreamFamily::battery, i), o);
    max_c = std::max(max_c, s.strata());
    max_k = std::max(max_k, s.discrete.versions());
  }
  double worst = 0.0;
  for (const auto& r : reports) worst = std::max(worst, r.abs_diff);
  return {reports.size() >= 20 && worst <= kExactTol && max_c <= 4 && max_k <= 16 &&
              elapsed < kBatteryBudget,
          std::to_string(reports.size()) + " scenarios (C<=" + std::to_string(max_c) +
              ", K<=" + std::to_string(max_k) + "), max |LHS-RHS| " + fmt(worst) + ", " +
              fmt(elapsed) + " s"};
}

// 2 -------------------------------------------------------------------------
Outcome chain_attribution() {
  struct Case {
    ViolationKind kind;
    ChainStep expected;
  };
  const Case cases[] = {{ViolationKind::direct_indicator_effect, ChainStep::independence},
                        {ViolationKind::common_cause_u, ChainStep::independence},
                        {ViolationKind::consistency_breach, ChainStep::consistency},
                        {ViolationKind::unmeasured_confounder, ChainStep::unconfoundedness}};
  bool pass = true;
  std::string detail;
  std::uint64_t family = 0;
  for (const Case& c : cases) {
    RandomScenarioOptions o;
    o.violation = c.kind;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < 20; ++i) {
      const Scenario s = random_discrete_scenario(derive_seed(7000 + family, StreamFamily::battery, i), o);
      const ChainReport chain =
          verify_derivation_chain(enumerate_population(s), s.contrast->a, s.contrast->a_star);
      hits += chain.first_break == c.expected;
    }
    ++family;
    pass = pass && hits == 20;
    if (!detail.empty()) detail += ", ";
    detail += std::string(to_string(c.kind)) + " -> " + std::string(to_string(c.expected)) + " " +
              std::to_string(hits) + "/20";
  }
  return {pass, detail};
}

// 3 -------------------------------------------------------------------------
Outcome redefinition_repair() {
  struct Case {
    ViolationKind kind;
    Augmentation fix;
  };
  const Case cases[] = {{ViolationKind::direct_indicator_effect, Augmentation::include_indicators},
                        {ViolationKind::common_cause_u, Augmentation::include_common_cause}};
  bool pass = true;
  std::string detail;
  std::uint64_t family = 0;
  for (const Case& c : cases) {
    RandomScenarioOptions o;
    o.violation = c.kind;
    std::size_t broken = 0, repaired = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      const Scenario s = random_discrete_scenario(derive_seed(8000 + family, StreamFamily::battery, i), o);
      if (verify_identity(s).abs_diff <= kExactTol) continue;
      ++broken;
      const double diff = verify_identity(redefine_versions(s, c.fix)).abs_diff;
      worst = std::max(worst, diff);
      repaired += diff <= kExactTol;
    }
    ++family;
    pass = pass && broken > 0 && repaired == broken;
    if (!detail.empty()) detail += ", ";
    detail += std::string(to_string(c.kind)) + " " + std::to_string(repaired) + "/" +
              std::to_string(broken) + " repaired (max " + fmt(worst) + ")";
  }
  return {pass, detail};
}

// 4 -------------------------------------------------------------------------
Outcome empirical_convergence() {
  const Scenario s = fixture_discrete_reflective();
  const double a = s.contrast->a, a_star = s.contrast->a_star;
  const auto start = Clock::now();
  const auto median_gap = [&](std::size_t n, std::uint64_t seed) {
    std::vector<double> gaps;
    for (std::size_t r = 0; r < 50; ++r) {
      const auto [lhs, rhs] = empirical_sides(replicate_data(s, n, seed, r), a, a_star);
      gaps.push_back(std::abs(lhs - rhs));
    }
    return median(gaps);
  };
  const double small = median_gap(10000, 404);
  const double large = median_gap(1000000, 405);
  const double elapsed = seconds_since(start);
  // n grows 100-fold, so root-n scaling predicts a ratio of 10
  const double ratio = small / large;
  return {large < small && ratio >= 5.0 && ratio <= 20.0 && elapsed < kConvergenceBudget,
          "median |diff| " + fmt(small) + " at n=1e4, " + fmt(large) + " at n=1e6, ratio " + fmt(ratio) +
              " (root-n predicts 10), " + fmt(elapsed) + " s"};
}

// 5 -------------------------------------------------------------------------
Outcome regression_bridge() {
  const PopulationTable t = enumerate_population(fixture_linear_versions());
  const double beta = population_regression(t).coefficient("A");
  double worst = 0.0;
  for (double a : {0.0, 1.0}) worst = std::max(worst, std::abs(beta - mvt_rhs(t, a + 1, a)));
  return {worst <= kExactTol, "beta_A " + fmt(beta) + ", max |beta - rhs(a+1, a)| " + fmt(worst)};
}

// 6 -------------------------------------------------------------------------
Outcome fit_indistinguishability() {
  const Scenario reflective = fixture_structural_reflective();
  const Scenario causal = fixture_indicator_causal_reflective();
  const auto rmsr_series = [](const Scenario& s, std::uint64_t seed) {
    std::vector<double> out;
    for (std::size_t r = 0; r < 100; ++r) {
      const Dataset d = replicate_data(s, 50000, seed, r);
      out.push_back(fit_one_factor(sample_covariance(d, d.indicator_names())).rmsr);
    }
    return out;
  };
  const std::vector<double> a = rmsr_series(reflective, 606);
  const std::vector<double> b = rmsr_series(causal, 607);
  const double max_a = *std::max_element(a.begin(), a.end());
  const double max_b = *std::max_element(b.begin(), b.end());
  const double p = welch_p(a, b);
  return {max_a < kRmsrThreshold && max_b < kRmsrThreshold && p > kLevel,
          "max RMSR " + fmt(max_a) + " (reflective), " + fmt(max_b) + " (causal indicator), Welch p " +
              fmt(p)};
}

// 7 -------------------------------------------------------------------------
Outcome proportionality_calibration() {
  const auto start = Clock::now();
  const auto rejection_rate = [](const Scenario& s, std::size_t reps, std::uint64_t seed) {
    std::size_t rejected = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      const Dataset d = replicate_data(s, 5000, seed, r);
      const ProportionalityReport rep = structural_proportionality_test(
          d, "Y", d.covariate_names(), derive_seed(seed, StreamFamily::study, r));
      rejected += rep.rejected(kLevel);
    }
    return static_cast<double>(rejected) / static_cast<double>(reps);
  };
  const double size = rejection_rate(fixture_structural_reflective(), 1000, 707);
  const double power = rejection_rate(fixture_indicator_causal_reflective(), 200, 708);
  const double elapsed = seconds_since(start);
  return {size >= kSizeLow && size <= kSizeHigh && power >= kMinPower && elapsed < kCalibrationBudget,
          "size " + fmt(size) + " over 1000 reps, power " + fmt(power) + " over 200 reps, " +
              fmt(elapsed) + " s"};
}

// 8 -------------------------------------------------------------------------
Outcome longitudinal_oracle() {
  const TwoWaveParams params = fixture_two_wave_confounding().two_wave;
  const StrategySlopes exact = analytic_bias(params, 0);
  const Dataset d = simulate_two_wave(params, 100000, 808);
  const StrategyReport report = analyze_strategies(d, 0, MeasureSpec{}, &params);
  const double naive = report[Strategy::naive].estimate;
  const double adjusted = report[Strategy::current_plus_prior].estimate;
  const bool analytic_ok = std::abs(exact[Strategy::naive] - 0.1) <= kAnalyticTol &&
                           std::abs(exact[Strategy::current_plus_prior]) <= kAnalyticTol;
  return {analytic_ok && std::abs(naive - 0.1) <= kLongitudinalTol && std::abs(adjusted) <= kLongitudinalTol,
          "naive " + fmt(naive) + " (analytic " + fmt(exact[Strategy::naive]) + "), current_plus_prior " +
              fmt(adjusted) + " (analytic " + fmt(exact[Strategy::current_plus_prior]) + ")"};
}

// 9 -------------------------------------------------------------------------
Outcome item_pattern() {
  const Scenario s = fixture_social_integration_like();
  constexpr std::size_t causal = 0;
  std::size_t matched = 0;
  for (std::size_t r = 0; r < 100; ++r) {
    const Dataset d = replicate_data(s, 50000, 909, r);
    const auto items = item_by_item(d, "Y", d.covariate_names(), ItemMode::joint);
    bool ok = true;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const double z = items[i].coefficient / items[i].standard_error;
      ok = ok && (i == causal ? std::abs(z) > 3.0 : std::abs(z) <= 3.0);
    }
    matched += ok;
  }
  return {matched >= 95, std::to_string(matched) + "/100 replicates show the pattern"};
}

// 10 ------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome reproducibility() {
  const fs::path scratch = fs::temp_directory_path() / "mvtlab_acceptance_repro";
  fs::remove_all(scratch);
  std::vector<fs::path> configs;
  for (const auto& entry : fs::directory_iterator(MVTLAB_CONFIG_DIR))
    if (entry.path().extension() == ".json") configs.push_back(entry.path());
  std::sort(configs.begin(), configs.end());

  std::size_t identical = 0, files = 0;
  std::string mismatches;
  for (const fs::path& path : configs) {
    std::vector<std::vector<fs::path>> outputs;
    for (int run = 0; run < 2; ++run) {
      ExperimentConfig c = parse_config(path);
      c.out_dir = scratch / ("run" + std::to_string(run));
      c.jobs = run + 1;  // the second run also changes the worker count
      outputs.push_back(write_reports(c, run_experiment(c)));
    }
    bool same = outputs[0].size() == outputs[1].size() && !outputs[0].empty();
    for (std::size_t i = 0; same && i < outputs[0].size(); ++i) {
      ++files;
      same = slurp(outputs[0][i]) == slurp(outputs[1][i]);
    }
    if (same)
      ++identical;
    else
      mismatches += " " + path.filename().string();
  }
  fs::remove_all(scratch);
  return {!configs.empty() && identical == configs.size(),
          std::to_string(identical) + "/" + std::to_string(configs.size()) + " configs byte-identical (" +
              std::to_string(files) + " files)" + (mismatches.empty() ? "" : "; differ:" + mismatches)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"exact identity battery", exact_identity_battery},
      {"derivation chain attribution", chain_attribution},
      {"version redefinition repair", redefinition_repair},
      {"empirical convergence", empirical_convergence},
      {"regression bridge", regression_bridge},
      {"fit indistinguishability", fit_indistinguishability},
      {"proportionality calibration", proportionality_calibration},
      {"longitudinal oracle", longitudinal_oracle},
      {"item-by-item pattern", item_pattern},
      {"reproducibility", reproducibility},
  };
  int failures = 0;
  int index = 0;
  for (const Criterion& c : criteria) {
    ++index;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", index, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", index - failures, index);
  return failures == 0 ? 0 : 1;
}
