#include "mvtlab/mvt_verifier.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "mvtlab/compiled_law.hpp"
#include "mvtlab/errors.hpp"
#include "mvtlab/parallel.hpp"
#include "mvtlab/random.hpp"

namespace mvtlab {

namespace {

std::string show(double x) {
  std::ostringstream out;
  out.precision(12);
  out << x;
  return out.str();
}

// Per-stratum view of a population table at one exposure value.
struct ExposureSlice {
  std::vector<double> mass;             // [c] P(c, a)
  std::vector<double> outcome;          // [c] sum_k P(c, k, a) E[Y | c, k, a]
  Matrix version_mass;                  // [c][k] P(c, k, a)
  Matrix version_outcome;               // [c][k] E[Y | c, k, a]
};

ExposureSlice slice(const PopulationTable& table, double a) {
  const std::size_t strata = table.strata();
  const std::size_t versions = table.versions();
  ExposureSlice s{std::vector<double>(strata, 0.0), std::vector<double>(strata, 0.0),
                  Matrix(strata, std::vector<double>(versions, 0.0)),
                  Matrix(strata, std::vector<double>(versions, 0.0))};
  const auto level = table.exposure_index(a);
  if (level) {
    for (const auto& cell : table.cells) {
      if (cell.exposure != *level) continue;
      s.mass[cell.stratum] += cell.prob;
      s.outcome[cell.stratum] += cell.prob * cell.mean_outcome;
      s.version_mass[cell.stratum][cell.version] = cell.prob;
      s.version_outcome[cell.stratum][cell.version] = cell.mean_outcome;
    }
  }
  for (std::size_t c = 0; c < strata; ++c) {
    if (table.covariate_probs[c] > 0.0 && s.mass[c] <= 0.0)
      throw PositivityViolation("exposure value " + show(a) + " has zero probability in stratum " +
                                std::to_string(c));
  }
  return s;
}

// sum_c P(c) sum_k g(c, k) P(k | a, c), for each side of the contrast
template <class Term>
double version_contrast(const PopulationTable& table, const ExposureSlice& on,
                        const ExposureSlice& off, Term term) {
  double total = 0.0;
  for (std::size_t c = 0; c < table.strata(); ++c) {
    const double pc = table.covariate_probs[c];
    if (pc <= 0.0) continue;
    double side_on = 0.0, side_off = 0.0;
    for (std::size_t k = 0; k < table.versions(); ++k) {
      const double p_on = on.version_mass[c][k] / on.mass[c];
      const double p_off = off.version_mass[c][k] / off.mass[c];
      if (p_on > 0.0) side_on += term(c, k, on) * p_on;
      if (p_off > 0.0) side_off += term(c, k, off) * p_off;
    }
    total += pc * (side_on - side_off);
  }
  return total;
}

double sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

bool few_levels(const std::vector<double>& values, std::size_t limit) {
  std::set<double> seen;
  for (double v : values) {
    seen.insert(v);
    if (seen.size() > limit) return false;
  }
  return true;
}

std::vector<std::vector<std::size_t>> level_grid(const Matrix& levels) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> idx(levels.size(), 0);
  while (true) {
    out.push_back(idx);
    std::size_t i = levels.size();
    while (true) {
      if (i == 0) return out;
      --i;
      if (++idx[i] < levels[i].size()) break;
      idx[i] = 0;
    }
  }
}

// Discretised N(mean, var): nodes at +-4 sd with normal-density weights.
template <class F>
double normal_expectation(double mean, double var, std::size_t nodes, F f) {
  if (var <= 0.0 || nodes < 2) return f(mean);
  const double sdv = std::sqrt(var);
  double total = 0.0, weight_sum = 0.0;
  for (std::size_t g = 0; g < nodes; ++g) {
    const double z = -4.0 + 8.0 * static_cast<double>(g) / static_cast<double>(nodes - 1);
    const double w = std::exp(-0.5 * z * z);
    total += w * f(mean + sdv * z);
    weight_sum += w;
  }
  return total / weight_sum;
}

IdentityReport quadrature_identity(const Scenario& scenario, const Contrast& contrast,
                                   const VerifyOptions& options) {
  if (scenario.mode != ScenarioMode::continuous)
    throw InvalidParameter("quadrature mode needs a continuous scenario");
  const ContinuousLaw law = compile_continuous(scenario);
  const ContinuousModel& m = law.model;
  if (!m.version.latent || m.version.indicators || m.version.hidden || m.latent_dim != 1)
    throw InvalidParameter("quadrature mode needs a scalar latent version variable");
  if (!scenario.measure.linear())
    throw InvalidParameter("quadrature mode needs a linear measure");
  const std::vector<double> w = scenario.measure.linear_weights(m.indicators());

  double lhs = 0.0, coarse = 0.0, fine = 0.0;
  const std::size_t nodes = std::max<std::size_t>(options.nodes, 2);
  for (std::size_t c = 0; c < scenario.strata(); ++c) {
    const double pc = scenario.covariate_probs[c];
    if (pc <= 0.0) continue;
    SemLayout at;
    const LinearSem sem = gaussian_sem(law, c, &at);
    const Eigen::MatrixXd cov = sem.covariance();
    const Eigen::VectorXd mean = sem.mean();
    Eigen::VectorXd wa = Eigen::VectorXd::Zero(cov.rows());
    for (std::size_t i = 0; i < w.size(); ++i) wa(at.indicator + static_cast<Eigen::Index>(i)) = w[i];
    const double mean_a = wa.dot(mean);
    const double var_a = wa.dot(cov * wa);
    if (var_a <= 0.0) throw PositivityViolation("measure has zero variance");
    const double cov_ya = cov.row(at.outcome).dot(wa);
    const double cov_ea = cov.row(at.latent).dot(wa);
    const double var_e = cov(at.latent, at.latent);
    const auto observed = [&](double a) { return mean(at.outcome) + cov_ya / var_a * (a - mean_a); };
    const auto trial = [&](double a, std::size_t g) {
      const double m_eta = mean(at.latent) + cov_ea / var_a * (a - mean_a);
      const double v_eta = var_e - cov_ea * cov_ea / var_a;
      return normal_expectation(m_eta, v_eta, g, [&](double eta) {
        const double version[1] = {eta};
        return potential_outcome_mean(law, c, version);
      });
    };
    lhs += pc * (observed(contrast.a) - observed(contrast.a_star));
    coarse += pc * (trial(contrast.a, nodes) - trial(contrast.a_star, nodes));
    fine += pc * (trial(contrast.a, 2 * nodes - 1) - trial(contrast.a_star, 2 * nodes - 1));
  }
  IdentityReport r;
  r.mode = VerifyMode::quadrature;
  r.a = contrast.a;
  r.a_star = contrast.a_star;
  r.lhs = lhs;
  r.rhs = fine;
  r.abs_diff = std::abs(lhs - fine);
  r.size = 2 * nodes - 1;
  r.discretisation = std::abs(coarse - fine);
  r.tolerance = options.tolerance.value_or(1e-10) + r.discretisation;
  r.pass = r.abs_diff <= r.tolerance;
  return r;
}

}  // namespace

std::string_view to_string(VerifyMode mode) {
  switch (mode) {
    case VerifyMode::exact: return "exact";
    case VerifyMode::empirical: return "empirical";
    case VerifyMode::quadrature: return "quadrature";
  }
  return "?";
}

VerifyMode parse_verify_mode(std::string_view text) {
  if (text == "exact") return VerifyMode::exact;
  if (text == "empirical") return VerifyMode::empirical;
  if (text == "quadrature") return VerifyMode::quadrature;
  throw InvalidParameter("unknown verification mode '" + std::string(text) + "'");
}

double mvt_lhs(const PopulationTable& table, double a, double a_star) {
  const ExposureSlice on = slice(table, a);
  const ExposureSlice off = slice(table, a_star);
  double total = 0.0;
  for (std::size_t c = 0; c < table.strata(); ++c) {
    const double pc = table.covariate_probs[c];
    if (pc <= 0.0) continue;
    total += pc * (on.outcome[c] / on.mass[c] - off.outcome[c] / off.mass[c]);
  }
  return total;
}

double mvt_rhs(const PopulationTable& table, double a, double a_star) {
  if (table.potential_means.size() != table.strata())
    throw MissingPotentialOutcomes("population table carries no potential-outcome means");
  return version_contrast(table, slice(table, a), slice(table, a_star),
                          [&](std::size_t c, std::size_t k, const ExposureSlice&) {
                            return table.potential_means[c][k];
                          });
}

double mvt_lhs(const Dataset& data, double a, double a_star) {
  return standardized_contrast(data, "Y", "A", a, a_star, data.covariate_names()).value;
}

double mvt_rhs(const Dataset& data, double a, double a_star) {
  if (data.has("EY_K"))
    return standardized_contrast(data, "EY_K", "A", a, a_star, data.covariate_names()).value;
  const std::vector<std::string> potentials = data.potential_names();
  if (potentials.empty() || !data.has("K"))
    throw MissingPotentialOutcomes("dataset has no K / Y_k_* columns (observed data only)");
  const std::vector<std::string> strata = data.covariate_names();
  const std::vector<double>& versions = data.values("K");
  const std::vector<double>& exposure = data.values("A");
  const std::size_t kk = potentials.size();
  std::vector<const std::vector<double>*> ys;
  for (const auto& name : potentials) ys.push_back(&data.values(name));
  std::vector<const std::vector<double>*> keys;
  for (const auto& s : strata) keys.push_back(&data.values(s));

  struct Cell {
    double count = 0.0, n_a = 0.0, n_star = 0.0;
    std::vector<double> sum_y, k_a, k_star;
  };
  std::map<std::vector<double>, Cell> cells;
  std::vector<double> key(keys.size());
  const auto hit = [](double v, double t) { return std::abs(v - t) <= 1e-9 * std::max(1.0, std::abs(t)); };
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t j = 0; j < keys.size(); ++j) key[j] = (*keys[j])[r];
    Cell& cell = cells[key];
    if (cell.sum_y.empty()) cell.sum_y.assign(kk, 0.0), cell.k_a.assign(kk, 0.0), cell.k_star.assign(kk, 0.0);
    cell.count += 1.0;
    for (std::size_t k = 0; k < kk; ++k) cell.sum_y[k] += (*ys[k])[r];
    const double kv = versions[r];
    if (kv < 1.0 || kv > static_cast<double>(kk) || kv != std::floor(kv))
      throw InvalidParameter("K column must hold 1-based version indices");
    const auto k = static_cast<std::size_t>(kv) - 1;
    if (hit(exposure[r], a)) cell.n_a += 1.0, cell.k_a[k] += 1.0;
    if (hit(exposure[r], a_star)) cell.n_star += 1.0, cell.k_star[k] += 1.0;
  }
  double total = 0.0;
  for (const auto& [k, cell] : cells) {
    if (cell.n_a == 0.0 || cell.n_star == 0.0)
      throw PositivityViolation("a stratum lacks rows at one of the contrast values");
    double side = 0.0;
    for (std::size_t v = 0; v < kk; ++v)
      side += cell.sum_y[v] / cell.count * (cell.k_a[v] / cell.n_a - cell.k_star[v] / cell.n_star);
    total += cell.count / static_cast<double>(data.rows()) * side;
  }
  return total;
}

std::pair<double, double> empirical_sides(const Dataset& data, double a, double a_star) {
  if (data.has("EY_K") && !few_levels(data.values("A"), 64)) {
    std::vector<std::string> regressors{"A"};
    for (const auto& c : data.covariate_names()) regressors.push_back(c);
    const double scale = a - a_star;
    return {fit_ols(data, "Y", regressors).coefficient("A") * scale,
            fit_ols(data, "EY_K", regressors).coefficient("A") * scale};
  }
  return {mvt_lhs(data, a, a_star), mvt_rhs(data, a, a_star)};
}

IdentityReport verify_identity(const Scenario& scenario, const VerifyOptions& options) {
  const Contrast contrast = options.contrast.value_or(scenario.contrast.value_or(Contrast{}));
  if (options.mode == VerifyMode::quadrature) return quadrature_identity(scenario, contrast, options);

  IdentityReport r;
  r.mode = options.mode;
  r.a = contrast.a;
  r.a_star = contrast.a_star;
  if (options.mode == VerifyMode::exact) {
    const PopulationTable table = enumerate_population(scenario);
    r.lhs = mvt_lhs(table, contrast.a, contrast.a_star);
    r.rhs = mvt_rhs(table, contrast.a, contrast.a_star);
    r.abs_diff = std::abs(r.lhs - r.rhs);
    r.size = table.cells.size();
    r.tolerance = options.tolerance.value_or(1e-10);
    r.pass = r.abs_diff <= r.tolerance;
    return r;
  }

  const std::size_t reps = std::max<std::size_t>(options.replicates, 1);
  std::vector<double> lhs(reps), rhs(reps);
  const auto one = [&](std::size_t i, int jobs) {
    const Dataset data =
        sample_dataset(scenario, options.n, derive_seed(options.seed, StreamFamily::replicate, i), jobs);
    std::tie(lhs[i], rhs[i]) = empirical_sides(data, contrast.a, contrast.a_star);
    return data;
  };
  double se = 0.0;
  if (reps == 1) {
    const Dataset data = one(0, options.jobs);
    std::vector<double> diffs(options.bootstrap, std::numeric_limits<double>::quiet_NaN());
    parallel_for(options.bootstrap, options.jobs, [&](std::size_t b) {
      const auto rows = bootstrap_rows(data.rows(), options.seed, b);
      try {
        const auto [l, h] = empirical_sides(data.take(rows), contrast.a, contrast.a_star);
        diffs[b] = l - h;
      } catch (const PositivityViolation&) {
      }
    });
    std::erase_if(diffs, [](double d) { return std::isnan(d); });
    if (diffs.size() < 2) throw TooFewReplicates("bootstrap resamples lost positivity");
    se = sd(diffs);
  } else {
    parallel_for(reps, options.jobs, [&](std::size_t i) { one(i, 1); });
    std::vector<double> diffs(reps);
    for (std::size_t i = 0; i < reps; ++i) diffs[i] = lhs[i] - rhs[i];
    se = sd(diffs) / std::sqrt(static_cast<double>(reps));
  }
  r.lhs = std::accumulate(lhs.begin(), lhs.end(), 0.0) / static_cast<double>(reps);
  r.rhs = std::accumulate(rhs.begin(), rhs.end(), 0.0) / static_cast<double>(reps);
  r.abs_diff = std::abs(r.lhs - r.rhs);
  r.size = options.n;
  r.replicates = reps;
  r.standard_error = se;
  r.tolerance = options.tolerance.value_or(3.0 * se);
  r.pass = r.abs_diff <= r.tolerance;
  return r;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ChainStep step) {
  switch (step) {
    case ChainStep::none: return "none";
    case ChainStep::arithmetic: return "iterated_expectations";
    case ChainStep::independence: return "independence";
    case ChainStep::consistency: return "consistency";
    case ChainStep::unconfoundedness: return "unconfoundedness";
  }
  return "?";
}

std::optional<std::size_t> ChainReport::break_index() const {
  if (first_break == ChainStep::none) return std::nullopt;
  return static_cast<std::size_t>(first_break);
}

ChainReport verify_derivation_chain(const PopulationTable& table, double a, double a_star,
                                    double tolerance) {
  if (table.potential_means.size() != table.strata() ||
      table.potential_given_version.size() != table.strata())
    throw MissingPotentialOutcomes("population table carries no potential-outcome means");
  const ExposureSlice on = slice(table, a);
  const ExposureSlice off = slice(table, a_star);
  ChainReport report;
  report.tolerance = tolerance;
  report.values[0] = mvt_lhs(table, a, a_star);
  report.values[1] = version_contrast(table, on, off,
                                      [](std::size_t c, std::size_t k, const ExposureSlice& s) {
                                        return s.version_outcome[c][k];
                                      });
  report.values[2] = version_contrast(table, on, off, [&](std::size_t c, std::size_t k, const ExposureSlice&) {
    return table.observed_given_version[c][k];
  });
  report.values[3] = version_contrast(table, on, off, [&](std::size_t c, std::size_t k, const ExposureSlice&) {
    return table.potential_given_version[c][k];
  });
  report.values[4] = mvt_rhs(table, a, a_star);
  for (std::size_t i = 0; i < 4; ++i) {
    report.gaps[i] = std::abs(report.values[i + 1] - report.values[i]);
    if (report.first_break == ChainStep::none && report.gaps[i] > tolerance)
      report.first_break = static_cast<ChainStep>(i + 1);
  }
  return report;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Augmentation augmentation) {
  return augmentation == Augmentation::include_indicators ? "include_indicators"
                                                          : "include_common_cause";
}

Augmentation parse_augmentation(std::string_view text) {
  if (text == "include_indicators") return Augmentation::include_indicators;
  if (text == "include_common_cause") return Augmentation::include_common_cause;
  throw InvalidParameter("unknown augmentation '" + std::string(text) + "'");
}

Scenario redefine_versions(const Scenario& scenario, Augmentation augmentation) {
  const bool has_hidden_cause =
      std::any_of(scenario.violations.begin(), scenario.violations.end(), [](const Violation& v) {
        return v.kind == ViolationKind::common_cause_u || v.kind == ViolationKind::unmeasured_confounder;
      });
  if (scenario.mode == ScenarioMode::continuous) {
    Scenario out = scenario;
    if (augmentation == Augmentation::include_indicators) {
      out.continuous.version.indicators = true;
    } else {
      if (!has_hidden_cause)
        throw InapplicableAugmentation("include_common_cause: the scenario has no hidden common cause U");
      out.continuous.version.hidden = true;
    }
    validate_scenario(out);
    return out;
  }
  if (scenario.mode != ScenarioMode::discrete)
    throw InapplicableAugmentation("version redefinition applies to discrete and continuous scenarios");

  const DiscreteLaw law = compile_discrete(scenario);
  const std::size_t strata = scenario.strata();
  const std::size_t hidden = law.hidden();
  const std::size_t n = law.indicators();
  DiscreteLaw out;

  if (augmentation == Augmentation::include_indicators) {
    const auto grid = level_grid(law.indicator_levels);
    out.hidden_probs = law.hidden_probs;
    out.hidden_outcome_effects = law.hidden_outcome_effects;
    out.version_probs.assign(hidden, Matrix(strata));
    out.indicator_levels = law.indicator_levels;
    out.indicator_probs.assign(n, std::vector<Matrix>(hidden));
    out.outcome_means.assign(strata, {});
    for (std::size_t k = 0; k < law.versions(); ++k) {
      for (const auto& cell : grid) {
        std::vector<double> px(hidden, 1.0);
        bool reachable = false;
        for (std::size_t u = 0; u < hidden; ++u) {
          for (std::size_t i = 0; i < n; ++i) px[u] *= law.indicator_probs[i][u][k][cell[i]];
          for (std::size_t c = 0; c < strata; ++c)
            reachable = reachable || (px[u] > 0.0 && law.version_probs[u][c][k] > 0.0);
        }
        if (!reachable) continue;
        for (std::size_t u = 0; u < hidden; ++u)
          for (std::size_t c = 0; c < strata; ++c)
            out.version_probs[u][c].push_back(law.version_probs[u][c][k] * px[u]);
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<double> one_hot(law.indicator_levels[i].size(), 0.0);
          one_hot[cell[i]] = 1.0;
          for (std::size_t u = 0; u < hidden; ++u) out.indicator_probs[i][u].push_back(one_hot);
        }
        double shift = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          shift += law.indicator_effects[i] * law.indicator_levels[i][cell[i]];
        for (std::size_t c = 0; c < strata; ++c) out.outcome_means[c].push_back(law.outcome_means[c][k] + shift);
        out.version_breach.push_back(law.version_breach[k]);
      }
    }
    out.indicator_effects.assign(n, 0.0);
  } else {
    if (hidden < 2)
      throw InapplicableAugmentation("include_common_cause: the scenario has no hidden common cause U");
    out.hidden_probs = {1.0};
    out.hidden_outcome_effects = {0.0};
    out.version_probs.assign(1, Matrix(strata));
    out.indicator_levels = law.indicator_levels;
    out.indicator_probs.assign(n, std::vector<Matrix>(1));
    out.outcome_means.assign(strata, {});
    for (std::size_t k = 0; k < law.versions(); ++k) {
      for (std::size_t u = 0; u < hidden; ++u) {
        bool reachable = false;
        for (std::size_t c = 0; c < strata; ++c) reachable = reachable || law.version_probs[u][c][k] > 0.0;
        if (!reachable) continue;
        for (std::size_t c = 0; c < strata; ++c)
          out.version_probs[0][c].push_back(law.hidden_probs[u] * law.version_probs[u][c][k]);
        for (std::size_t i = 0; i < n; ++i) out.indicator_probs[i][0].push_back(law.indicator_probs[i][u][k]);
        for (std::size_t c = 0; c < strata; ++c)
          out.outcome_means[c].push_back(law.outcome_means[c][k] + law.hidden_outcome_effects[u]);
        out.version_breach.push_back(law.version_breach[k]);
      }
    }
    out.indicator_effects = law.indicator_effects;
  }
  out.version_values.resize(out.version_breach.size());
  std::iota(out.version_values.begin(), out.version_values.end(), 1.0);

  Scenario result;
  result.kind = ScenarioKind::coarsened_versions;
  result.mode = ScenarioMode::discrete;
  result.covariate_probs = scenario.covariate_probs;
  result.discrete = std::move(out);
  result.measure = scenario.measure;
  result.outcome_noise_sd = scenario.outcome_noise_sd;
  result.contrast = scenario.contrast;
  validate_scenario(result);
  return result;
}

RegressionFit population_regression(const PopulationTable& table) {
  const std::size_t strata = table.strata();
  const std::size_t levels = table.exposure_levels.size();
  Matrix mass(strata, std::vector<double>(levels, 0.0));
  Matrix total(strata, std::vector<double>(levels, 0.0));
  for (const auto& cell : table.cells) {
    mass[cell.stratum][cell.exposure] += cell.prob;
    total[cell.stratum][cell.exposure] += cell.prob * cell.mean_outcome;
  }
  std::vector<std::array<std::size_t, 2>> rows;
  for (std::size_t c = 0; c < strata; ++c)
    for (std::size_t a = 0; a < levels; ++a)
      if (mass[c][a] > 0.0) rows.push_back({c, a});
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(1 + strata);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, p);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto [c, a] = rows[static_cast<std::size_t>(r)];
    x(r, 0) = 1.0;
    x(r, 1) = table.exposure_levels[a];
    if (c > 0) x(r, static_cast<Eigen::Index>(1 + c)) = 1.0;
    y(r) = total[c][a] / mass[c][a];
    w(r) = mass[c][a];
  }
  std::vector<std::string> names{"(intercept)", "A"};
  for (std::size_t c = 1; c < strata; ++c) names.push_back("C_1=" + std::to_string(c));
  return fit_weighted(x, y, w, std::move(names));
}

std::vector<IdentityReport> run_battery(std::size_t count, std::uint64_t seed,
                                        const RandomScenarioOptions& options, int jobs) {
  std::vector<IdentityReport> reports(count);
  parallel_for(count, jobs, [&](std::size_t i) {
    const Scenario s = random_discrete_scenario(derive_seed(seed, StreamFamily::battery, i), options);
    reports[i] = verify_identity(s);
  });
  return reports;
}

}  // namespace mvtlab
