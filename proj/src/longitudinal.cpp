#include "mvtlab/longitudinal.hpp"

#include <cmath>
#include <string>

#include "mvtlab/compiled_law.hpp"
#include "mvtlab/errors.hpp"
#include "mvtlab/estimation.hpp"
#include "mvtlab/linear_sem.hpp"
#include "mvtlab/parallel.hpp"
#include "mvtlab/random.hpp"

namespace mvtlab {

namespace {

std::string wave_name(std::string_view prefix, std::size_t i, int wave) {
  return std::string(prefix) + std::to_string(i + 1) + "_t" + std::to_string(wave);
}

}  // namespace

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::naive: return "naive";
    case Strategy::current_all: return "current_all";
    case Strategy::current_plus_prior: return "current_plus_prior";
    case Strategy::prior_summary: return "prior_summary";
  }
  return "?";
}

Dataset simulate_two_wave(const TwoWaveParams& p, std::size_t n, std::uint64_t seed, int jobs) {
  p.validate();
  if (n < 1) throw InvalidParameter("sample size must be at least 1");
  const std::size_t m = p.indicators();
  const auto discretise = [&](std::size_t i, double value) {
    if (i < p.ordinal_cutpoints.size() && !p.ordinal_cutpoints[i].empty())
      return ordinal_level(p.ordinal_cutpoints[i], value);
    return value;
  };

  std::vector<std::vector<double>> x0(m, std::vector<double>(n)), x1(m, std::vector<double>(n));
  std::vector<std::vector<double>> e0, e1;
  if (p.latent) {
    e0.assign(m, std::vector<double>(n));
    e1.assign(m, std::vector<double>(n));
  }
  std::vector<double> covariate(n), outcome(n);

  parallel_for(n, jobs, [&](std::size_t row) {
    Stream rng(seed, StreamFamily::two_wave_rows, row);
    const double c = p.has_covariate ? rng.normal() : 0.0;
    std::vector<double> prior(m), current(m);
    for (std::size_t i = 0; i < m; ++i) {
      double v = p.error_sd_prior[i] * rng.normal();
      if (p.has_covariate) v += p.covariate_to_prior[i] * c;
      prior[i] = p.latent ? v : discretise(i, v);
    }
    for (std::size_t i = 0; i < m; ++i) {
      double v = p.error_sd_current[i] * rng.normal();
      for (std::size_t j = 0; j < m; ++j) v += p.lag[i][j] * prior[j];
      current[i] = p.latent ? v : discretise(i, v);
    }
    double y = p.outcome_noise_sd * rng.normal();
    for (std::size_t i = 0; i < m; ++i) y += p.outcome_current[i] * current[i] + p.outcome_prior[i] * prior[i];
    if (p.has_covariate) y += p.covariate_to_outcome * c;

    for (std::size_t i = 0; i < m; ++i) {
      if (p.latent) {
        e0[i][row] = prior[i];
        e1[i][row] = current[i];
        x0[i][row] = discretise(i, p.loadings_prior[i] * prior[i] + p.indicator_noise_sd[i] * rng.normal());
        x1[i][row] = discretise(i, p.loadings_current[i] * current[i] + p.indicator_noise_sd[i] * rng.normal());
      } else {
        x0[i][row] = prior[i];
        x1[i][row] = current[i];
      }
    }
    covariate[row] = c;
    outcome[row] = y;
  });

  Dataset data;
  for (std::size_t i = 0; i < m; ++i) data.add_column(wave_name("X_", i, 0), std::move(x0[i]));
  for (std::size_t i = 0; i < m; ++i) data.add_column(wave_name("X_", i, 1), std::move(x1[i]));
  if (p.latent) {
    for (std::size_t i = 0; i < m; ++i) data.add_column(wave_name("ETA_", i, 0), std::move(e0[i]));
    for (std::size_t i = 0; i < m; ++i) data.add_column(wave_name("ETA_", i, 1), std::move(e1[i]));
  }
  if (p.has_covariate) data.add_column("C_1", std::move(covariate));
  data.add_column("Y", std::move(outcome));
  data.provenance = {seed, 0, true};
  return data;
}

StrategySlopes analytic_bias(const TwoWaveParams& p, std::size_t target, const MeasureSpec& summary) {
  p.validate();
  const std::size_t m = p.indicators();
  if (target >= m)
    throw IndexOutOfRange("target indicator " + std::to_string(target + 1) + " out of range 1.." +
                          std::to_string(m));
  if (!p.linear_gaussian())
    throw NonlinearParams("ordinal indicators make the strategy slopes non-linear");
  if (!summary.linear())
    throw NonlinearParams("prior summary measure '" + std::string(to_string(summary.form)) +
                          "' is not linear");
  const std::vector<double> weights = summary.linear_weights(m);

  // nodes: [C] prior(m) current(m) [observed prior(m) observed current(m)] Y
  const auto idx = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
  const std::size_t c_node = 0;
  const std::size_t base = p.has_covariate ? 1 : 0;
  const std::size_t prior0 = base, current0 = base + m;
  const std::size_t obs_prior0 = p.latent ? base + 2 * m : prior0;
  const std::size_t obs_current0 = p.latent ? base + 3 * m : current0;
  const std::size_t y_node = (p.latent ? base + 4 * m : base + 2 * m);
  LinearSem sem(idx(y_node + 1));
  if (p.has_covariate) sem.set_noise(idx(c_node), idx(c_node), 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (p.has_covariate) sem.set_path(idx(prior0 + i), idx(c_node), p.covariate_to_prior[i]);
    sem.set_noise(idx(prior0 + i), idx(prior0 + i), p.error_sd_prior[i] * p.error_sd_prior[i]);
    for (std::size_t j = 0; j < m; ++j) sem.set_path(idx(current0 + i), idx(prior0 + j), p.lag[i][j]);
    sem.set_noise(idx(current0 + i), idx(current0 + i), p.error_sd_current[i] * p.error_sd_current[i]);
    if (p.latent) {
      const double v = p.indicator_noise_sd[i] * p.indicator_noise_sd[i];
      sem.set_path(idx(obs_prior0 + i), idx(prior0 + i), p.loadings_prior[i]);
      sem.set_noise(idx(obs_prior0 + i), idx(obs_prior0 + i), v);
      sem.set_path(idx(obs_current0 + i), idx(current0 + i), p.loadings_current[i]);
      sem.set_noise(idx(obs_current0 + i), idx(obs_current0 + i), v);
    }
    sem.set_path(idx(y_node), idx(current0 + i), p.outcome_current[i]);
    sem.set_path(idx(y_node), idx(prior0 + i), p.outcome_prior[i]);
  }
  if (p.has_covariate) sem.set_path(idx(y_node), idx(c_node), p.covariate_to_outcome);
  sem.set_noise(idx(y_node), idx(y_node), p.outcome_noise_sd * p.outcome_noise_sd);

  // append the prior summary S = w' X^{t-1} as an extra variable
  const Eigen::MatrixXd cov = sem.covariance();
  const Eigen::Index nodes = cov.rows();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(nodes);
  for (std::size_t i = 0; i < m; ++i) w(idx(obs_prior0 + i)) = weights[i];
  Eigen::MatrixXd full(nodes + 1, nodes + 1);
  full.topLeftCorner(nodes, nodes) = cov;
  full.col(nodes).head(nodes) = cov * w;
  full.row(nodes).head(nodes) = (cov * w).transpose();
  full(nodes, nodes) = w.dot(cov * w);
  const Eigen::Index s_node = nodes;

  const auto slope = [&](std::vector<Eigen::Index> regressors) {
    if (p.has_covariate) regressors.push_back(idx(c_node));
    Eigen::VectorXi r(static_cast<Eigen::Index>(regressors.size()));
    for (std::size_t j = 0; j < regressors.size(); ++j) r(idx(j)) = static_cast<int>(regressors[j]);
    return LinearSem::regression(full, r, idx(y_node))(0);
  };
  const Eigen::Index t = idx(obs_current0 + target);
  std::vector<Eigen::Index> all_current{t}, plus_prior{t};
  for (std::size_t i = 0; i < m; ++i) {
    if (i != target) all_current.push_back(idx(obs_current0 + i));
    plus_prior.push_back(idx(obs_prior0 + i));
  }

  StrategySlopes out;
  out.slope[static_cast<std::size_t>(Strategy::naive)] = slope({t});
  out.slope[static_cast<std::size_t>(Strategy::current_all)] = slope(all_current);
  out.slope[static_cast<std::size_t>(Strategy::current_plus_prior)] = slope(plus_prior);
  out.slope[static_cast<std::size_t>(Strategy::prior_summary)] = slope({t, s_node});
  if (p.latent)
    out.true_effect = p.loadings_current[target] != 0.0
                          ? p.outcome_current[target] / p.loadings_current[target]
                          : 0.0;
  else
    out.true_effect = p.outcome_current[target];
  return out;
}

StrategyReport analyze_strategies(const Dataset& data, std::size_t target, const MeasureSpec& summary,
                                  const TwoWaveParams* params) {
  std::vector<std::string> prior_names, current_names;
  for (std::size_t i = 0;; ++i) {
    const std::string name = wave_name("X_", i, 0);
    if (!data.has(name)) break;
    prior_names.push_back(name);
    current_names.push_back(wave_name("X_", i, 1));
    data.column(current_names.back());  // throws MissingColumn
  }
  const std::size_t m = prior_names.size();
  if (m == 0) throw MissingColumn("missing column 'X_1_t0'");
  if (target >= m)
    throw IndexOutOfRange("target indicator " + std::to_string(target + 1) + " out of range 1.." +
                          std::to_string(m));

  Dataset work;
  for (const auto& name : prior_names) work.add_column(name, data.values(name));
  for (const auto& name : current_names) work.add_column(name, data.values(name));
  const std::vector<std::string> covariates = data.covariate_names();
  for (const auto& name : covariates) work.add_column(name, data.values(name), data.column(name).categorical);
  work.add_column("Y", data.values("Y"));
  std::vector<double> summary_column(data.rows());
  std::vector<double> row(m);
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t i = 0; i < m; ++i) row[i] = data.values(prior_names[i])[r];
    summary_column[r] = exposure_value(row, summary);
  }
  work.add_column("S_t0", std::move(summary_column));

  const std::string& t = current_names[target];
  std::vector<std::vector<std::string>> designs(4, std::vector<std::string>{t});
  for (std::size_t i = 0; i < m; ++i) {
    if (i != target) designs[1].push_back(current_names[i]);
    designs[2].push_back(prior_names[i]);
  }
  designs[3].push_back("S_t0");
  for (auto& d : designs) d.insert(d.end(), covariates.begin(), covariates.end());

  std::optional<StrategySlopes> oracle;
  if (params && params->linear_gaussian() && summary.linear())
    oracle = analytic_bias(*params, target, summary);

  StrategyReport report;
  report.target = target;
  report.n = data.rows();
  for (Strategy s : kStrategies) {
    const RegressionFit fit = fit_ols(work, "Y", designs[static_cast<std::size_t>(s)]);
    StrategyResult res;
    res.strategy = s;
    res.estimate = fit.coefficient(t);
    res.standard_error = fit.standard_error(t);
    if (oracle) {
      res.analytic = (*oracle)[s];
      res.true_effect = oracle->true_effect;
      res.bias = res.estimate - oracle->true_effect;
    }
    report.results.push_back(res);
  }
  return report;
}

}  // namespace mvtlab
