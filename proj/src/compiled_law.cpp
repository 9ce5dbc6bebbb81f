#include "mvtlab/compiled_law.hpp"

#include <algorithm>
#include <cmath>

#include "mvtlab/errors.hpp"

namespace mvtlab {

namespace {

// Exponential-family style tilt of a level distribution towards higher
// (sign > 0) or lower (sign < 0) levels. The two tilts average back to `p`,
// so mixing them with equal weight leaves the marginal law unchanged.
std::vector<double> tilt(const std::vector<double>& p, double sign, double strength) {
  double mean = 0.0;
  for (std::size_t l = 0; l < p.size(); ++l) mean += p[l] * static_cast<double>(l);
  double spread = 0.0;
  for (std::size_t l = 0; l < p.size(); ++l)
    if (p[l] > 0.0) spread = std::max(spread, std::abs(static_cast<double>(l) - mean));
  if (spread == 0.0) return p;
  const double s = std::clamp(strength, 0.0, 1.0) * sign / spread;
  std::vector<double> out(p.size());
  for (std::size_t l = 0; l < p.size(); ++l)
    out[l] = p[l] * (1.0 + s * (static_cast<double>(l) - mean));
  return out;
}

// Splits every hidden configuration u into (u, 0) and (u, 1) with equal
// probability; index of (u, b) is 2u + b.
void split_hidden(DiscreteLaw& law) {
  const std::size_t h = law.hidden();
  std::vector<double> probs(2 * h);
  std::vector<double> effects(2 * h);
  std::vector<Matrix> versions(2 * h);
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t b = 0; b < 2; ++b) {
      probs[2 * u + b] = 0.5 * law.hidden_probs[u];
      effects[2 * u + b] = law.hidden_outcome_effects[u];
      versions[2 * u + b] = law.version_probs[u];
    }
  }
  for (auto& tables : law.indicator_probs) {
    std::vector<Matrix> doubled(2 * h);
    for (std::size_t u = 0; u < h; ++u) doubled[2 * u] = doubled[2 * u + 1] = tables[u];
    tables = std::move(doubled);
  }
  law.hidden_probs = std::move(probs);
  law.hidden_outcome_effects = std::move(effects);
  law.version_probs = std::move(versions);
}

// Affine representation of a node: mean + load . shocks, shocks independent
// standard normal.
struct Affine {
  double mean = 0.0;
  Eigen::VectorXd load;
  double variance() const { return load.squaredNorm(); }
};

}  // namespace

DiscreteLaw compile_discrete(const Scenario& scenario) {
  if (scenario.mode != ScenarioMode::discrete)
    throw ContinuousScenarioNotEnumerable("scenario is not in discrete mode");
  DiscreteLaw law = scenario.discrete;
  for (const Violation& v : scenario.violations) {
    switch (v.kind) {
      case ViolationKind::direct_indicator_effect:
        for (std::size_t t : v.targets) law.indicator_effects[t] += v.magnitude;
        break;
      case ViolationKind::consistency_breach:
        for (std::size_t t : v.targets) law.version_breach[t] += v.magnitude;
        break;
      case ViolationKind::common_cause_u: {
        split_hidden(law);
        for (std::size_t u = 0; u < law.hidden(); ++u) {
          const double sign = u % 2 == 1 ? 1.0 : -1.0;
          if (u % 2 == 1) law.hidden_outcome_effects[u] += v.magnitude;
          for (std::size_t t : v.targets)
            for (auto& row : law.indicator_probs[t][u]) row = tilt(row, sign, v.source_effect);
        }
        break;
      }
      case ViolationKind::unmeasured_confounder: {
        split_hidden(law);
        for (std::size_t u = 0; u < law.hidden(); ++u) {
          const double sign = u % 2 == 1 ? 1.0 : -1.0;
          if (u % 2 == 1) law.hidden_outcome_effects[u] += v.magnitude;
          for (auto& row : law.version_probs[u]) row = tilt(row, sign, v.source_effect);
        }
        break;
      }
    }
  }
  return law;
}

std::size_t ContinuousLaw::version_size() const noexcept {
  std::size_t size = 0;
  if (model.version.latent) size += model.latent_dim;
  if (model.version.indicators) size += model.indicators();
  if (model.version.hidden) size += hidden();
  return size;
}

ContinuousLaw compile_continuous(const Scenario& scenario) {
  if (scenario.mode != ScenarioMode::continuous)
    throw InvalidParameter("scenario is not in continuous mode");
  ContinuousLaw law;
  law.model = scenario.continuous;
  law.covariate_probs = scenario.covariate_probs;
  law.outcome_noise_sd = scenario.outcome_noise_sd;
  const std::size_t n = law.model.indicators();
  const std::size_t dim = law.model.latent_dim;
  for (const Violation& v : scenario.violations) {
    if (v.kind == ViolationKind::direct_indicator_effect) {
      for (std::size_t t : v.targets) law.model.indicator_effects[t] += v.magnitude;
      continue;
    }
    std::vector<double> to_latent(dim, 0.0);
    std::vector<double> to_indicator(n, 0.0);
    if (v.kind == ViolationKind::common_cause_u) {
      for (std::size_t t : v.targets) to_indicator[t] = v.source_effect;
    } else if (v.kind == ViolationKind::unmeasured_confounder) {
      if (law.model.version.latent) {
        if (v.targets.empty()) to_latent.assign(dim, v.source_effect);
        for (std::size_t t : v.targets) to_latent[t] = v.source_effect;
      } else {
        for (std::size_t t : v.targets) to_indicator[t] = v.source_effect;
      }
    } else {
      throw InvalidParameter("consistency_breach is only defined for discrete scenarios");
    }
    law.hidden_to_latent.push_back(to_latent);
    law.hidden_to_indicator.push_back(to_indicator);
    law.hidden_to_outcome.push_back(v.magnitude);
  }
  return law;
}

LinearSem gaussian_sem(const ContinuousLaw& law, std::size_t stratum, SemLayout* layout) {
  const ContinuousModel& m = law.model;
  if (m.ordinal()) throw NonlinearParams("ordinal indicators have no linear-Gaussian form");
  const auto r = static_cast<Eigen::Index>(law.hidden());
  const auto dim = static_cast<Eigen::Index>(m.latent_dim);
  const auto n = static_cast<Eigen::Index>(m.indicators());
  SemLayout at{0, r, r + dim, r + dim + n};
  if (layout) *layout = at;
  LinearSem sem(at.outcome + 1);

  for (Eigen::Index u = 0; u < r; ++u) sem.set_noise(u, u, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sdi = m.error_sds[i];
    for (Eigen::Index j = 0; j < n; ++j) {
      const double rho = m.error_correlation.empty() ? (i == j ? 1.0 : 0.0)
                                                     : m.error_correlation[i][j];
      sem.set_noise(at.indicator + i, at.indicator + j, rho * sdi * m.error_sds[j]);
    }
    sem.set_intercept(at.indicator + i, m.indicator_means[stratum][i]);
  }
  for (Eigen::Index j = 0; j < dim; ++j) {
    sem.set_intercept(at.latent + j, m.latent_means[stratum][j]);
    if (m.direction == LatentDirection::reflective) {
      sem.set_noise(at.latent + j, at.latent + j, 1.0);
      for (Eigen::Index i = 0; i < n; ++i)
        sem.set_path(at.indicator + i, at.latent + j, m.loadings[i][j]);
    } else {
      sem.set_noise(at.latent + j, at.latent + j, m.latent_error_sd * m.latent_error_sd);
      for (Eigen::Index i = 0; i < n; ++i)
        sem.set_path(at.latent + j, at.indicator + i, m.loadings[i][j]);
    }
  }
  for (Eigen::Index u = 0; u < r; ++u) {
    for (Eigen::Index j = 0; j < dim; ++j)
      sem.add_path(at.latent + j, u, law.hidden_to_latent[u][j]);
    for (Eigen::Index i = 0; i < n; ++i)
      sem.add_path(at.indicator + i, u, law.hidden_to_indicator[u][i]);
    sem.set_path(at.outcome, u, law.hidden_to_outcome[u]);
  }
  for (Eigen::Index j = 0; j < dim; ++j) sem.set_path(at.outcome, at.latent + j, m.latent_effects[j]);
  for (Eigen::Index i = 0; i < n; ++i)
    sem.set_path(at.outcome, at.indicator + i, m.indicator_effects[i]);
  sem.set_intercept(at.outcome, m.covariate_effects[stratum]);
  sem.set_noise(at.outcome, at.outcome, law.outcome_noise_sd * law.outcome_noise_sd);
  return sem;
}

Eigen::MatrixXd error_loading(const ContinuousModel& model) {
  const auto n = static_cast<Eigen::Index>(model.indicators());
  Eigen::MatrixXd factor = Eigen::MatrixXd::Identity(n, n);
  if (!model.error_correlation.empty()) {
    Eigen::MatrixXd corr(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) corr(i, j) = model.error_correlation[i][j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
    factor = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  for (Eigen::Index i = 0; i < n; ++i) factor.row(i) *= model.error_sds[static_cast<std::size_t>(i)];
  return factor;
}

double ordinal_level(std::span<const double> cutpoints, double value) noexcept {
  std::size_t level = 0;
  for (double cut : cutpoints) level += value > cut ? 1 : 0;
  return static_cast<double>(level);
}

double ordinal_mean(std::span<const double> cutpoints, double mean, double sd) {
  double total = 0.0;
  for (double cut : cutpoints) {
    if (sd > 0.0)
      total += 0.5 * std::erfc((cut - mean) / (sd * std::sqrt(2.0)));
    else if (mean > cut)
      total += 1.0;
  }
  return total;
}

double potential_outcome_mean(const ContinuousLaw& law, std::size_t stratum,
                              std::span<const double> version) {
  const ContinuousModel& m = law.model;
  const std::size_t r = law.hidden();
  const std::size_t dim = m.latent_dim;
  const std::size_t n = m.indicators();
  if (version.size() != law.version_size())
    throw InvalidParameter("version vector has the wrong length");

  // shock layout: hidden, latent, indicator errors, formative latent error
  const Eigen::Index shocks = static_cast<Eigen::Index>(r + dim + n + 1);
  const auto zero = [&] { return Affine{0.0, Eigen::VectorXd::Zero(shocks)}; };

  std::size_t pos = 0;
  std::vector<double> fixed_latent, fixed_indicator, fixed_hidden;
  if (m.version.latent) fixed_latent.assign(version.begin() + pos, version.begin() + pos + dim), pos += dim;
  if (m.version.indicators)
    fixed_indicator.assign(version.begin() + pos, version.begin() + pos + n), pos += n;
  if (m.version.hidden) fixed_hidden.assign(version.begin() + pos, version.begin() + pos + r);

  std::vector<Affine> hidden(r, zero());
  for (std::size_t u = 0; u < r; ++u) {
    if (!fixed_hidden.empty())
      hidden[u].mean = fixed_hidden[u];
    else
      hidden[u].load(static_cast<Eigen::Index>(u)) = 1.0;
  }

  const Eigen::MatrixXd errors = error_loading(m);

  std::vector<Affine> latent(dim, zero());
  std::vector<double> indicator_mean(n, 0.0);  // E[X] on the observed scale
  const auto indicator_star = [&](std::size_t i) {
    Affine x = zero();
    x.mean = m.indicator_means[stratum][i];
    for (std::size_t j = 0; j < n; ++j)
      x.load(static_cast<Eigen::Index>(r + dim + j)) = errors(i, j);
    for (std::size_t u = 0; u < r; ++u) {
      x.mean += law.hidden_to_indicator[u][i] * hidden[u].mean;
      x.load += law.hidden_to_indicator[u][i] * hidden[u].load;
    }
    return x;
  };
  const auto observed_mean = [&](std::size_t i, const Affine& x) {
    if (!fixed_indicator.empty()) return fixed_indicator[i];
    if (i < m.ordinal_cutpoints.size() && !m.ordinal_cutpoints[i].empty())
      return ordinal_mean(m.ordinal_cutpoints[i], x.mean, std::sqrt(x.variance()));
    return x.mean;
  };

  if (m.direction == LatentDirection::reflective) {
    for (std::size_t j = 0; j < dim; ++j) {
      if (!fixed_latent.empty()) {
        latent[j].mean = fixed_latent[j];
        continue;
      }
      latent[j].mean = m.latent_means[stratum][j];
      latent[j].load(static_cast<Eigen::Index>(r + j)) = 1.0;
      for (std::size_t u = 0; u < r; ++u) {
        latent[j].mean += law.hidden_to_latent[u][j] * hidden[u].mean;
        latent[j].load += law.hidden_to_latent[u][j] * hidden[u].load;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      Affine x = indicator_star(i);
      for (std::size_t j = 0; j < dim; ++j) {
        x.mean += m.loadings[i][j] * latent[j].mean;
        x.load += m.loadings[i][j] * latent[j].load;
      }
      indicator_mean[i] = observed_mean(i, x);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) indicator_mean[i] = observed_mean(i, indicator_star(i));
    if (!fixed_latent.empty()) {
      latent[0].mean = fixed_latent[0];
    } else {
      latent[0].mean = m.latent_means[stratum][0];
      for (std::size_t i = 0; i < n; ++i) latent[0].mean += m.loadings[i][0] * indicator_mean[i];
      for (std::size_t u = 0; u < r; ++u)
        latent[0].mean += law.hidden_to_latent[u][0] * hidden[u].mean;
    }
  }

  double y = m.covariate_effects[stratum];
  for (std::size_t j = 0; j < dim; ++j) y += m.latent_effects[j] * latent[j].mean;
  for (std::size_t i = 0; i < n; ++i) y += m.indicator_effects[i] * indicator_mean[i];
  for (std::size_t u = 0; u < r; ++u) y += law.hidden_to_outcome[u] * hidden[u].mean;
  return y;
}

}  // namespace mvtlab
