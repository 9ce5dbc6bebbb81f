#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mvtlab/linear_sem.hpp"
#include "mvtlab/scenario.hpp"

namespace mvtlab {

/// Discrete law with every injected violation absorbed into the tables.
/// Violations are applied in canonical order, so injection order never
/// changes the result. Each common cause or unmeasured confounder adds an
/// independent binary hidden factor with P(U = 1) = 1/2.
DiscreteLaw compile_discrete(const Scenario& scenario);

/// Continuous law: the structural model plus standard-normal hidden factors
/// introduced by violations.
struct ContinuousLaw {
  ContinuousModel model;          // direct indicator effects absorbed
  Matrix hidden_to_latent;        // [r][j]
  Matrix hidden_to_indicator;     // [r][i]
  std::vector<double> hidden_to_outcome;  // [r]
  std::vector<double> covariate_probs;
  double outcome_noise_sd = 1.0;

  std::size_t hidden() const noexcept { return hidden_to_outcome.size(); }
  /// Length of the version variable K under model.version.
  std::size_t version_size() const noexcept;
};

ContinuousLaw compile_continuous(const Scenario& scenario);

/// Node layout of the Gaussian system for one stratum:
/// [U_1..U_r, eta_1..eta_m, X_1..X_n, Y].
struct SemLayout {
  Eigen::Index hidden = 0;
  Eigen::Index latent = 0;
  Eigen::Index indicator = 0;
  Eigen::Index outcome = 0;
};

/// Path-tracing representation of a continuous law (linear indicators only).
LinearSem gaussian_sem(const ContinuousLaw& law, std::size_t stratum,
                       SemLayout* layout = nullptr);

/// E[Y_k | c]: mean outcome when the version variable is set to `version`
/// (components ordered latent, indicators, hidden) in stratum c. Handles
/// ordinal indicators through normal tail probabilities.
double potential_outcome_mean(const ContinuousLaw& law, std::size_t stratum,
                              std::span<const double> version);

/// n x n matrix M with M M' = D R D, the indicator error covariance.
Eigen::MatrixXd error_loading(const ContinuousModel& model);

/// Ordinal level of a continuous value: number of cutpoints below it.
double ordinal_level(std::span<const double> cutpoints, double value) noexcept;

/// Mean of the ordinal indicator obtained by cutting N(mean, sd^2) at
/// `cutpoints` into levels 0..L.
double ordinal_mean(std::span<const double> cutpoints, double mean, double sd);

}  // namespace mvtlab
