#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvtlab/dgp_engine.hpp"
#include "mvtlab/estimation.hpp"

namespace mvtlab {

struct FactorFit {
  Eigen::VectorXd loadings;
  Eigen::VectorXd uniquenesses;  // diagonal minus squared loading, floored at 0
  double rmsr = 0.0;             // root mean square off-diagonal residual
  std::size_t iterations = 0;
  bool converged = false;
  bool heywood = false;          // some uniqueness would have been negative
};

struct FactorOptions {
  double tolerance = 1e-8;       // max loading change between sweeps
  std::size_t max_iterations = 500;
  bool strict = false;           // throw HeywoodCase instead of flagging it
};

/// Unweighted least-squares one-factor fit: coordinate updates of each
/// loading given the others, minimising squared off-diagonal residuals.
/// Loadings are signed so that their sum is non-negative. Throws
/// NonPSDInput, DimensionTooSmall, HeywoodCase (strict only).
FactorFit fit_one_factor(const Eigen::MatrixXd& covariance, const FactorOptions& options = {});

/// loadings * loadings' + diag(uniquenesses). Throws NegativeUniqueness,
/// WeightLengthMismatch.
Eigen::MatrixXd implied_covariance(const Eigen::VectorXd& loadings,
                                   const Eigen::VectorXd& uniquenesses);

/// Row-wise weighted sum of indicators plus N(0, error_sd^2) noise drawn
/// per row from `seed`. Throws WeightLengthMismatch.
std::vector<double> formative_composite(const Eigen::MatrixXd& indicators,
                                        const std::vector<double>& weights, double error_sd = 0.0,
                                        std::uint64_t seed = 0);

/// Sample covariance of the named columns (divisor n - 1).
Eigen::MatrixXd sample_covariance(const Dataset& data, const std::vector<std::string>& columns);

struct ProportionalityOptions {
  ItemMode mode = ItemMode::marginal;
  std::size_t bootstrap = 500;
  int jobs = 1;
};

struct ProportionalityReport {
  std::vector<std::string> indicators;
  Eigen::VectorXd loadings;      // from the covariate-partialled indicator covariance
  Eigen::VectorXd associations;  // partial Cov(X_i, Y | C), or joint slopes
  Eigen::VectorXd slopes;        // per-indicator regression coefficients
  Eigen::VectorXd direction;     // what the associations should be proportional to
  double kappa = 0.0;
  double statistic = 0.0;
  std::size_t df = 0;
  double p_value = 1.0;
  std::size_t bootstrap = 0;
  ItemMode mode = ItemMode::marginal;
  bool heywood = false;

  bool rejected(double level = 0.05) const { return p_value < level; }
};

/// Tests whether indicator-outcome associations are proportional to the
/// one-factor loadings, as they must be when only the common factor affects
/// the outcome. Marginal mode compares partial covariances with the loadings;
/// joint mode compares joint regression slopes with loading / uniqueness.
/// The Wald-type statistic uses the bootstrap covariance of (associations,
/// direction) and a chi-square reference with (indicators - 1) df. Throws
/// TooFewIndicators, TooFewReplicates (B < 500), regression errors.
ProportionalityReport structural_proportionality_test(const Dataset& data, const std::string& outcome,
                                                      const std::vector<std::string>& covariates,
                                                      std::uint64_t seed,
                                                      const ProportionalityOptions& options = {});

}  // namespace mvtlab
