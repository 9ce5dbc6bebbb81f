#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mvtlab/dgp_engine.hpp"

namespace mvtlab {

struct RegressionFit {
  std::vector<std::string> names;  // "(intercept)", then regressors; dummies as "C_1=2"
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;
  double residual_variance = 0.0;
  std::size_t n = 0;

  /// Throws MissingColumn for unknown names.
  double coefficient(std::string_view name) const;
  double standard_error(std::string_view name) const;
};

/// Intercept plus regressor columns, categorical ones expanded to level
/// indicators against the lowest level. `names` receives the column labels.
Eigen::MatrixXd design_matrix(const Dataset& data, const std::vector<std::string>& regressors,
                              std::vector<std::string>* names = nullptr);

/// Least squares of `outcome` on an intercept plus `regressors` by
/// column-pivoting QR. Categorical columns enter as level indicators with the
/// lowest level as reference. Throws InsufficientRows, RankDeficient,
/// MissingColumn.
RegressionFit fit_ols(const Dataset& data, std::string_view outcome,
                      const std::vector<std::string>& regressors);

/// Weighted least squares on an explicit design (first column is the
/// intercept if one is wanted). Weights must be positive and act as
/// analytic weights: residual variance is the weighted RSS over rows - p.
RegressionFit fit_weighted(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                           const Eigen::VectorXd& weights, std::vector<std::string> names);

struct ContrastEstimate {
  double value = 0.0;
  double a = 1.0;
  double a_star = 0.0;
  std::vector<std::vector<double>> strata;  // stratum keys, sorted
  std::vector<double> contrasts;            // E[Y | a, c] - E[Y | a*, c]
  std::vector<double> weights;              // P(c)
};

/// Plug-in standardization over the joint levels of `strata` columns.
/// Throws PositivityViolation when a stratum lacks an exposure level.
ContrastEstimate standardized_contrast(const Dataset& data, std::string_view outcome,
                                       std::string_view exposure, double a, double a_star,
                                       const std::vector<std::string>& strata);

enum class ItemMode { marginal, joint };
std::string_view to_string(ItemMode mode);

struct ItemAssociation {
  std::string indicator;
  double coefficient = 0.0;
  double standard_error = 0.0;
  ItemMode mode = ItemMode::marginal;
};

/// Per-indicator outcome associations: one regression per indicator
/// (marginal) or a single regression on all indicators (joint), each
/// adjusted for `covariates`.
std::vector<ItemAssociation> item_by_item(const Dataset& data, std::string_view outcome,
                                          const std::vector<std::string>& covariates,
                                          ItemMode mode);

struct Interval {
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  std::size_t replicates = 0;
};

using Statistic = std::function<double(const Dataset&)>;

/// Row indices of bootstrap resample `draw`.
std::vector<std::size_t> bootstrap_rows(std::size_t n, std::uint64_t seed, std::size_t draw);

/// Percentile interval from B nonparametric resamples. Throws
/// TooFewReplicates for B < 100.
Interval bootstrap_ci(const Dataset& data, const Statistic& statistic, std::size_t replicates,
                      std::uint64_t seed, double level = 0.95, int jobs = 1);

/// Empirical quantile with linear interpolation (type 7).
double quantile(std::vector<double> values, double p);

}  // namespace mvtlab
