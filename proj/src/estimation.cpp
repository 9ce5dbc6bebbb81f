#include "mvtlab/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

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

bool matches(double value, double target) {
  return std::abs(value - target) <= 1e-9 * std::max(1.0, std::abs(target));
}

std::size_t index_of(const std::vector<std::string>& names, std::string_view name) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw MissingColumn("no coefficient named '" + std::string(name) + "'");
}

RegressionFit solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd* w,
                    std::vector<std::string> names) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (n <= p)
    throw InsufficientRows(std::to_string(n) + " rows for " + std::to_string(p) +
                           " coefficients");
  Eigen::MatrixXd xs = x;
  Eigen::VectorXd ys = y;
  if (w) {
    const Eigen::VectorXd root = w->cwiseSqrt();
    xs = root.asDiagonal() * x;
    ys = root.asDiagonal() * y;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
  if (qr.rank() < p) {
    std::string detail;
    for (Eigen::Index j = qr.rank(); j < p; ++j)
      detail += (detail.empty() ? "" : ", ") + names[static_cast<std::size_t>(qr.colsPermutation().indices()(j))];
    throw RankDeficient("design matrix has rank " + std::to_string(qr.rank()) + " < " +
                        std::to_string(p) + " (collinear: " + detail + ")");
  }
  RegressionFit fit;
  fit.names = std::move(names);
  fit.coefficients = qr.solve(ys);
  const Eigen::VectorXd resid = ys - xs * fit.coefficients;
  fit.n = static_cast<std::size_t>(n);
  fit.residual_variance = resid.squaredNorm() / static_cast<double>(n - p);
  // (X'WX)^{-1} from the triangular factor: P R^{-1} R^{-T} P'
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd rinv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd cov_perm = rinv * rinv.transpose();
  const Eigen::MatrixXd cov = qr.colsPermutation() * cov_perm * qr.colsPermutation().transpose();
  fit.standard_errors = (cov.diagonal() * fit.residual_variance).cwiseMax(0.0).cwiseSqrt();
  return fit;
}

}  // namespace

double RegressionFit::coefficient(std::string_view name) const {
  return coefficients(static_cast<Eigen::Index>(index_of(names, name)));
}

double RegressionFit::standard_error(std::string_view name) const {
  return standard_errors(static_cast<Eigen::Index>(index_of(names, name)));
}

Eigen::MatrixXd design_matrix(const Dataset& data, const std::vector<std::string>& regressors,
                              std::vector<std::string>* names) {
  const auto n = static_cast<Eigen::Index>(data.rows());
  std::vector<std::string> labels{"(intercept)"};
  std::vector<Eigen::VectorXd> columns{Eigen::VectorXd::Ones(n)};
  for (const std::string& name : regressors) {
    const Column& col = data.column(name);
    if (!col.categorical) {
      labels.push_back(name);
      columns.push_back(Eigen::Map<const Eigen::VectorXd>(col.values.data(), n));
      continue;
    }
    std::vector<double> levels = col.values;
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    for (std::size_t l = 1; l < levels.size(); ++l) {
      Eigen::VectorXd dummy(n);
      for (Eigen::Index r = 0; r < n; ++r)
        dummy(r) = col.values[static_cast<std::size_t>(r)] == levels[l] ? 1.0 : 0.0;
      labels.push_back(name + "=" + show(levels[l]));
      columns.push_back(std::move(dummy));
    }
  }
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = columns[j];
  if (names) *names = std::move(labels);
  return x;
}

RegressionFit fit_ols(const Dataset& data, std::string_view outcome,
                      const std::vector<std::string>& regressors) {
  const std::vector<double>& y = data.values(outcome);
  std::vector<std::string> names;
  const Eigen::MatrixXd x = design_matrix(data, regressors, &names);
  return solve(x, Eigen::Map<const Eigen::VectorXd>(y.data(), x.rows()), nullptr, std::move(names));
}

RegressionFit fit_weighted(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                           const Eigen::VectorXd& weights, std::vector<std::string> names) {
  if (weights.size() != design.rows() || response.size() != design.rows())
    throw InvalidParameter("weighted fit: design, response and weights differ in length");
  if ((weights.array() <= 0.0).any()) throw InvalidParameter("weighted fit: weights must be positive");
  if (names.size() != static_cast<std::size_t>(design.cols()))
    throw InvalidParameter("weighted fit: one name per design column is required");
  return solve(design, response, &weights, std::move(names));
}

ContrastEstimate standardized_contrast(const Dataset& data, std::string_view outcome,
                                       std::string_view exposure, double a, double a_star,
                                       const std::vector<std::string>& strata) {
  const std::vector<double>& y = data.values(outcome);
  const std::vector<double>& x = data.values(exposure);
  std::vector<const std::vector<double>*> keys;
  for (const auto& s : strata) keys.push_back(&data.values(s));
  if (data.rows() == 0) throw PositivityViolation("no rows");

  struct Cell {
    double count = 0.0;
    double n_a = 0.0, sum_a = 0.0;
    double n_star = 0.0, sum_star = 0.0;
  };
  std::map<std::vector<double>, Cell> cells;
  std::vector<double> key(keys.size());
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t j = 0; j < keys.size(); ++j) key[j] = (*keys[j])[r];
    Cell& cell = cells[key];
    cell.count += 1.0;
    if (matches(x[r], a)) {
      cell.n_a += 1.0;
      cell.sum_a += y[r];
    }
    if (matches(x[r], a_star)) {
      cell.n_star += 1.0;
      cell.sum_star += y[r];
    }
  }
  ContrastEstimate est;
  est.a = a;
  est.a_star = a_star;
  const double total = static_cast<double>(data.rows());
  for (const auto& [k, cell] : cells) {
    if (cell.n_a == 0.0 || cell.n_star == 0.0) {
      std::string label;
      for (std::size_t j = 0; j < k.size(); ++j)
        label += (j ? ", " : "") + strata[j] + "=" + show(k[j]);
      throw PositivityViolation("stratum {" + label + "} has no rows with " +
                                std::string(exposure) + "=" +
                                show(cell.n_a == 0.0 ? a : a_star));
    }
    const double contrast = cell.sum_a / cell.n_a - cell.sum_star / cell.n_star;
    const double weight = cell.count / total;
    est.strata.push_back(k);
    est.contrasts.push_back(contrast);
    est.weights.push_back(weight);
    est.value += weight * contrast;
  }
  return est;
}

std::string_view to_string(ItemMode mode) {
  return mode == ItemMode::marginal ? "marginal" : "joint";
}

std::vector<ItemAssociation> item_by_item(const Dataset& data, std::string_view outcome,
                                          const std::vector<std::string>& covariates,
                                          ItemMode mode) {
  const std::vector<std::string> indicators = data.indicator_names();
  if (indicators.empty()) throw MissingColumn("missing column 'X_1'");
  std::vector<ItemAssociation> out;
  if (mode == ItemMode::joint) {
    std::vector<std::string> regressors = indicators;
    regressors.insert(regressors.end(), covariates.begin(), covariates.end());
    const RegressionFit fit = fit_ols(data, outcome, regressors);
    for (const auto& name : indicators)
      out.push_back({name, fit.coefficient(name), fit.standard_error(name), mode});
    return out;
  }
  for (const auto& name : indicators) {
    std::vector<std::string> regressors{name};
    regressors.insert(regressors.end(), covariates.begin(), covariates.end());
    const RegressionFit fit = fit_ols(data, outcome, regressors);
    out.push_back({name, fit.coefficient(name), fit.standard_error(name), mode});
  }
  return out;
}

std::vector<std::size_t> bootstrap_rows(std::size_t n, std::uint64_t seed, std::size_t draw) {
  Stream rng(seed, StreamFamily::bootstrap, draw);
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = rng.below(n);
  return rows;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidParameter("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Interval bootstrap_ci(const Dataset& data, const Statistic& statistic, std::size_t replicates,
                      std::uint64_t seed, double level, int jobs) {
  if (replicates < 100)
    throw TooFewReplicates("bootstrap needs at least 100 replicates, got " +
                           std::to_string(replicates));
  if (!(level > 0.0 && level < 1.0)) throw InvalidParameter("confidence level must lie in (0, 1)");
  std::vector<double> draws(replicates);
  parallel_for(replicates, jobs, [&](std::size_t b) {
    const auto rows = bootstrap_rows(data.rows(), seed, b);
    draws[b] = statistic(data.take(rows));
  });
  Interval out;
  out.estimate = statistic(data);
  out.level = level;
  out.replicates = replicates;
  out.lower = quantile(draws, (1.0 - level) / 2.0);
  out.upper = quantile(draws, 1.0 - (1.0 - level) / 2.0);
  return out;
}

}  // namespace mvtlab
