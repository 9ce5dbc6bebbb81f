#include "mvtlab/psychometrics.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/tools/minima.hpp>

#include "mvtlab/errors.hpp"
#include "mvtlab/parallel.hpp"
#include "mvtlab/random.hpp"

namespace mvtlab {

namespace {

void check_psd(const Eigen::MatrixXd& s) {
  if (s.rows() != s.cols()) throw NonPSDInput("covariance matrix is not square");
  if (!s.allFinite()) throw NonPSDInput("covariance matrix has non-finite entries");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw NonPSDInput("covariance matrix is not symmetric");
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale)
    throw NonPSDInput("covariance matrix has a negative eigenvalue (" +
                      std::to_string(eig.eigenvalues().minCoeff()) + ")");
}

// Outcome and indicator moments after partialling out the covariate design,
// for one set of row weights (all ones, or bootstrap counts).
struct Moments {
  Eigen::MatrixXd indicators;  // partial covariance of X
  Eigen::VectorXd cross;       // partial Cov(X, Y)
};

Moments partial_moments(const Eigen::MatrixXd& z, std::size_t design_cols, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd m = z.transpose() * w.asDiagonal() * z;
  const auto p0 = static_cast<Eigen::Index>(design_cols);
  const Eigen::Index rest = m.rows() - p0;
  const Eigen::MatrixXd m11 = m.topLeftCorner(p0, p0);
  const Eigen::MatrixXd m12 = m.topRightCorner(p0, rest);
  const Eigen::MatrixXd part =
      m.bottomRightCorner(rest, rest) - m12.transpose() * m11.completeOrthogonalDecomposition().solve(m12);
  const Eigen::MatrixXd s = part / (w.sum() - static_cast<double>(design_cols));
  const Eigen::Index n = rest - 1;
  Moments out{s.topLeftCorner(n, n), s.col(n).head(n)};
  out.indicators = 0.5 * (out.indicators + out.indicators.transpose());
  return out;
}

struct Sides {
  Eigen::VectorXd associations, slopes, direction, loadings;
  bool heywood = false;
};

Sides sides(const Moments& mo, ItemMode mode, bool strict_uniqueness) {
  Sides out;
  const FactorFit fit = fit_one_factor(mo.indicators);
  out.loadings = fit.loadings;
  out.heywood = fit.heywood;
  if (mode == ItemMode::marginal) {
    out.associations = mo.cross;
    out.slopes = mo.cross.cwiseQuotient(mo.indicators.diagonal());
    out.direction = fit.loadings;
  } else {
    out.slopes = mo.indicators.ldlt().solve(mo.cross);
    out.associations = out.slopes;
    if (fit.heywood || fit.uniquenesses.minCoeff() <= 0.0) {
      if (strict_uniqueness) throw HeywoodCase("joint mode needs positive uniquenesses");
      out.direction = fit.loadings.cwiseQuotient(fit.uniquenesses.cwiseMax(1e-12));
    } else {
      out.direction = fit.loadings.cwiseQuotient(fit.uniquenesses);
    }
  }
  return out;
}

}  // namespace

FactorFit fit_one_factor(const Eigen::MatrixXd& covariance, const FactorOptions& options) {
  if (covariance.rows() < 3)
    throw DimensionTooSmall("one-factor fit needs at least 3 indicators, got " +
                            std::to_string(covariance.rows()));
  check_psd(covariance);
  const Eigen::Index n = covariance.rows();

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance);
  Eigen::VectorXd lambda = eig.eigenvectors().col(n - 1) * std::sqrt(std::max(eig.eigenvalues()(n - 1), 0.0));

  FactorFit fit;
  for (fit.iterations = 1; fit.iterations <= options.max_iterations; ++fit.iterations) {
    double change = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double num = 0.0, den = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        num += covariance(i, j) * lambda(j);
        den += lambda(j) * lambda(j);
      }
      const double next = den > 0.0 ? num / den : 0.0;
      change = std::max(change, std::abs(next - lambda(i)));
      lambda(i) = next;
    }
    if (change < options.tolerance) {
      fit.converged = true;
      break;
    }
  }
  fit.iterations = std::min(fit.iterations, options.max_iterations);
  if (lambda.sum() < 0.0) lambda = -lambda;

  fit.uniquenesses.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double psi = covariance(i, i) - lambda(i) * lambda(i);
    if (psi < -1e-12 * std::max(1.0, covariance(i, i))) {
      if (options.strict)
        throw HeywoodCase("indicator " + std::to_string(i + 1) + " has negative uniqueness " +
                          std::to_string(psi));
      fit.heywood = true;
    }
    fit.uniquenesses(i) = std::max(psi, 0.0);
  }
  fit.loadings = lambda;

  double ss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = covariance(i, j) - lambda(i) * lambda(j);
      ss += r * r;
    }
  fit.rmsr = std::sqrt(ss / static_cast<double>(n * (n - 1) / 2));
  return fit;
}

Eigen::MatrixXd implied_covariance(const Eigen::VectorXd& loadings, const Eigen::VectorXd& uniquenesses) {
  if (loadings.size() != uniquenesses.size())
    throw WeightLengthMismatch("loadings and uniquenesses differ in length");
  for (Eigen::Index i = 0; i < uniquenesses.size(); ++i)
    if (uniquenesses(i) < 0.0)
      throw NegativeUniqueness("uniqueness " + std::to_string(i + 1) + " is negative");
  Eigen::MatrixXd out = loadings * loadings.transpose();
  out.diagonal() += uniquenesses;
  return out;
}

std::vector<double> formative_composite(const Eigen::MatrixXd& indicators, const std::vector<double>& weights,
                                        double error_sd, std::uint64_t seed) {
  if (static_cast<Eigen::Index>(weights.size()) != indicators.cols())
    throw WeightLengthMismatch("composite has " + std::to_string(weights.size()) + " weights for " +
                               std::to_string(indicators.cols()) + " indicators");
  if (!(error_sd >= 0.0)) throw InvalidParameter("composite error sd must be non-negative");
  const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(weights.data(), indicators.cols());
  const Eigen::VectorXd sum = indicators * w;
  std::vector<double> out(static_cast<std::size_t>(indicators.rows()));
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r] = sum(static_cast<Eigen::Index>(r));
    if (error_sd > 0.0) out[r] += error_sd * Stream(seed, StreamFamily::composite_noise, r).normal();
  }
  return out;
}

Eigen::MatrixXd sample_covariance(const Dataset& data, const std::vector<std::string>& columns) {
  if (data.rows() < 2) throw InsufficientRows("covariance needs at least 2 rows");
  const auto n = static_cast<Eigen::Index>(data.rows());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j)
    x.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(data.values(columns[j]).data(), n);
  const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
  return centred.transpose() * centred / static_cast<double>(n - 1);
}

ProportionalityReport structural_proportionality_test(const Dataset& data, const std::string& outcome,
                                                      const std::vector<std::string>& covariates,
                                                      std::uint64_t seed,
                                                      const ProportionalityOptions& options) {
  const std::vector<std::string> names = data.indicator_names();
  if (names.size() < 3)
    throw TooFewIndicators("proportionality test needs at least 3 indicators, found " +
                           std::to_string(names.size()));
  if (options.bootstrap < 500)
    throw TooFewReplicates("proportionality test needs B >= 500, got " + std::to_string(options.bootstrap));

  const Eigen::MatrixXd design = design_matrix(data, covariates);
  const auto rows = static_cast<Eigen::Index>(data.rows());
  const auto k = static_cast<Eigen::Index>(names.size());
  if (rows <= design.cols() + k + 1) throw InsufficientRows("too few rows for the proportionality test");
  Eigen::MatrixXd z(rows, design.cols() + k + 1);
  z.leftCols(design.cols()) = design;
  for (Eigen::Index i = 0; i < k; ++i)
    z.col(design.cols() + i) = Eigen::Map<const Eigen::VectorXd>(data.values(names[static_cast<std::size_t>(i)]).data(), rows);
  z.col(z.cols() - 1) = Eigen::Map<const Eigen::VectorXd>(data.values(outcome).data(), rows);
  const auto design_cols = static_cast<std::size_t>(design.cols());
  {
    // marginal mode tolerates collinear indicators (noiseless data); the
    // joint slopes need them linearly independent
    const Eigen::Index cols = options.mode == ItemMode::joint ? z.cols() - 1 : design.cols();
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z.leftCols(cols));
    if (qr.rank() < cols) throw RankDeficient("indicators and covariates are collinear");
  }

  const Sides full = sides(partial_moments(z, design_cols, Eigen::VectorXd::Ones(rows)), options.mode, true);

  // bootstrap draws of the stacked (associations, direction)
  const std::size_t draws = options.bootstrap;
  Eigen::MatrixXd stacked(static_cast<Eigen::Index>(draws), 2 * k);
  parallel_for(draws, options.jobs, [&](std::size_t b) {
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(rows);
    for (std::size_t r : bootstrap_rows(data.rows(), seed, b)) counts(static_cast<Eigen::Index>(r)) += 1.0;
    Sides s = sides(partial_moments(z, design_cols, counts), options.mode, false);
    if (s.direction.dot(full.direction) < 0.0) s.direction = -s.direction;
    stacked.row(static_cast<Eigen::Index>(b)) << s.associations.transpose(), s.direction.transpose();
  });
  const Eigen::MatrixXd centred = stacked.rowwise() - stacked.colwise().mean();
  const Eigen::MatrixXd v = centred.transpose() * centred / static_cast<double>(draws - 1);
  const Eigen::MatrixXd v_bb = v.topLeftCorner(k, k);
  const Eigen::MatrixXd v_bd = v.topRightCorner(k, k);
  const Eigen::MatrixXd v_dd = v.bottomRightCorner(k, k);

  const Eigen::VectorXd& b = full.associations;
  const Eigen::VectorXd& d = full.direction;
  const auto quadratic = [&](double kappa) {
    const Eigen::VectorXd r = b - kappa * d;
    const Eigen::MatrixXd w = v_bb - kappa * (v_bd + v_bd.transpose()) + kappa * kappa * v_dd;
    return r.dot(w.ldlt().solve(r));
  };

  const double dd = d.squaredNorm();
  const double start = dd > 0.0 ? b.dot(d) / dd : 0.0;
  double spread = 0.0;
  for (Eigen::Index i = 0; i < stacked.rows(); ++i) {
    const Eigen::VectorXd bi = stacked.row(i).head(k).transpose();
    const Eigen::VectorXd di = stacked.row(i).tail(k).transpose();
    const double ki = di.squaredNorm() > 0.0 ? bi.dot(di) / di.squaredNorm() : 0.0;
    spread += (ki - start) * (ki - start);
  }
  spread = std::sqrt(spread / static_cast<double>(draws));
  const double half = 10.0 * spread + 1e-9 * std::max(1.0, std::abs(start));
  const auto best = boost::math::tools::brent_find_minima(quadratic, start - half, start + half, 52);

  ProportionalityReport report;
  report.indicators = names;
  report.loadings = full.loadings;
  report.associations = b;
  report.slopes = full.slopes;
  report.direction = d;
  report.kappa = best.first;
  report.statistic = std::max(best.second, 0.0);
  report.df = names.size() - 1;
  report.p_value = boost::math::cdf(boost::math::complement(
      boost::math::chi_squared(static_cast<double>(report.df)), report.statistic));
  report.bootstrap = draws;
  report.mode = options.mode;
  report.heywood = full.heywood;
  return report;
}

}  // namespace mvtlab
