#pragma once

#include <cstddef>

#include <Eigen/Dense>

namespace mvtlab {

/// Acyclic linear structural equation system V = intercept + B V + e with
/// Var(e) = D. `paths(i, j)` is the direct effect of node j on node i.
class LinearSem {
 public:
  explicit LinearSem(Eigen::Index nodes)
      : paths_(Eigen::MatrixXd::Zero(nodes, nodes)),
        noise_(Eigen::MatrixXd::Zero(nodes, nodes)),
        intercept_(Eigen::VectorXd::Zero(nodes)) {}

  Eigen::Index nodes() const noexcept { return paths_.rows(); }

  void set_path(Eigen::Index to, Eigen::Index from, double coefficient) {
    paths_(to, from) = coefficient;
  }
  void add_path(Eigen::Index to, Eigen::Index from, double coefficient) {
    paths_(to, from) += coefficient;
  }
  void set_noise(Eigen::Index a, Eigen::Index b, double covariance) {
    noise_(a, b) = covariance;
    noise_(b, a) = covariance;
  }
  void set_intercept(Eigen::Index node, double value) { intercept_(node) = value; }

  /// Total-effect matrix (I - B)^{-1}.
  Eigen::MatrixXd total_effects() const {
    const Eigen::MatrixXd identity =
        Eigen::MatrixXd::Identity(nodes(), nodes());
    return (identity - paths_).partialPivLu().solve(identity);
  }

  Eigen::VectorXd mean() const { return total_effects() * intercept_; }

  Eigen::MatrixXd covariance() const {
    const Eigen::MatrixXd t = total_effects();
    return t * noise_ * t.transpose();
  }

  /// Population least-squares coefficients of `response` on `regressors`
  /// (all centred, so no intercept is needed).
  static Eigen::VectorXd regression(const Eigen::MatrixXd& covariance,
                                    const Eigen::VectorXi& regressors,
                                    Eigen::Index response) {
    const Eigen::Index p = regressors.size();
    Eigen::MatrixXd szz(p, p);
    Eigen::VectorXd szy(p);
    for (Eigen::Index r = 0; r < p; ++r) {
      szy(r) = covariance(regressors(r), response);
      for (Eigen::Index s = 0; s < p; ++s)
        szz(r, s) = covariance(regressors(r), regressors(s));
    }
    return szz.ldlt().solve(szy);
  }

 private:
  Eigen::MatrixXd paths_;
  Eigen::MatrixXd noise_;
  Eigen::VectorXd intercept_;
};

}  // namespace mvtlab
