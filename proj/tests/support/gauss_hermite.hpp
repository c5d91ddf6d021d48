#ifndef FDRNN_TESTS_GAUSS_HERMITE_HPP
#define FDRNN_TESTS_GAUSS_HERMITE_HPP

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <utility>

namespace fdrnn_tests {

/// Gauss-Hermite quadrature against the standard normal density, via
/// Golub-Welsch on the probabilists' Hermite recurrence.  Weights sum to 1.
/// Independent of any moment-map code under test.
class GaussHermite {
 public:
  explicit GaussHermite(int n) {
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
      const double b = std::sqrt(double(k));
      jac(k, k - 1) = b;
      jac(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
    nodes_ = es.eigenvalues();
    weights_.resize(n);
    for (int i = 0; i < n; ++i) {
      const double v0 = es.eigenvectors()(0, i);
      weights_[i] = v0 * v0;
    }
  }

  /// E[f(a)] and V[f(a)] for a ~ N(mu, var).
  template <class F>
  std::pair<double, double> moments(F&& f, double mu, double var) const {
    const double s = std::sqrt(var);
    double mean = 0.0;
    for (int i = 0; i < nodes_.size(); ++i) {
      mean += weights_[i] * f(mu + s * nodes_[i]);
    }
    double v = 0.0;
    for (int i = 0; i < nodes_.size(); ++i) {
      const double d = f(mu + s * nodes_[i]) - mean;
      v += weights_[i] * d * d;
    }
    return {mean, v};
  }

  const Eigen::VectorXd& nodes() const { return nodes_; }
  const Eigen::VectorXd& weights() const { return weights_; }

 private:
  Eigen::VectorXd nodes_;
  Eigen::VectorXd weights_;
};

}  // namespace fdrnn_tests

#endif  // FDRNN_TESTS_GAUSS_HERMITE_HPP
