#ifndef FDRNN_GAUSSIAN_HPP
#define FDRNN_GAUSSIAN_HPP

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace fdrnn {

template <class S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

/// Negative variances within this slack of zero are treated as roundoff and
/// clamped; anything more negative is rejected.
inline constexpr double kVarianceSlack = 1e-12;

namespace detail {

template <class S>
void sanitize_variances(Eigen::Ref<VectorX<S>> var, const char* where) {
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    if (var[i] < S(0)) {
      if (var[i] < S(-kVarianceSlack)) {
        throw std::invalid_argument(std::string(where) +
                                    ": negative variance at component " +
                                    std::to_string(i));
      }
      var[i] = S(0);
    }
  }
}

}  // namespace detail

/// A layer of stochastic unit activations, kept as per-unit mean and variance.
template <class S>
struct GaussianVec {
  VectorX<S> mean;
  VectorX<S> var;

  GaussianVec() = default;
  GaussianVec(VectorX<S> m, VectorX<S> v)
      : mean(std::move(m)), var(std::move(v)) {
    if (mean.size() != var.size()) {
      throw std::invalid_argument("GaussianVec: mean/var length mismatch");
    }
    detail::sanitize_variances<S>(var, "GaussianVec");
  }

  /// Deterministic value: variance identically zero.
  static GaussianVec point(VectorX<S> m) {
    GaussianVec g;
    g.var = VectorX<S>::Zero(m.size());
    g.mean = std::move(m);
    return g;
  }

  Eigen::Index size() const { return mean.size(); }
};

/// Probability that a unit is kept (complement of the dropout rate).
class KeepProb {
 public:
  KeepProb() : p_(1.0) {}
  explicit KeepProb(double p) : p_(p) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument("KeepProb: p must lie in [0, 1]");
    }
  }
  double value() const { return p_; }

 private:
  double p_;
};

enum class TransferKind { Tanh, Sigmoid, Rectifier, Identity };

inline const char* to_string(TransferKind k) {
  switch (k) {
    case TransferKind::Tanh: return "tanh";
    case TransferKind::Sigmoid: return "sigmoid";
    case TransferKind::Rectifier: return "rectifier";
    case TransferKind::Identity: return "identity";
  }
  return "?";
}

inline TransferKind transfer_from_string(const std::string& s) {
  if (s == "tanh") return TransferKind::Tanh;
  if (s == "sigmoid") return TransferKind::Sigmoid;
  if (s == "rectifier") return TransferKind::Rectifier;
  if (s == "identity") return TransferKind::Identity;
  throw std::invalid_argument("unknown transfer function: " + s);
}

/// Elementwise Gaussian distribution over a weight matrix.
template <class S>
struct WeightDist {
  MatrixX<S> mean;
  MatrixX<S> var;

  WeightDist() = default;
  WeightDist(MatrixX<S> m, MatrixX<S> v)
      : mean(std::move(m)), var(std::move(v)) {
    if (mean.rows() != var.rows() || mean.cols() != var.cols()) {
      throw std::invalid_argument("WeightDist: mean/var shape mismatch");
    }
    if ((var.array() < S(-kVarianceSlack)).any()) {
      throw std::invalid_argument("WeightDist: negative variance entry");
    }
    var = var.cwiseMax(S(0));
  }
};

}  // namespace fdrnn

#endif  // FDRNN_GAUSSIAN_HPP
