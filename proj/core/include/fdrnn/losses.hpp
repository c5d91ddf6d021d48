#ifndef FDRNN_LOSSES_HPP
#define FDRNN_LOSSES_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdrnn/gaussian.hpp"

namespace fdrnn {

/// Output probabilities are clamped to [kProbEps, 1 - kProbEps] before logs.
inline constexpr double kProbEps = 1e-6;

// ---------------------------------------------------------------------------
// Sequence Bernoulli negative log-likelihood.
//
// The prediction emitted at step t-1 is scored against the observation at
// step t, averaged over the T-1 scored steps and the batch:
//   L = -1/((T-1) N) sum_{k, t>=2, i} [x_t log y_{t-1} + (1-x_t) log(1-y_{t-1})]
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
void check_bce_args(const std::vector<MatrixX<S>>& outputs,
                    const std::vector<MatrixX<S>>& targets) {
  if (outputs.size() != targets.size()) {
    throw std::invalid_argument("sequence_bce_nll: length mismatch");
  }
  if (outputs.size() < 2) {
    throw std::invalid_argument("sequence_bce_nll: needs T >= 2");
  }
  for (size_t t = 0; t < outputs.size(); ++t) {
    if (outputs[t].rows() != targets[t].rows() ||
        outputs[t].cols() != targets[t].cols()) {
      throw std::invalid_argument("sequence_bce_nll: shape mismatch");
    }
    if (!outputs[t].allFinite()) {
      throw std::invalid_argument("sequence_bce_nll: non-finite output");
    }
  }
}

}  // namespace detail

template <class S>
S sequence_bce_nll(const std::vector<MatrixX<S>>& outputs,
                   const std::vector<MatrixX<S>>& targets) {
  detail::check_bce_args(outputs, targets);
  const Eigen::Index t_len = static_cast<Eigen::Index>(outputs.size());
  const Eigen::Index n = outputs.front().rows();
  const S lo = S(kProbEps), hi = S(1) - S(kProbEps);
  S total = S(0);
  for (Eigen::Index t = 1; t < t_len; ++t) {
    const auto y = outputs[size_t(t - 1)].array().min(hi).max(lo);
    const auto x = targets[size_t(t)].array();
    total -= (x * y.log() + (S(1) - x) * (S(1) - y).log()).sum();
  }
  return total / (S(t_len - 1) * S(n));
}

/// Loss together with dL/dY per step (zero where clamping saturates and for
/// the unscored final step).
template <class S>
S sequence_bce_nll_with_grad(const std::vector<MatrixX<S>>& outputs,
                             const std::vector<MatrixX<S>>& targets,
                             std::vector<MatrixX<S>>& d_outputs) {
  detail::check_bce_args(outputs, targets);
  const Eigen::Index t_len = static_cast<Eigen::Index>(outputs.size());
  const Eigen::Index n = outputs.front().rows();
  const S lo = S(kProbEps), hi = S(1) - S(kProbEps);
  const S scale = S(1) / (S(t_len - 1) * S(n));

  d_outputs.assign(outputs.size(),
                   MatrixX<S>::Zero(n, outputs.front().cols()));
  S total = S(0);
  for (Eigen::Index t = 1; t < t_len; ++t) {
    const MatrixX<S>& yraw = outputs[size_t(t - 1)];
    const MatrixX<S>& x = targets[size_t(t)];
    MatrixX<S>& dy = d_outputs[size_t(t - 1)];
    for (Eigen::Index j = 0; j < yraw.cols(); ++j) {
      for (Eigen::Index i = 0; i < yraw.rows(); ++i) {
        const S y = std::min(hi, std::max(lo, yraw(i, j)));
        const S xt = x(i, j);
        total -= xt * std::log(y) + (S(1) - xt) * std::log(S(1) - y);
        if (yraw(i, j) > lo && yraw(i, j) < hi) {
          dy(i, j) = -scale * (xt / y - (S(1) - xt) / (S(1) - y));
        }
      }
    }
  }
  return total * scale;
}

// ---------------------------------------------------------------------------
// Single-unit losses on pre-synaptic moments (the regularizer analysis).
// ---------------------------------------------------------------------------

enum class LossKind { SquaredOnMean, GaussianNllOnMoments, BernoulliOnMean };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::SquaredOnMean: return "squared";
    case LossKind::GaussianNllOnMoments: return "gaussian";
    case LossKind::BernoulliOnMean: return "bernoulli";
  }
  return "?";
}

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "squared") return LossKind::SquaredOnMean;
  if (s == "gaussian") return LossKind::GaussianNllOnMoments;
  if (s == "bernoulli") return LossKind::BernoulliOnMean;
  throw std::invalid_argument("unknown loss kind: " + s);
}

struct UnitLossResult {
  double value;
  double d_mean;  // d loss / d E[a]
  double d_var;   // d loss / d V[a]
};

/// Loss of a single unit given its pre-synaptic moments (E[a], V[a]):
///   squared:    (E[a] - t)^2 with y = a
///   gaussian:   (E[a] - t)^2 / (2 V[a]) + log sqrt(2 pi V[a]) with y = a
///   bernoulli:  -[t log E[y] + (1 - t) log(1 - E[y])] with y = sigmoid(a)
///               moments
UnitLossResult unit_loss(double mean, double var, double target,
                         LossKind kind);

UnitLossResult unit_loss(const GaussianVec<double>& y, double target,
                         LossKind kind);

/// Inclusive linspace: count points from lo to hi.
struct GridSpec {
  double lo = 0.0;
  double hi = 1.0;
  int count = 1;
};

struct LossFieldRow {
  double mean, var, loss, d_mean, d_var;
};

/// Dense grid evaluation of unit_loss for external plotting (mean-major row
/// order).
std::vector<LossFieldRow> loss_field(LossKind kind, double target,
                                     const GridSpec& mean_grid,
                                     const GridSpec& var_grid);

}  // namespace fdrnn

#endif  // FDRNN_LOSSES_HPP
