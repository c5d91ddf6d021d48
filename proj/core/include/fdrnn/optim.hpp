#ifndef FDRNN_OPTIM_HPP
#define FDRNN_OPTIM_HPP

#include <Eigen/Eigenvalues>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>

#include "fdrnn/network.hpp"

namespace fdrnn {

// ---------------------------------------------------------------------------
// Gradient clipping: global L2 norm rescaling.
// ---------------------------------------------------------------------------

template <class S>
S global_norm(const ParamGrads<S>& g) {
  double sq = 0.0;
  sq += double(g.w_in.squaredNorm());
  sq += double(g.w_rec.squaredNorm());
  sq += double(g.w_out.squaredNorm());
  sq += double(g.b_h.squaredNorm());
  sq += double(g.b_y.squaredNorm());
  sq += double(g.h0.squaredNorm());
  return S(std::sqrt(sq));
}

template <class S>
ParamGrads<S> clip_gradient(ParamGrads<S> g, S threshold) {
  if (!(threshold > S(0))) {
    throw std::invalid_argument("clip_gradient: threshold must be > 0");
  }
  if (!g.w_in.allFinite() || !g.w_rec.allFinite() || !g.w_out.allFinite() ||
      !g.b_h.allFinite() || !g.b_y.allFinite() || !g.h0.allFinite()) {
    throw std::invalid_argument("clip_gradient: non-finite gradient");
  }
  const S norm = global_norm(g);
  if (norm <= threshold) return g;
  const S scale = threshold / norm;
  g.w_in *= scale;
  g.w_rec *= scale;
  g.w_out *= scale;
  g.b_h *= scale;
  g.b_y *= scale;
  g.h0 *= scale;
  return g;
}

template <class S>
VectorX<S> clip_gradient_flat(VectorX<S> g, S threshold) {
  if (!(threshold > S(0))) {
    throw std::invalid_argument("clip_gradient: threshold must be > 0");
  }
  if (!g.allFinite()) {
    throw std::invalid_argument("clip_gradient: non-finite gradient");
  }
  const S norm = g.norm();
  if (norm > threshold) g *= threshold / norm;
  return g;
}

// ---------------------------------------------------------------------------
// rmsprop with Nesterov momentum.
// ---------------------------------------------------------------------------

template <class S>
struct RmsPropState {
  VectorX<S> sq_avg;    // exponential moving average of squared gradients
  VectorX<S> velocity;
  S step_rate;
  S decay;
  S momentum;
  S epsilon;

  static RmsPropState make(Eigen::Index n_params, S step_rate, S decay,
                           S momentum, S epsilon = S(1e-8)) {
    if (!(step_rate > S(0))) {
      throw std::invalid_argument("RmsPropState: step_rate must be > 0");
    }
    if (!(decay > S(0) && decay < S(1))) {
      throw std::invalid_argument("RmsPropState: decay must be in (0, 1)");
    }
    if (!(momentum >= S(0) && momentum < S(1))) {
      throw std::invalid_argument("RmsPropState: momentum must be in [0, 1)");
    }
    if (!(epsilon > S(0))) {
      throw std::invalid_argument("RmsPropState: epsilon must be > 0");
    }
    RmsPropState st;
    st.sq_avg = VectorX<S>::Zero(n_params);
    st.velocity = VectorX<S>::Zero(n_params);
    st.step_rate = step_rate;
    st.decay = decay;
    st.momentum = momentum;
    st.epsilon = epsilon;
    return st;
  }
};

/// One update:
///   theta_look = theta + momentum * velocity
///   g          = clip(grad_fn(theta_look))
///   sq_avg    <- decay * sq_avg + (1 - decay) * g^2
///   velocity  <- momentum * velocity - step_rate * g / sqrt(sq_avg + eps)
///   theta     <- theta + velocity
/// A non-finite update leaves theta and the state untouched and throws.
template <class S>
void rmsprop_nesterov_step(
    RmsPropState<S>& state, VectorX<S>& theta,
    const std::function<VectorX<S>(const VectorX<S>&)>& grad_fn,
    S clip_threshold = std::numeric_limits<S>::infinity()) {
  VectorX<S> look = theta + state.momentum * state.velocity;
  VectorX<S> g = grad_fn(look);
  if (g.size() != theta.size()) {
    throw std::invalid_argument("rmsprop_nesterov_step: gradient size");
  }
  if (!g.allFinite()) {
    throw std::runtime_error("rmsprop_nesterov_step: non-finite gradient, step rejected");
  }
  if (std::isfinite(double(clip_threshold))) {
    g = clip_gradient_flat(std::move(g), clip_threshold);
  }

  VectorX<S> sq_avg =
      state.decay * state.sq_avg +
      (S(1) - state.decay) * g.array().square().matrix();
  VectorX<S> velocity =
      state.momentum * state.velocity -
      state.step_rate *
          (g.array() / (sq_avg.array() + state.epsilon).sqrt()).matrix();
  VectorX<S> updated = theta + velocity;
  if (!updated.allFinite()) {
    throw std::runtime_error("rmsprop_nesterov_step: non-finite update, step rejected");
  }
  state.sq_avg = std::move(sq_avg);
  state.velocity = std::move(velocity);
  theta = std::move(updated);
}

// ---------------------------------------------------------------------------
// Spectral radius.
// ---------------------------------------------------------------------------

namespace detail {

inline double spectral_radius_dense(const MatrixX<double>& w) {
  Eigen::EigenSolver<MatrixX<double>> solver(w, /*computeEigenvectors=*/false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

/// Power iteration with a two-dimensional Rayleigh-Ritz estimate so that a
/// dominant complex-conjugate pair still yields its modulus.  Returns nullopt
/// when the iteration stalls (defective or near-degenerate spectrum).
inline std::optional<double> spectral_radius_power(const MatrixX<double>& w,
                                                   int max_iter = 5000,
                                                   double tol = 5e-15) {
  const Eigen::Index n = w.rows();
  VectorX<double> v(n);
  std::mt19937_64 rng(0x5eed5eedULL);  // fixed: estimates must be repeatable
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  v.normalize();

  double prev = -1.0;
  int stable = 0;
  for (int it = 0; it < max_iter; ++it) {
    VectorX<double> wv = w * v;
    const double nw = wv.norm();
    if (nw < 1e-300) return 0.0;  // numerically nilpotent on this vector

    double est;
    VectorX<double> q2 = wv - wv.dot(v) * v;
    const double r = q2.norm();
    if (r <= 1e-14 * nw) {
      est = nw;  // v is (numerically) an eigenvector
    } else {
      q2 /= r;
      const VectorX<double> wq2 = w * q2;
      const double a = v.dot(wv), b = v.dot(wq2);
      const double c = q2.dot(wv), d = q2.dot(wq2);
      const double tr = a + d;
      const double disc = (a - d) * (a - d) + 4.0 * b * c;
      if (disc >= 0.0) {
        const double s = std::sqrt(disc);
        est = std::max(std::abs((tr + s) / 2.0), std::abs((tr - s) / 2.0));
      } else {
        est = std::sqrt(a * d - b * c);  // conjugate pair: |lambda|^2 = det
      }
    }

    if (it >= 50 && std::abs(est - prev) <= tol * std::max(est, 1e-300)) {
      if (++stable >= 5) return est;
    } else {
      stable = 0;
    }
    prev = est;
    v = wv / nw;
  }
  return std::nullopt;
}

}  // namespace detail

/// Largest absolute eigenvalue, to relative 1e-6 or better.  Small matrices
/// go straight to a dense solver; larger ones use power iteration and fall
/// back to the dense solver when it stalls.
template <class S>
double spectral_radius(const MatrixX<S>& w) {
  if (w.rows() != w.cols()) {
    throw std::invalid_argument("spectral_radius: matrix must be square");
  }
  if (!w.allFinite()) {
    throw std::invalid_argument("spectral_radius: non-finite entries");
  }
  if (w.rows() == 0) return 0.0;
  MatrixX<double> wd = w.template cast<double>();
  if (wd.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  if (wd.rows() <= 64) return detail::spectral_radius_dense(wd);
  if (auto est = detail::spectral_radius_power(wd)) return *est;
  return detail::spectral_radius_dense(wd);
}

// ---------------------------------------------------------------------------
// Recurrent weight initialization: Gaussian entries, optional cap on the
// number of incoming connections per unit, then rescaling to a prescribed
// spectral radius.
// ---------------------------------------------------------------------------

struct InitSpec {
  double rho_target = 1.0;
  std::optional<int> nu;  // max incoming connections per unit
  double sigma2 = 0.01;
  double b_y_const = -0.8;

  void validate(Eigen::Index gamma) const {
    if (!(rho_target > 0.0)) {
      throw std::invalid_argument("InitSpec: rho_target must be > 0");
    }
    if (!(sigma2 > 0.0)) {
      throw std::invalid_argument("InitSpec: sigma2 must be > 0");
    }
    if (nu && (*nu < 1 || *nu > gamma)) {
      throw std::invalid_argument("InitSpec: nu out of range");
    }
  }
};

/// Incoming connections of hidden unit j are column j of the recurrent
/// matrix (row-vector activation convention).  Sparsify first, then scale,
/// so the in-degree cap and the radius hold simultaneously.
inline MatrixX<double> init_recurrent(const InitSpec& spec, int gamma,
                                      std::mt19937_64& rng) {
  spec.validate(gamma);
  std::normal_distribution<double> normal(0.0, std::sqrt(spec.sigma2));

  for (int attempt = 0; attempt < 16; ++attempt) {
    MatrixX<double> w(gamma, gamma);
    for (Eigen::Index j = 0; j < gamma; ++j) {
      for (Eigen::Index i = 0; i < gamma; ++i) {
        w(i, j) = normal(rng);
      }
    }
    if (spec.nu && *spec.nu < gamma) {
      std::vector<Eigen::Index> idx(static_cast<size_t>(gamma));
      for (Eigen::Index j = 0; j < gamma; ++j) {
        for (Eigen::Index i = 0; i < gamma; ++i) idx[size_t(i)] = i;
        // partial Fisher-Yates: the first nu entries are the kept rows
        for (int k = 0; k < *spec.nu; ++k) {
          std::uniform_int_distribution<Eigen::Index> pick(k, gamma - 1);
          std::swap(idx[size_t(k)], idx[size_t(pick(rng))]);
        }
        for (int k = *spec.nu; k < gamma; ++k) w(idx[size_t(k)], j) = 0.0;
      }
    }

    double rho = spectral_radius(w);
    if (rho < 1e-12) continue;  // resample a degenerate draw
    for (int round = 0; round < 8; ++round) {
      w *= spec.rho_target / rho;
      rho = spectral_radius(w);
      if (std::abs(rho - spec.rho_target) <= 1e-8 * spec.rho_target) {
        return w;
      }
    }
    return w;
  }
  throw std::runtime_error("init_recurrent: failed to draw a usable matrix");
}

}  // namespace fdrnn

#endif  // FDRNN_OPTIM_HPP
