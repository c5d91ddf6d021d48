#ifndef FDRNN_MOMENTS_HPP
#define FDRNN_MOMENTS_HPP

#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

#include "fdrnn/gaussian.hpp"

namespace fdrnn {

// ---------------------------------------------------------------------------
// Transfer moment maps.
//
// For a ~ N(m, v) the post-synaptic moments E[f(a)], V[f(a)] are computed in
// closed form.  Rectifier and identity are exact.  Tanh is approximated by a
// three-term erf expansion (sup error ~1e-4) whose Gaussian integrals are
// exact, and tanh^2 via 1 - sech^2 with sech^2 fitted by three Gaussians
// (sup error ~2.5e-4); both carry an additive correction that makes the
// v = 0 case reproduce (f(m), 0) bitwise.  The sigmoid maps reuse the tanh
// maps through sigmoid(x) = (1 + tanh(x/2)) / 2.
// ---------------------------------------------------------------------------

namespace detail {

// tanh(x) ~= sum_j kTanhA[j] * erf(kTanhB[j] * x)
inline constexpr double kTanhA[3] = {0.16107412, 0.58313551,
                                     1.0 - 0.16107412 - 0.58313551};
inline constexpr double kTanhB[3] = {0.51423276, 0.81510684, 1.28045742};

// sech^2(x) ~= sum_j kSechC[j] * exp(-kSechD[j] * x^2)
inline constexpr double kSechC[3] = {0.2864297, 0.56774553, 0.14558039};
inline constexpr double kSechD[3] = {1.80707094, 0.76059874, 0.30405384};

template <class S>
inline constexpr S kTwoOverSqrtPi = S(1.1283791670955125739L);

template <class S>
inline constexpr S kInvSqrt2Pi = S(0.3989422804014326779L);

template <class S>
struct TransferGrads {
  S mean, var;
  S dmean_dm, dmean_dv;
  S dvar_dm, dvar_dv;
};

template <class S>
TransferGrads<S> tanh_moments(S m, S v) {
  const S t = std::tanh(m);
  const S sech2 = S(1) - t * t;

  S fm = t;
  S dfm_dm = sech2;
  S dfm_dv = S(0);
  for (int j = 0; j < 3; ++j) {
    const S a = S(kTanhA[j]);
    const S b = S(kTanhB[j]);
    const S q = S(1) / std::sqrt(S(1) + S(2) * b * b * v);
    const S z = b * m * q;
    const S z0 = b * m;
    fm += a * (std::erf(z) - std::erf(z0));
    const S gz = kTwoOverSqrtPi<S> * std::exp(-z * z);
    const S gz0 = kTwoOverSqrtPi<S> * std::exp(-z0 * z0);
    dfm_dm += a * (gz * b * q - gz0 * b);
    dfm_dv += a * gz * (-b * b * b * m * q * q * q);
  }

  // E[tanh^2] = tanh^2(m) + S(m,0) - S(m,v) with S the Gaussian-sum integral
  // of sech^2.
  S e2 = t * t;
  S de2_dm = S(2) * t * sech2;
  S de2_dv = S(0);
  for (int j = 0; j < 3; ++j) {
    const S c = S(kSechC[j]);
    const S d = S(kSechD[j]);
    const S r = S(1) / std::sqrt(S(1) + S(2) * d * v);
    const S ev = std::exp(-d * m * m * r * r);
    const S e0 = std::exp(-d * m * m);
    e2 += c * (e0 - r * ev);
    de2_dm += c * (S(-2) * d * m * e0 - r * ev * (S(-2) * d * m * r * r));
    de2_dv -= c * d * r * r * r * ev * (S(2) * d * m * m * r * r - S(1));
  }

  TransferGrads<S> g;
  g.mean = fm;
  g.dmean_dm = dfm_dm;
  g.dmean_dv = dfm_dv;

  const S raw = e2 - fm * fm;
  const S cap = S(1) - fm * fm;
  if (raw <= S(0)) {
    g.var = S(0);
    g.dvar_dm = S(0);
    g.dvar_dv = S(0);
  } else if (raw >= cap) {
    g.var = cap;
    g.dvar_dm = S(-2) * fm * dfm_dm;
    g.dvar_dv = S(-2) * fm * dfm_dv;
  } else {
    g.var = raw;
    g.dvar_dm = de2_dm - S(2) * fm * dfm_dm;
    g.dvar_dv = de2_dv - S(2) * fm * dfm_dv;
  }
  return g;
}

template <class S>
TransferGrads<S> sigmoid_moments(S m, S v) {
  TransferGrads<S> t = tanh_moments<S>(m / S(2), v / S(4));
  TransferGrads<S> g;
  g.mean = S(0.5) + S(0.5) * t.mean;
  g.var = S(0.25) * t.var;
  g.dmean_dm = S(0.25) * t.dmean_dm;
  g.dmean_dv = S(0.125) * t.dmean_dv;
  g.dvar_dm = S(0.125) * t.dvar_dm;
  g.dvar_dv = S(0.0625) * t.dvar_dv;
  return g;
}

template <class S>
TransferGrads<S> rectifier_moments(S m, S v) {
  TransferGrads<S> g;
  if (v <= S(0)) {
    g.mean = std::max(m, S(0));
    g.var = S(0);
    g.dmean_dm = m > S(0) ? S(1) : S(0);
    g.dmean_dv = S(0);
    g.dvar_dm = S(0);
    g.dvar_dv = S(0);
    return g;
  }
  const S s = std::sqrt(v);
  const S t = m / s;
  const S phi = kInvSqrt2Pi<S> * std::exp(S(-0.5) * t * t);
  const S Phi = S(0.5) * std::erfc(-t * S(0.7071067811865475244L));
  const S e = m * Phi + s * phi;
  const S e2 = (m * m + v) * Phi + m * s * phi;
  g.mean = e;
  g.var = std::max(e2 - e * e, S(0));
  g.dmean_dm = Phi;
  g.dmean_dv = phi / (S(2) * s);
  g.dvar_dm = S(2) * e * (S(1) - Phi);
  g.dvar_dv = Phi - e * phi / s;
  return g;
}

template <class S>
TransferGrads<S> transfer_grads(S m, S v, TransferKind kind) {
  switch (kind) {
    case TransferKind::Tanh:
      return tanh_moments<S>(m, v);
    case TransferKind::Sigmoid:
      return sigmoid_moments<S>(m, v);
    case TransferKind::Rectifier:
      return rectifier_moments<S>(m, v);
    case TransferKind::Identity: {
      TransferGrads<S> g;
      g.mean = m;
      g.var = v;
      g.dmean_dm = S(1);
      g.dmean_dv = S(0);
      g.dvar_dm = S(0);
      g.dvar_dv = S(1);
      return g;
    }
  }
  throw std::logic_error("transfer_grads: bad kind");
}

}  // namespace detail

/// Post-synaptic moments of f(a) for a ~ N(a.mean, a.var), componentwise.
template <class S>
GaussianVec<S> transfer_moments(const GaussianVec<S>& a, TransferKind kind) {
  GaussianVec<S> out;
  out.mean.resize(a.size());
  out.var.resize(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a.var[i] < S(0)) {
      throw std::invalid_argument("transfer_moments: negative variance");
    }
    auto g = detail::transfer_grads<S>(a.mean[i], a.var[i], kind);
    out.mean[i] = g.mean;
    out.var[i] = g.var;
  }
  return out;
}

/// Elementwise transfer moments over batched activations (rows = samples).
template <class S>
void transfer_moments_inplace(const MatrixX<S>& am, const MatrixX<S>& av,
                              TransferKind kind, MatrixX<S>& hm,
                              MatrixX<S>& hv) {
  hm.resize(am.rows(), am.cols());
  hv.resize(am.rows(), am.cols());
  for (Eigen::Index j = 0; j < am.cols(); ++j) {
    for (Eigen::Index i = 0; i < am.rows(); ++i) {
      auto g = detail::transfer_grads<S>(am(i, j), av(i, j), kind);
      hm(i, j) = g.mean;
      hv(i, j) = g.var;
    }
  }
}

// ---------------------------------------------------------------------------
// Pre-synaptic moments under dropout.
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
void check_affine_shapes(Eigen::Index in_dim, const MatrixX<S>& w,
                         const VectorX<S>& bias, const char* where) {
  if (w.rows() != in_dim) {
    throw std::invalid_argument(std::string(where) +
                                ": input/weight dimension mismatch");
  }
  if (bias.size() != w.cols()) {
    throw std::invalid_argument(std::string(where) +
                                ": bias/weight dimension mismatch");
  }
}

}  // namespace detail

/// Moments of a_j = sum_i d_i x_i W_ij + b_j with d_i ~ Bernoulli(p):
///   E[a] = p mu_x^T W + b,  V[a] = (p(1-p) mu_x^2 + p var_x)^T W^2.
/// The bias is a deterministic parameter and enters the mean only.
template <class S>
GaussianVec<S> presynaptic_moments(const GaussianVec<S>& x,
                                   const MatrixX<S>& w,
                                   const VectorX<S>& bias, KeepProb p) {
  detail::check_affine_shapes<S>(x.size(), w, bias, "presynaptic_moments");
  const S pp = S(p.value());
  GaussianVec<S> out;
  out.mean = pp * (w.transpose() * x.mean) + bias;
  const VectorX<S> src =
      (pp * (S(1) - pp)) * x.mean.array().square().matrix() + pp * x.var;
  out.var = w.array().square().matrix().transpose() * src;
  detail::sanitize_variances<S>(out.var, "presynaptic_moments");
  return out;
}

/// Batched form: rows of x_mean/x_var are independent samples.
template <class S>
void presynaptic_moments_batched(const MatrixX<S>& x_mean,
                                 const MatrixX<S>& x_var, const MatrixX<S>& w,
                                 const VectorX<S>& bias, KeepProb p,
                                 MatrixX<S>& out_mean, MatrixX<S>& out_var) {
  detail::check_affine_shapes<S>(x_mean.cols(), w, bias,
                                 "presynaptic_moments");
  const S pp = S(p.value());
  out_mean = pp * (x_mean * w);
  out_mean.rowwise() += bias.transpose();
  const MatrixX<S> src = (pp * (S(1) - pp)) * x_mean.array().square().matrix() +
                         pp * x_var;
  out_var = src * w.array().square().matrix();
}

/// Adaptive-weight-noise counterpart: deterministic units, Gaussian weights.
///   E[a] = mu_x^T mu_w
///   V[a] = var_x^T mu_w^2 + var_x^T var_w + mu_x^2^T var_w
template <class S>
GaussianVec<S> awn_presynaptic_moments(const GaussianVec<S>& x,
                                       const WeightDist<S>& w) {
  if (w.mean.rows() != x.size()) {
    throw std::invalid_argument(
        "awn_presynaptic_moments: input/weight dimension mismatch");
  }
  GaussianVec<S> out;
  out.mean = w.mean.transpose() * x.mean;
  const MatrixX<S> w2 = w.mean.array().square().matrix();
  out.var = w2.transpose() * x.var + w.var.transpose() * x.var +
            w.var.transpose() * x.mean.array().square().matrix();
  detail::sanitize_variances<S>(out.var, "awn_presynaptic_moments");
  return out;
}

/// One Gaussian incarnation a_hat = E[a] + s * sqrt(V[a]), fresh s per
/// component.  Deterministic for a given rng state.
template <class S>
VectorX<S> sample_presynaptic(const GaussianVec<S>& x, const MatrixX<S>& w,
                              const VectorX<S>& bias, KeepProb p,
                              std::mt19937_64& rng) {
  GaussianVec<S> a = presynaptic_moments(x, w, bias, p);
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorX<S> out(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    out[i] = a.mean[i] + S(normal(rng)) * std::sqrt(a.var[i]);
  }
  return out;
}

}  // namespace fdrnn

#endif  // FDRNN_MOMENTS_HPP
