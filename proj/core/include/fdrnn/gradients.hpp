#ifndef FDRNN_GRADIENTS_HPP
#define FDRNN_GRADIENTS_HPP

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdrnn/losses.hpp"
#include "fdrnn/network.hpp"

namespace fdrnn {

template <class S>
struct BackwardResult {
  S loss;
  ParamGrads<S> grads;
};

namespace detail {

template <class S>
void check_finite_step(const MatrixX<S>& m, Eigen::Index t, const char* what) {
  if (!m.allFinite()) {
    throw std::runtime_error(std::string("backward_fd: non-finite ") + what +
                             " at step " + std::to_string(t));
  }
}

}  // namespace detail

/// Reverse-mode differentiation of sequence_bce_nll(forward_fd(...)) with
/// respect to every parameter.  The gradient is exact for the implemented
/// forward computation: the closed-form moment maps are differentiated as
/// written, and both the mean and the variance channel are accumulated
/// through all time steps.
template <class S>
BackwardResult<S> backward_fd(const RnnParams<S>& params,
                              const DropoutConfig& cfg, TransferKind f_h,
                              TransferKind f_y, const SequenceBatch<S>& batch,
                              const std::vector<MatrixX<S>>& targets) {
  FdTrace<S> trace;
  const auto outputs = forward_fd(params, cfg, f_h, f_y, batch, &trace);
  for (Eigen::Index t = 0; t < batch.length(); ++t) {
    detail::check_finite_step(trace.am[size_t(t)], t, "pre-synaptic mean");
    detail::check_finite_step(trace.av[size_t(t)], t, "pre-synaptic variance");
    detail::check_finite_step(trace.y[size_t(t)], t, "output");
  }

  std::vector<MatrixX<S>> d_y;
  const S loss = sequence_bce_nll_with_grad(outputs, targets, d_y);

  const Eigen::Index n = batch.batch_size();
  const Eigen::Index t_len = batch.length();
  const S p_i = S(cfg.p_in.value());
  const S p_h = S(cfg.p_hid.value());
  const S p_o = S(cfg.p_out.value());

  const MatrixX<S> w_rec_sq = params.w_rec.array().square().matrix();
  const MatrixX<S> w_out_sq = params.w_out.array().square().matrix();

  ParamGrads<S> g = ParamGrads<S>::zeros(params.input_dim(),
                                         params.hidden_dim(),
                                         params.output_dim());

  std::vector<MatrixX<S>> d_hm(size_t(t_len) + 1), d_hv(size_t(t_len) + 1);
  for (auto& m : d_hm) m = MatrixX<S>::Zero(n, params.hidden_dim());
  for (auto& m : d_hv) m = MatrixX<S>::Zero(n, params.hidden_dim());

  // Output layer: only steps 0..T-2 are scored, the last output carries no
  // gradient.
  for (Eigen::Index t = 0; t + 1 < t_len; ++t) {
    const MatrixX<S>& dy = d_y[size_t(t)];
    const MatrixX<S>& hm = trace.hm[size_t(t) + 1];
    const MatrixX<S>& hv = trace.hv[size_t(t) + 1];
    if (cfg.fd_final_layer) {
      const MatrixX<S>& bm = trace.bm[size_t(t)];
      const MatrixX<S>& bv = trace.bv[size_t(t)];
      MatrixX<S> d_bm(n, params.output_dim());
      MatrixX<S> d_bv(n, params.output_dim());
      for (Eigen::Index j = 0; j < d_bm.cols(); ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto tg = detail::transfer_grads<S>(bm(i, j), bv(i, j), f_y);
          d_bm(i, j) = dy(i, j) * tg.dmean_dm;
          d_bv(i, j) = dy(i, j) * tg.dmean_dv;
        }
      }
      const MatrixX<S> out_src =
          (p_o * (S(1) - p_o)) * hm.array().square().matrix() + p_o * hv;
      g.w_out.noalias() += p_o * (hm.transpose() * d_bm);
      g.w_out += S(2) * params.w_out.cwiseProduct(out_src.transpose() * d_bv);
      g.b_y += d_bm.colwise().sum().transpose();
      const MatrixX<S> d_bv_w2 = d_bv * w_out_sq.transpose();
      d_hm[size_t(t) + 1].noalias() += p_o * (d_bm * params.w_out.transpose());
      d_hm[size_t(t) + 1] +=
          (S(2) * p_o * (S(1) - p_o)) * hm.cwiseProduct(d_bv_w2);
      d_hv[size_t(t) + 1] += p_o * d_bv_w2;
    } else {
      const MatrixX<S> d_b = dy.cwiseProduct(
          detail::transfer_derivative_from_output(trace.y[size_t(t)], f_y));
      g.w_out.noalias() += hm.transpose() * d_b;
      g.b_y += d_b.colwise().sum().transpose();
      d_hm[size_t(t) + 1].noalias() += d_b * params.w_out.transpose();
    }
  }

  // Recurrent sweep.
  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    const MatrixX<S>& am = trace.am[size_t(t)];
    const MatrixX<S>& av = trace.av[size_t(t)];
    const MatrixX<S>& hm_prev = trace.hm[size_t(t)];
    const MatrixX<S>& hv_prev = trace.hv[size_t(t)];
    const MatrixX<S>& x = batch.steps[size_t(t)];

    MatrixX<S> d_am(n, params.hidden_dim());
    MatrixX<S> d_av(n, params.hidden_dim());
    {
      const MatrixX<S>& up_m = d_hm[size_t(t) + 1];
      const MatrixX<S>& up_v = d_hv[size_t(t) + 1];
      for (Eigen::Index j = 0; j < d_am.cols(); ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto tg = detail::transfer_grads<S>(am(i, j), av(i, j), f_h);
          d_am(i, j) = up_m(i, j) * tg.dmean_dm + up_v(i, j) * tg.dvar_dm;
          d_av(i, j) = up_m(i, j) * tg.dmean_dv + up_v(i, j) * tg.dvar_dv;
        }
      }
    }
    detail::check_finite_step(d_am, t, "mean sensitivity");
    detail::check_finite_step(d_av, t, "variance sensitivity");

    const MatrixX<S> rec_src =
        (p_h * (S(1) - p_h)) * hm_prev.array().square().matrix() +
        p_h * hv_prev;
    const MatrixX<S> in_src =
        (p_i * (S(1) - p_i)) * x.array().square().matrix();

    g.w_rec.noalias() += p_h * (hm_prev.transpose() * d_am);
    g.w_rec += S(2) * params.w_rec.cwiseProduct(rec_src.transpose() * d_av);
    g.w_in.noalias() += p_i * (x.transpose() * d_am);
    g.w_in += S(2) * params.w_in.cwiseProduct(in_src.transpose() * d_av);
    g.b_h += d_am.colwise().sum().transpose();

    const MatrixX<S> d_av_w2 = d_av * w_rec_sq.transpose();
    d_hm[size_t(t)].noalias() += p_h * (d_am * params.w_rec.transpose());
    d_hm[size_t(t)] +=
        (S(2) * p_h * (S(1) - p_h)) * hm_prev.cwiseProduct(d_av_w2);
    d_hv[size_t(t)] += p_h * d_av_w2;
  }

  // h0 is broadcast over the batch; its variance is fixed at zero.
  g.h0 = d_hm[0].colwise().sum().transpose();

  return {loss, std::move(g)};
}

/// Classic BPTT for the plain deterministic network under the same loss.
template <class S>
BackwardResult<S> backward_plain(const RnnParams<S>& params, TransferKind f_h,
                                 TransferKind f_y,
                                 const SequenceBatch<S>& batch,
                                 const std::vector<MatrixX<S>>& targets) {
  detail::check_forward_shapes(params, batch);
  const Eigen::Index n = batch.batch_size();
  const Eigen::Index t_len = batch.length();

  std::vector<MatrixX<S>> h(size_t(t_len) + 1);
  std::vector<MatrixX<S>> y;
  y.resize(size_t(t_len));
  h[0] = params.h0.transpose().replicate(n, 1);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    MatrixX<S> a =
        h[size_t(t)] * params.w_rec + batch.steps[size_t(t)] * params.w_in;
    a.rowwise() += params.b_h.transpose();
    h[size_t(t) + 1] = detail::apply_transfer_plain(a, f_h);
    MatrixX<S> b = h[size_t(t) + 1] * params.w_out;
    b.rowwise() += params.b_y.transpose();
    y[size_t(t)] = detail::apply_transfer_plain(b, f_y);
  }

  std::vector<MatrixX<S>> d_y;
  const S loss = sequence_bce_nll_with_grad(y, targets, d_y);

  ParamGrads<S> g = ParamGrads<S>::zeros(params.input_dim(),
                                         params.hidden_dim(),
                                         params.output_dim());
  std::vector<MatrixX<S>> d_h(size_t(t_len) + 1,
                              MatrixX<S>::Zero(n, params.hidden_dim()));

  for (Eigen::Index t = 0; t + 1 < t_len; ++t) {
    const MatrixX<S> d_b = d_y[size_t(t)].cwiseProduct(
        detail::transfer_derivative_from_output(y[size_t(t)], f_y));
    g.w_out.noalias() += h[size_t(t) + 1].transpose() * d_b;
    g.b_y += d_b.colwise().sum().transpose();
    d_h[size_t(t) + 1].noalias() += d_b * params.w_out.transpose();
  }

  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    const MatrixX<S> d_a = d_h[size_t(t) + 1].cwiseProduct(
        detail::transfer_derivative_from_output(h[size_t(t) + 1], f_h));
    g.w_rec.noalias() += h[size_t(t)].transpose() * d_a;
    g.w_in.noalias() += batch.steps[size_t(t)].transpose() * d_a;
    g.b_h += d_a.colwise().sum().transpose();
    d_h[size_t(t)].noalias() += d_a * params.w_rec.transpose();
  }
  g.h0 = d_h[0].colwise().sum().transpose();

  return {loss, std::move(g)};
}

/// Central-difference gradient of an arbitrary loss closure; the test oracle
/// for backward_fd.  Costs two loss evaluations per parameter.
template <class S>
ParamGrads<S> finite_difference_grad(
    const std::function<S(const RnnParams<S>&)>& loss_fn,
    const RnnParams<S>& params, S epsilon) {
  if (!(epsilon > S(0))) {
    throw std::invalid_argument("finite_difference_grad: epsilon must be > 0");
  }
  RnnParams<S> probe = params;
  VectorX<S> flat = params.flatten();
  VectorX<S> grad(flat.size());
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    const S saved = flat[i];
    flat[i] = saved + epsilon;
    probe.set_from_flat(flat);
    const S up = loss_fn(probe);
    flat[i] = saved - epsilon;
    probe.set_from_flat(flat);
    const S down = loss_fn(probe);
    flat[i] = saved;
    grad[i] = (up - down) / (S(2) * epsilon);
  }
  probe.set_from_flat(flat);
  ParamGrads<S> g = ParamGrads<S>::zeros(params.input_dim(),
                                         params.hidden_dim(),
                                         params.output_dim());
  g.set_from_flat(grad);
  return g;
}

// ---------------------------------------------------------------------------
// The loss/regularizer decomposition of a single unit's weight gradient.
// ---------------------------------------------------------------------------

/// Forward context of one unit: incoming moments, its weights and keep prob.
struct UnitContext {
  GaussianVec<double> x;
  VectorX<double> w;
  KeepProb p;
};

/// dJ/dw split into the local loss derivative and the implicit regularizer:
///   loss_part_i = dJ/dE[a] * p * E[x_i]
///   delta       = dJ/dV[a]
///   eta_i       = |delta| * p * ((1-p) E[x_i]^2 + V[x_i])
///   reg_part_i  = 2 sgn(delta) eta_i w_i
struct UnitDecomposition {
  double delta = 0.0;
  VectorX<double> eta;
  VectorX<double> loss_part;
  VectorX<double> reg_part;
};

inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

inline UnitDecomposition decompose_unit_gradient(const UnitContext& ctx,
                                                 double d_loss_d_mean,
                                                 double d_loss_d_var) {
  if (ctx.w.size() != ctx.x.size()) {
    throw std::invalid_argument("decompose_unit_gradient: shape mismatch");
  }
  const double p = ctx.p.value();
  UnitDecomposition d;
  d.delta = d_loss_d_var;
  d.loss_part = d_loss_d_mean * p * ctx.x.mean;
  d.eta = std::abs(d.delta) * p *
          ((1.0 - p) * ctx.x.mean.array().square() + ctx.x.var.array());
  d.reg_part = 2.0 * sgn(d.delta) * d.eta.cwiseProduct(ctx.w);
  return d;
}

/// The same unit's full weight gradient straight from the chain rule, used
/// to verify that loss_part + reg_part reassembles it.
inline VectorX<double> unit_weight_gradient(const UnitContext& ctx,
                                            double d_loss_d_mean,
                                            double d_loss_d_var) {
  const double p = ctx.p.value();
  VectorX<double> dv_dw2 =
      (p * ((1.0 - p) * ctx.x.mean.array().square() + ctx.x.var.array()))
          .matrix();
  return d_loss_d_mean * p * ctx.x.mean +
         d_loss_d_var * 2.0 * dv_dw2.cwiseProduct(ctx.w);
}

/// The sampling-path regularizer term for one Gaussian draw s: per weight
///   dJ/da_hat * sqrt(p (1-p) E[x_i]^2 + p V[x_i]) * s.
/// Zero-mean over s and independent of the current weight values.
inline VectorX<double> sampled_reg_term(const UnitContext& ctx, double s,
                                        double error_signal) {
  const double p = ctx.p.value();
  return error_signal * s *
         (p * (1.0 - p) * ctx.x.mean.array().square() + p * ctx.x.var.array())
             .sqrt()
             .matrix();
}

}  // namespace fdrnn

#endif  // FDRNN_GRADIENTS_HPP
