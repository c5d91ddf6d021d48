#ifndef FDRNN_NETWORK_HPP
#define FDRNN_NETWORK_HPP

#include <random>
#include <stdexcept>
#include <vector>

#include "fdrnn/gaussian.hpp"
#include "fdrnn/moments.hpp"

namespace fdrnn {

/// All learnable parameters of a single-hidden-layer recurrent network.
/// Activations are row vectors: h_t = f_h(x_t W_in + h_{t-1} W_rec + b_h),
/// y_t = f_y(h_t W_out + b_y).
template <class S>
struct RnnParams {
  MatrixX<S> w_in;   // input_dim x hidden_dim
  MatrixX<S> w_rec;  // hidden_dim x hidden_dim
  MatrixX<S> w_out;  // hidden_dim x output_dim
  VectorX<S> b_h;    // hidden_dim
  VectorX<S> b_y;    // output_dim
  VectorX<S> h0;     // hidden_dim

  RnnParams() = default;

  static RnnParams zeros(Eigen::Index input_dim, Eigen::Index hidden_dim,
                         Eigen::Index output_dim) {
    RnnParams p;
    p.w_in = MatrixX<S>::Zero(input_dim, hidden_dim);
    p.w_rec = MatrixX<S>::Zero(hidden_dim, hidden_dim);
    p.w_out = MatrixX<S>::Zero(hidden_dim, output_dim);
    p.b_h = VectorX<S>::Zero(hidden_dim);
    p.b_y = VectorX<S>::Zero(output_dim);
    p.h0 = VectorX<S>::Zero(hidden_dim);
    return p;
  }

  Eigen::Index input_dim() const { return w_in.rows(); }
  Eigen::Index hidden_dim() const { return w_rec.rows(); }
  Eigen::Index output_dim() const { return w_out.cols(); }

  void validate() const {
    const Eigen::Index k = input_dim(), g = hidden_dim(), o = output_dim();
    if (w_in.cols() != g || w_rec.cols() != g || w_out.rows() != g ||
        b_h.size() != g || b_y.size() != o || h0.size() != g) {
      throw std::invalid_argument("RnnParams: inconsistent shapes");
    }
  }

  Eigen::Index parameter_count() const {
    return w_in.size() + w_rec.size() + w_out.size() + b_h.size() +
           b_y.size() + h0.size();
  }

  VectorX<S> flatten() const {
    VectorX<S> v(parameter_count());
    Eigen::Index at = 0;
    auto put = [&](const auto& block) {
      v.segment(at, block.size()) =
          Eigen::Map<const VectorX<S>>(block.data(), block.size());
      at += block.size();
    };
    put(w_in); put(w_rec); put(w_out); put(b_h); put(b_y); put(h0);
    return v;
  }

  void set_from_flat(const VectorX<S>& v) {
    if (v.size() != parameter_count()) {
      throw std::invalid_argument("RnnParams: flat size mismatch");
    }
    Eigen::Index at = 0;
    auto take = [&](auto& block) {
      Eigen::Map<VectorX<S>>(block.data(), block.size()) =
          v.segment(at, block.size());
      at += block.size();
    };
    take(w_in); take(w_rec); take(w_out); take(b_h); take(b_y); take(h0);
  }
};

/// Per-parameter gradients, shape-congruent with RnnParams.
template <class S>
using ParamGrads = RnnParams<S>;

/// Keep probabilities per connection group, plus the final-layer switch.
/// When fd_final_layer is false the output layer is an ordinary forward pass
/// on the hidden means and the hidden variance is neglected entirely.
struct DropoutConfig {
  KeepProb p_in;
  KeepProb p_hid;
  KeepProb p_out;
  bool fd_final_layer = true;
};

/// A minibatch of equally long input sequences, step-major: steps[t] is the
/// n x input_dim matrix of inputs at time t.
template <class S>
struct SequenceBatch {
  std::vector<MatrixX<S>> steps;

  SequenceBatch() = default;
  explicit SequenceBatch(std::vector<MatrixX<S>> s) : steps(std::move(s)) {
    if (steps.empty()) {
      throw std::invalid_argument("SequenceBatch: needs at least one step");
    }
    for (const auto& m : steps) {
      if (m.rows() != steps.front().rows() ||
          m.cols() != steps.front().cols()) {
        throw std::invalid_argument("SequenceBatch: ragged steps");
      }
    }
  }

  Eigen::Index batch_size() const { return steps.front().rows(); }
  Eigen::Index length() const { return static_cast<Eigen::Index>(steps.size()); }
  Eigen::Index dim() const { return steps.front().cols(); }
};

namespace detail {

template <class S>
void check_forward_shapes(const RnnParams<S>& params,
                          const SequenceBatch<S>& batch) {
  params.validate();
  if (batch.dim() != params.input_dim()) {
    throw std::invalid_argument("forward: batch/input dimension mismatch");
  }
}

template <class S>
MatrixX<S> apply_transfer_plain(const MatrixX<S>& a, TransferKind kind) {
  switch (kind) {
    case TransferKind::Tanh:
      return a.array().tanh().matrix();
    case TransferKind::Sigmoid:
      return (S(1) / (S(1) + (-a.array()).exp())).matrix();
    case TransferKind::Rectifier:
      return a.cwiseMax(S(0));
    case TransferKind::Identity:
      return a;
  }
  throw std::logic_error("apply_transfer_plain: bad kind");
}

// Derivative of the plain transfer from its post-activation value.
template <class S>
MatrixX<S> transfer_derivative_from_output(const MatrixX<S>& h,
                                           TransferKind kind) {
  switch (kind) {
    case TransferKind::Tanh:
      return (S(1) - h.array().square()).matrix();
    case TransferKind::Sigmoid:
      return (h.array() * (S(1) - h.array())).matrix();
    case TransferKind::Rectifier:
      return (h.array() > S(0)).template cast<S>().matrix();
    case TransferKind::Identity:
      return MatrixX<S>::Ones(h.rows(), h.cols());
  }
  throw std::logic_error("transfer_derivative_from_output: bad kind");
}

}  // namespace detail

/// Plain deterministic forward pass; returns the outputs per time step.
template <class S>
std::vector<MatrixX<S>> forward_plain(const RnnParams<S>& params,
                                      TransferKind f_h, TransferKind f_y,
                                      const SequenceBatch<S>& batch) {
  detail::check_forward_shapes(params, batch);
  const Eigen::Index n = batch.batch_size();
  const Eigen::Index t_len = batch.length();

  MatrixX<S> h = params.h0.transpose().replicate(n, 1);
  std::vector<MatrixX<S>> outputs(static_cast<size_t>(t_len));
  for (Eigen::Index t = 0; t < t_len; ++t) {
    MatrixX<S> a = h * params.w_rec + batch.steps[size_t(t)] * params.w_in;
    a.rowwise() += params.b_h.transpose();
    h = detail::apply_transfer_plain(a, f_h);
    MatrixX<S> b = h * params.w_out;
    b.rowwise() += params.b_y.transpose();
    outputs[size_t(t)] = detail::apply_transfer_plain(b, f_y);
  }
  return outputs;
}

/// Intermediate moments retained by forward_fd for backpropagation.
template <class S>
struct FdTrace {
  // hidden moments, length T+1 (index 0 is the deterministic h0 state)
  std::vector<MatrixX<S>> hm, hv;
  // pre-synaptic hidden moments, length T
  std::vector<MatrixX<S>> am, av;
  // output pre-synaptic moments, length T (fd_final_layer only)
  std::vector<MatrixX<S>> bm, bv;
  // output means, length T
  std::vector<MatrixX<S>> y;
};

/// Fast-dropout forward pass.  The hidden state is carried as per-unit mean
/// and variance; the concatenated layer [h_{t-1}, x_t] against [W_rec; W_in]
/// is evaluated blockwise with p_hid on the hidden block and p_in on the
/// input block.  Output variance is discarded: with fd_final_layer the mean
/// of the f_y moment map is returned, otherwise an ordinary forward pass on
/// the hidden means.
template <class S>
std::vector<MatrixX<S>> forward_fd(const RnnParams<S>& params,
                                   const DropoutConfig& cfg, TransferKind f_h,
                                   TransferKind f_y,
                                   const SequenceBatch<S>& batch,
                                   FdTrace<S>* trace = nullptr) {
  detail::check_forward_shapes(params, batch);
  const Eigen::Index n = batch.batch_size();
  const Eigen::Index t_len = batch.length();
  const Eigen::Index gamma = params.hidden_dim();
  const S p_i = S(cfg.p_in.value());
  const S p_h = S(cfg.p_hid.value());
  const S p_o = S(cfg.p_out.value());

  const MatrixX<S> w_rec_sq = params.w_rec.array().square().matrix();
  const MatrixX<S> w_in_sq = params.w_in.array().square().matrix();
  const MatrixX<S> w_out_sq = params.w_out.array().square().matrix();

  MatrixX<S> hm = params.h0.transpose().replicate(n, 1);
  MatrixX<S> hv = MatrixX<S>::Zero(n, gamma);

  if (trace) {
    trace->hm.assign(1, hm);
    trace->hv.assign(1, hv);
    trace->am.clear(); trace->av.clear();
    trace->bm.clear(); trace->bv.clear();
    trace->y.clear();
  }

  std::vector<MatrixX<S>> outputs(static_cast<size_t>(t_len));
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const MatrixX<S>& x = batch.steps[size_t(t)];

    MatrixX<S> am = (p_h * (hm * params.w_rec) + p_i * (x * params.w_in));
    am.rowwise() += params.b_h.transpose();
    const MatrixX<S> rec_src =
        (p_h * (S(1) - p_h)) * hm.array().square().matrix() + p_h * hv;
    const MatrixX<S> in_src =
        (p_i * (S(1) - p_i)) * x.array().square().matrix();
    MatrixX<S> av = rec_src * w_rec_sq + in_src * w_in_sq;

    transfer_moments_inplace(am, av, f_h, hm, hv);

    MatrixX<S> y;
    if (cfg.fd_final_layer) {
      MatrixX<S> bm = p_o * (hm * params.w_out);
      bm.rowwise() += params.b_y.transpose();
      const MatrixX<S> out_src =
          (p_o * (S(1) - p_o)) * hm.array().square().matrix() + p_o * hv;
      MatrixX<S> bv = out_src * w_out_sq;
      y.resize(n, params.output_dim());
      for (Eigen::Index j = 0; j < y.cols(); ++j) {
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
          y(i, j) = detail::transfer_grads<S>(bm(i, j), bv(i, j), f_y).mean;
        }
      }
      if (trace) {
        trace->bm.push_back(std::move(bm));
        trace->bv.push_back(std::move(bv));
      }
    } else {
      MatrixX<S> b = hm * params.w_out;
      b.rowwise() += params.b_y.transpose();
      y = detail::apply_transfer_plain(b, f_y);
    }

    if (trace) {
      trace->am.push_back(std::move(am));
      trace->av.push_back(std::move(av));
      trace->hm.push_back(hm);
      trace->hv.push_back(hv);
      trace->y.push_back(y);
    }
    outputs[size_t(t)] = std::move(y);
  }
  return outputs;
}

/// Sampling variant: every pre-synaptic activation is a single Gaussian draw
/// and downstream units treat it as a point mass.  Draws are independent per
/// time step and per unit.
template <class S>
std::vector<MatrixX<S>> forward_fd_sampled(const RnnParams<S>& params,
                                           const DropoutConfig& cfg,
                                           TransferKind f_h, TransferKind f_y,
                                           const SequenceBatch<S>& batch,
                                           std::mt19937_64& rng) {
  detail::check_forward_shapes(params, batch);
  const Eigen::Index n = batch.batch_size();
  const Eigen::Index t_len = batch.length();
  const S p_i = S(cfg.p_in.value());
  const S p_h = S(cfg.p_hid.value());
  const S p_o = S(cfg.p_out.value());

  const MatrixX<S> w_rec_sq = params.w_rec.array().square().matrix();
  const MatrixX<S> w_in_sq = params.w_in.array().square().matrix();
  const MatrixX<S> w_out_sq = params.w_out.array().square().matrix();

  std::normal_distribution<double> normal(0.0, 1.0);
  auto incarnate = [&](const MatrixX<S>& m, const MatrixX<S>& v) {
    MatrixX<S> a(m.rows(), m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        a(i, j) = m(i, j) + S(normal(rng)) * std::sqrt(v(i, j));
      }
    }
    return a;
  };

  MatrixX<S> h = params.h0.transpose().replicate(n, 1);
  std::vector<MatrixX<S>> outputs(static_cast<size_t>(t_len));
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const MatrixX<S>& x = batch.steps[size_t(t)];
    MatrixX<S> am = p_h * (h * params.w_rec) + p_i * (x * params.w_in);
    am.rowwise() += params.b_h.transpose();
    const MatrixX<S> src = (p_h * (S(1) - p_h)) * h.array().square().matrix();
    const MatrixX<S> in_src =
        (p_i * (S(1) - p_i)) * x.array().square().matrix();
    MatrixX<S> av = src * w_rec_sq + in_src * w_in_sq;
    h = detail::apply_transfer_plain(incarnate(am, av), f_h);

    if (cfg.fd_final_layer) {
      MatrixX<S> bm = p_o * (h * params.w_out);
      bm.rowwise() += params.b_y.transpose();
      const MatrixX<S> out_src =
          (p_o * (S(1) - p_o)) * h.array().square().matrix();
      MatrixX<S> bv = out_src * w_out_sq;
      outputs[size_t(t)] =
          detail::apply_transfer_plain(incarnate(bm, bv), f_y);
    } else {
      MatrixX<S> b = h * params.w_out;
      b.rowwise() += params.b_y.transpose();
      outputs[size_t(t)] = detail::apply_transfer_plain(b, f_y);
    }
  }
  return outputs;
}

}  // namespace fdrnn

#endif  // FDRNN_NETWORK_HPP
