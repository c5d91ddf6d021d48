#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "fdrnn/gradients.hpp"

using namespace fdrnn;

namespace {

RnnParams<double> random_params(int kappa, int gamma, int omega,
                                std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  RnnParams<double> p = RnnParams<double>::zeros(kappa, gamma, omega);
  auto fill = [&](auto& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
    }
  };
  fill(p.w_in);
  fill(p.w_rec);
  fill(p.w_out);
  for (Eigen::Index i = 0; i < p.b_h.size(); ++i) p.b_h[i] = u(rng);
  for (Eigen::Index i = 0; i < p.b_y.size(); ++i) p.b_y[i] = u(rng);
  for (Eigen::Index i = 0; i < p.h0.size(); ++i) p.h0[i] = u(rng);
  return p;
}

SequenceBatch<double> random_binary_batch(int n, int t_len, int kappa,
                                          std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.35);
  std::vector<MatrixX<double>> steps(static_cast<size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    MatrixX<double> m(n, kappa);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < kappa; ++j) m(i, j) = coin(rng) ? 1.0 : 0.0;
    steps[size_t(t)] = std::move(m);
  }
  return SequenceBatch<double>(std::move(steps));
}

/// max over parameters of |a - b| / max(|a|, |b|, floor); pairs below
/// abs_floor in both are ignored.
double max_rel_err(const RnnParams<double>& a, const RnnParams<double>& b,
                   double abs_floor = 1e-8) {
  const VectorX<double> fa = a.flatten(), fb = b.flatten();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < fa.size(); ++i) {
    const double diff = std::abs(fa[i] - fb[i]);
    if (diff <= abs_floor) continue;
    worst = std::max(worst, diff / std::max(std::abs(fa[i]), std::abs(fb[i])));
  }
  return worst;
}

}  // namespace

TEST_CASE("finite differences on closed-form losses") {
  std::mt19937_64 rng(1);
  auto p = random_params(2, 3, 2, rng);

  // quadratic: grad of ||theta||^2 is 2 theta
  auto quad = [](const RnnParams<double>& q) {
    return q.flatten().squaredNorm();
  };
  auto g = finite_difference_grad<double>(quad, p, 1e-5);
  CHECK((g.flatten() - 2.0 * p.flatten()).cwiseAbs().maxCoeff() < 1e-8);

  // linear: grad of c^T theta is c, exact to roundoff
  VectorX<double> c(p.parameter_count());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = u(rng);
  auto lin = [&](const RnnParams<double>& q) {
    return double(c.dot(q.flatten()));
  };
  g = finite_difference_grad<double>(lin, p, 1e-5);
  CHECK((g.flatten() - c).cwiseAbs().maxCoeff() < 1e-9);

  CHECK_THROWS_AS(finite_difference_grad<double>(quad, p, 0.0),
                  std::invalid_argument);
}

TEST_CASE("backward_fd matches central finite differences") {
  std::mt19937_64 rng(7);
  const int kappa = 3, gamma = 5, omega = 2, t_len = 4, n = 2;
  auto batch = random_binary_batch(n, t_len, kappa, rng);
  auto targets = random_binary_batch(n, t_len, omega, rng);

  for (bool fd_final : {true, false}) {
    for (double keep : {1.0, 0.8, 0.5}) {
      auto p = random_params(kappa, gamma, omega, rng, 0.7);
      DropoutConfig cfg{KeepProb(keep), KeepProb(keep), KeepProb(keep),
                        fd_final};
      auto res = backward_fd(p, cfg, TransferKind::Tanh,
                             TransferKind::Sigmoid, batch, targets.steps);
      auto fd = finite_difference_grad<double>(
          [&](const RnnParams<double>& q) {
            return sequence_bce_nll(
                forward_fd(q, cfg, TransferKind::Tanh, TransferKind::Sigmoid,
                           batch),
                targets.steps);
          },
          p, 1e-5);
      CAPTURE(fd_final);
      CAPTURE(keep);
      CHECK(max_rel_err(res.grads, fd) < 1e-4);
      CHECK(res.loss ==
            doctest::Approx(sequence_bce_nll(
                forward_fd(p, cfg, TransferKind::Tanh, TransferKind::Sigmoid,
                           batch),
                targets.steps)));
    }
  }
}

TEST_CASE("backward_fd with sigmoid hidden units also passes the oracle") {
  std::mt19937_64 rng(17);
  auto batch = random_binary_batch(2, 3, 3, rng);
  auto targets = random_binary_batch(2, 3, 2, rng);
  auto p = random_params(3, 4, 2, rng, 0.8);
  DropoutConfig cfg{KeepProb(0.7), KeepProb(0.6), KeepProb(0.8), true};
  auto res = backward_fd(p, cfg, TransferKind::Sigmoid, TransferKind::Sigmoid,
                         batch, targets.steps);
  auto fd = finite_difference_grad<double>(
      [&](const RnnParams<double>& q) {
        return sequence_bce_nll(
            forward_fd(q, cfg, TransferKind::Sigmoid, TransferKind::Sigmoid,
                       batch),
            targets.steps);
      },
      p, 1e-5);
  CHECK(max_rel_err(res.grads, fd) < 1e-4);
}

TEST_CASE("backward_plain matches central finite differences") {
  std::mt19937_64 rng(23);
  auto batch = random_binary_batch(2, 4, 3, rng);
  auto targets = random_binary_batch(2, 4, 2, rng);
  auto p = random_params(3, 5, 2, rng, 0.8);
  auto res = backward_plain(p, TransferKind::Tanh, TransferKind::Sigmoid,
                            batch, targets.steps);
  auto fd = finite_difference_grad<double>(
      [&](const RnnParams<double>& q) {
        return sequence_bce_nll(
            forward_plain(q, TransferKind::Tanh, TransferKind::Sigmoid, batch),
            targets.steps);
      },
      p, 1e-5);
  CHECK(max_rel_err(res.grads, fd) < 1e-4);
}

TEST_CASE("degenerate fast dropout reproduces plain BPTT gradients") {
  std::mt19937_64 rng(31);
  auto batch = random_binary_batch(2, 5, 4, rng);
  auto targets = random_binary_batch(2, 5, 3, rng);
  auto p = random_params(4, 6, 3, rng, 0.6);
  DropoutConfig cfg{KeepProb(1.0), KeepProb(1.0), KeepProb(1.0), false};
  auto fd = backward_fd(p, cfg, TransferKind::Tanh, TransferKind::Sigmoid,
                        batch, targets.steps);
  auto plain = backward_plain(p, TransferKind::Tanh, TransferKind::Sigmoid,
                              batch, targets.steps);
  CHECK(std::abs(fd.loss - plain.loss) < 1e-12);
  CHECK((fd.grads.flatten() - plain.grads.flatten()).cwiseAbs().maxCoeff() <
        1e-8);
}

TEST_CASE("weights reading only silent inputs get zero gradient") {
  std::mt19937_64 rng(37);
  auto batch = random_binary_batch(2, 4, 3, rng);
  for (auto& s : batch.steps) s.col(1).setZero();  // input dim 1 never fires
  auto targets = random_binary_batch(2, 4, 2, rng);
  auto p = random_params(3, 4, 2, rng);
  DropoutConfig cfg{KeepProb(0.8), KeepProb(0.7), KeepProb(0.9), true};
  auto res = backward_fd(p, cfg, TransferKind::Tanh, TransferKind::Sigmoid,
                         batch, targets.steps);
  CHECK(res.grads.w_in.row(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward_fd reports non-finite intermediates with the step") {
  std::mt19937_64 rng(41);
  auto batch = random_binary_batch(1, 3, 2, rng);
  for (auto& s : batch.steps) s.setOnes();
  auto targets = random_binary_batch(1, 3, 1, rng);
  auto p = random_params(2, 3, 1, rng);
  p.w_in.setConstant(1e308);  // overflows at the first step
  DropoutConfig cfg{KeepProb(0.9), KeepProb(0.9), KeepProb(0.9), false};
  CHECK_THROWS_WITH_AS(
      backward_fd(p, cfg, TransferKind::Identity, TransferKind::Identity,
                  batch, targets.steps),
      doctest::Contains("step 0"), std::runtime_error);
}

TEST_CASE("unit gradient decomposition") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> um(-2.0, 2.0);
  std::uniform_real_distribution<double> uv(0.0, 3.0);
  std::uniform_real_distribution<double> uw(-2.0, 2.0);
  std::uniform_real_distribution<double> up(0.05, 0.95);
  std::uniform_int_distribution<int> dim(1, 8);
  std::uniform_real_distribution<double> ut(0.05, 0.95);

  int delta_pos = 0, delta_neg = 0;
  for (int rep = 0; rep < 500; ++rep) {
    const int n = dim(rng);
    VectorX<double> m(n), v(n), w(n);
    for (int i = 0; i < n; ++i) m[i] = um(rng), v[i] = uv(rng), w[i] = uw(rng);
    UnitContext ctx{GaussianVec<double>(m, v), w, KeepProb(up(rng))};

    const LossKind kind = static_cast<LossKind>(rep % 3);
    const double target = ut(rng);
    auto a = presynaptic_moments(ctx.x, MatrixX<double>(ctx.w),
                                 VectorX<double>{VectorX<double>::Zero(1)}, ctx.p);
    double av = a.var[0];
    if (kind == LossKind::GaussianNllOnMoments && av <= 1e-9) continue;
    const auto ul = unit_loss(a.mean[0], av, target, kind);

    const auto dec = decompose_unit_gradient(ctx, ul.d_mean, ul.d_var);
    const auto full = unit_weight_gradient(ctx, ul.d_mean, ul.d_var);

    // decomposition identity
    CHECK((dec.loss_part + dec.reg_part - full).cwiseAbs().maxCoeff() < 1e-10);
    // eta is nonnegative, and the reg term vanishes exactly when delta does
    CHECK(dec.eta.minCoeff() >= 0.0);
    if (dec.delta == 0.0) {
      CHECK(dec.reg_part.cwiseAbs().maxCoeff() == 0.0);
    }
    if (kind == LossKind::SquaredOnMean) {
      CHECK(dec.delta == 0.0);
    }
    // weight-decay sign structure: delta > 0 shrinks, delta < 0 grows
    for (int i = 0; i < n; ++i) {
      const double expect = 2.0 * sgn(dec.delta) * dec.eta[i] * w[i];
      CHECK(dec.reg_part[i] == doctest::Approx(expect).epsilon(1e-12));
      if (dec.delta > 0.0 && dec.eta[i] > 0.0 && w[i] != 0.0) {
        CHECK(sgn(dec.reg_part[i]) == sgn(w[i]));  // pushes toward zero
        ++delta_pos;
      }
      if (dec.delta < 0.0 && dec.eta[i] > 0.0 && w[i] != 0.0) {
        CHECK(sgn(dec.reg_part[i]) == -sgn(w[i]));  // grows the magnitude
        ++delta_neg;
      }
    }
  }
  CHECK(delta_pos > 0);
  CHECK(delta_neg > 0);
}

TEST_CASE("decomposition at the gaussian variance-stationary point") {
  VectorX<double> m(2), v(2), w(2);
  m << 1.0, -0.5;
  v << 0.4, 0.8;
  w << 0.7, 1.1;
  UnitContext ctx{GaussianVec<double>(m, v), w, KeepProb(0.8)};
  auto a = presynaptic_moments(ctx.x, MatrixX<double>(ctx.w),
                               VectorX<double>{VectorX<double>::Zero(1)}, ctx.p);
  // pick the target so V[a] = (E[a] - t)^2
  const double target = a.mean[0] - std::sqrt(a.var[0]);
  const auto ul =
      unit_loss(a.mean[0], a.var[0], target, LossKind::GaussianNllOnMoments);
  const auto dec = decompose_unit_gradient(ctx, ul.d_mean, ul.d_var);
  CHECK(std::abs(dec.delta) < 1e-12);
  CHECK(dec.reg_part.cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("sampled regularizer term") {
  std::mt19937_64 rng(47);
  VectorX<double> m(3), v(3), w(3);
  m << 0.5, -1.0, 2.0;
  v << 0.2, 0.0, 1.5;
  w << 0.3, -0.7, 1.2;
  UnitContext ctx{GaussianVec<double>(m, v), w, KeepProb(0.7)};

  // s = 0 gives the zero vector
  CHECK(sampled_reg_term(ctx, 0.0, 1.3).cwiseAbs().maxCoeff() == 0.0);

  // independent of the weights
  UnitContext ctx2 = ctx;
  ctx2.w *= -3.7;
  const auto r1 = sampled_reg_term(ctx, 0.8, 1.3);
  const auto r2 = sampled_reg_term(ctx2, 0.8, 1.3);
  CHECK((r1 - r2).cwiseAbs().maxCoeff() == 0.0);

  // zero-mean over draws of s
  std::normal_distribution<double> normal(0.0, 1.0);
  const long n = 100000;
  VectorX<double> acc = VectorX<double>::Zero(3);
  for (long d = 0; d < n; ++d) {
    acc += sampled_reg_term(ctx, normal(rng), 1.3);
  }
  acc /= double(n);
  const auto scale = sampled_reg_term(ctx, 1.0, 1.3);  // per-weight stddev
  for (int i = 0; i < 3; ++i) {
    const double se = std::abs(scale[i]) / std::sqrt(double(n));
    CHECK(std::abs(acc[i]) < 4.0 * se + 1e-12);
  }
}
