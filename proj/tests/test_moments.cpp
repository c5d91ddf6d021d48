#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "fdrnn/moments.hpp"
#include "support/gauss_hermite.hpp"

using namespace fdrnn;
using fdrnn_tests::GaussHermite;

namespace {

GaussianVec<double> gvec(std::initializer_list<double> mean,
                         std::initializer_list<double> var) {
  VectorX<double> m(static_cast<Eigen::Index>(mean.size()));
  VectorX<double> v(static_cast<Eigen::Index>(var.size()));
  Eigen::Index i = 0;
  for (double x : mean) m[i++] = x;
  i = 0;
  for (double x : var) v[i++] = x;
  return GaussianVec<double>(std::move(m), std::move(v));
}

MatrixX<double> mat(Eigen::Index rows, Eigen::Index cols,
                    std::initializer_list<double> vals) {
  MatrixX<double> m(rows, cols);
  Eigen::Index k = 0;
  for (double v : vals) m(k / cols, k % cols) = v, ++k;
  return m;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

VectorX<double> zerov(Eigen::Index n) { return VectorX<double>::Zero(n); }

// Independent rectifier oracle: the integrand is smooth on [0, inf), so
// composite Simpson over the support delivers ~1e-10.  (Gauss-Hermite sees
// the kink at 0 and stalls near 1e-2.)
std::pair<double, double> rectifier_oracle(double mu, double var) {
  const double s = std::sqrt(var);
  const double hi = mu + 12.0 * s;
  if (hi <= 0.0) return {0.0, 0.0};
  const int n = 20000;  // even
  const double h = hi / n;
  auto dens = [&](double x) {
    const double z = (x - mu) / s;
    return std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * M_PI));
  };
  double m1 = 0.0, m2 = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = h * i;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    m1 += w * x * dens(x);
    m2 += w * x * x * dens(x);
  }
  m1 *= h / 3.0;
  m2 *= h / 3.0;
  return {m1, m2 - m1 * m1};
}

}  // namespace

TEST_CASE("presynaptic moments: worked examples") {
  // no dropout, deterministic input
  {
    auto out = presynaptic_moments(gvec({1, 2}, {0, 0}), mat(2, 1, {1, 1}),
                                   zerov(1), KeepProb(1.0));
    CHECK(out.mean[0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(out.var[0] == 0.0);
  }
  // mask enumeration: d in {0,1} gives outcomes {0,2} with prob 1/2 each
  {
    auto out = presynaptic_moments(gvec({1}, {0}), mat(1, 1, {2}),
                                   zerov(1), KeepProb(0.5));
    CHECK(out.mean[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(out.var[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
  // law of total variance: 0.5 * 1 + 0
  {
    auto out = presynaptic_moments(gvec({0}, {1}), mat(1, 1, {1}),
                                   zerov(1), KeepProb(0.5));
    CHECK(out.mean[0] == doctest::Approx(0.0));
    CHECK(out.var[0] == doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("presynaptic moments: bias feeds the mean only") {
  VectorX<double> bias(1);
  bias[0] = 3.0;
  auto out = presynaptic_moments(gvec({1}, {0}), mat(1, 1, {1}), bias,
                                 KeepProb(0.5));
  CHECK(out.mean[0] == doctest::Approx(0.5 + 3.0));
  CHECK(out.var[0] == doctest::Approx(0.25));
}

TEST_CASE("presynaptic moments: error paths") {
  CHECK_THROWS_AS(presynaptic_moments(gvec({1, 2}, {0, 0}), mat(1, 1, {1}),
                                      zerov(1), KeepProb(1.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(presynaptic_moments(gvec({1}, {0}), mat(1, 2, {1, 1}),
                                      zerov(1), KeepProb(1.0)),
                  std::invalid_argument);
  VectorX<double> m(1), v(1);
  m[0] = 0.0;
  v[0] = -0.5;
  CHECK_THROWS_AS(GaussianVec<double>(m, v), std::invalid_argument);
  CHECK_THROWS_AS(KeepProb(1.5), std::invalid_argument);
  // roundoff-scale negatives are clamped, not rejected
  v[0] = -1e-13;
  GaussianVec<double> ok(m, v);
  CHECK(ok.var[0] == 0.0);
}

TEST_CASE("transfer moments: worked examples") {
  auto sig = transfer_moments(gvec({0}, {0}), TransferKind::Sigmoid);
  CHECK(sig.mean[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(sig.var[0] == 0.0);

  auto th = transfer_moments(gvec({0}, {4}), TransferKind::Tanh);
  CHECK(th.mean[0] == doctest::Approx(0.0).epsilon(1e-12));
  // frozen Gauss-Hermite value (301 nodes)
  CHECK(th.var[0] == doctest::Approx(0.635261234174).epsilon(2e-3));

  auto re = transfer_moments(gvec({0}, {1}), TransferKind::Rectifier);
  CHECK(re.mean[0] == doctest::Approx(0.398942280401).epsilon(1e-10));
  CHECK(re.var[0] == doctest::Approx(0.340845056908).epsilon(1e-10));

  auto id = transfer_moments(gvec({-2}, {3}), TransferKind::Identity);
  CHECK(id.mean[0] == -2.0);
  CHECK(id.var[0] == 3.0);
}

TEST_CASE("transfer moments: exact at zero variance") {
  for (double m : {-8.0, -1.3, 0.0, 0.4, 2.0, 9.0}) {
    auto th = transfer_moments(gvec({m}, {0}), TransferKind::Tanh);
    CHECK(th.mean[0] == std::tanh(m));
    CHECK(th.var[0] == 0.0);
    auto sg = transfer_moments(gvec({m}, {0}), TransferKind::Sigmoid);
    CHECK(sg.mean[0] == doctest::Approx(sigmoid(m)).epsilon(1e-15));
    CHECK(sg.var[0] == 0.0);
  }
}

TEST_CASE("transfer moments match Gauss-Hermite quadrature") {
  GaussHermite gh(301);
  double worst_tanh = 0.0, worst_sig = 0.0, worst_rect = 0.0;
  for (double mu = -6.0; mu <= 6.0; mu += 0.75) {
    for (double var : {0.0, 0.25, 1.0, 2.5, 4.0, 9.0, 16.0}) {
      {
        auto got = transfer_moments(gvec({mu}, {var}), TransferKind::Tanh);
        auto [em, ev] = gh.moments([](double x) { return std::tanh(x); }, mu,
                                   var);
        worst_tanh = std::max({worst_tanh, std::abs(got.mean[0] - em),
                               std::abs(got.var[0] - ev)});
      }
      {
        auto got = transfer_moments(gvec({mu}, {var}), TransferKind::Sigmoid);
        auto [em, ev] = gh.moments(sigmoid, mu, var);
        worst_sig = std::max({worst_sig, std::abs(got.mean[0] - em),
                              std::abs(got.var[0] - ev)});
      }
      if (var > 0.0) {
        auto got =
            transfer_moments(gvec({mu}, {var}), TransferKind::Rectifier);
        auto [em, ev] = rectifier_oracle(mu, var);
        worst_rect = std::max({worst_rect, std::abs(got.mean[0] - em),
                               std::abs(got.var[0] - ev)});
      }
    }
  }
  CHECK(worst_tanh < 2e-2);
  CHECK(worst_sig < 2e-2);
  CHECK(worst_rect < 1e-8);
}

TEST_CASE("transfer moment bounds") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> um(-10.0, 10.0);
  std::uniform_real_distribution<double> uv(0.0, 25.0);
  for (int i = 0; i < 2000; ++i) {
    const double m = um(rng), v = uv(rng);
    auto th = transfer_moments(gvec({m}, {v}), TransferKind::Tanh);
    CHECK(th.mean[0] > -1.0);
    CHECK(th.mean[0] < 1.0);
    CHECK(th.var[0] >= 0.0);
    CHECK(th.var[0] <= 1.0);
    auto sg = transfer_moments(gvec({m}, {v}), TransferKind::Sigmoid);
    CHECK(sg.mean[0] > 0.0);
    CHECK(sg.mean[0] < 1.0);
    CHECK(sg.var[0] >= 0.0);
    CHECK(sg.var[0] <= 0.25);
  }
}

TEST_CASE("presynaptic variance is nonnegative over randomized inputs") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> um(-10.0, 10.0);
  std::uniform_real_distribution<double> uv(0.0, 25.0);
  std::uniform_real_distribution<double> uw(-3.0, 3.0);
  std::uniform_int_distribution<int> dim(1, 8);
  for (int rep = 0; rep < 500; ++rep) {
    const int in = dim(rng), out = dim(rng);
    VectorX<double> m(in), v(in), b(out);
    for (int i = 0; i < in; ++i) m[i] = um(rng), v[i] = uv(rng);
    for (int i = 0; i < out; ++i) b[i] = uw(rng);
    MatrixX<double> w(in, out);
    for (int i = 0; i < in; ++i)
      for (int j = 0; j < out; ++j) w(i, j) = uw(rng);
    const double p = 0.1 * double(rep % 11);
    auto a = presynaptic_moments(GaussianVec<double>(m, v), w, b, KeepProb(p));
    CHECK((a.var.array() >= 0.0).all());
  }
}

TEST_CASE("degenerate dropout reproduces the deterministic affine map") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uw(-2.0, 2.0);
  VectorX<double> m(4), b(3);
  MatrixX<double> w(4, 3);
  for (int i = 0; i < 4; ++i) m[i] = uw(rng);
  for (int i = 0; i < 3; ++i) b[i] = uw(rng);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) w(i, j) = uw(rng);
  auto a = presynaptic_moments(GaussianVec<double>::point(m), w, b,
                               KeepProb(1.0));
  VectorX<double> expect = w.transpose() * m + b;
  CHECK((a.mean - expect).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.var.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("presynaptic moments match dropout Monte Carlo") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> um(-2.0, 2.0);
  std::uniform_real_distribution<double> uv(0.0, 1.5);
  std::uniform_real_distribution<double> uw(-1.5, 1.5);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> dim(2, 8);

  const long n_draws = 200000;
  for (int rep = 0; rep < 12; ++rep) {
    const int in = dim(rng);
    const double p = 0.1 + 0.1 * double(rep % 9);
    VectorX<double> m(in), v(in), sd(in);
    for (int i = 0; i < in; ++i) {
      m[i] = um(rng);
      v[i] = rep % 2 == 0 ? uv(rng) : 0.0;
      sd[i] = std::sqrt(v[i]);
    }
    VectorX<double> w(in), b(1);
    for (int i = 0; i < in; ++i) w[i] = uw(rng);
    b[0] = uw(rng);
    auto a = presynaptic_moments(GaussianVec<double>(m, v), MatrixX<double>(w),
                                 b, KeepProb(p));

    double s1 = 0.0, s2 = 0.0, s4 = 0.0;
    std::vector<double> draws;
    draws.reserve(size_t(n_draws));
    for (long d = 0; d < n_draws; ++d) {
      double acc = b[0];
      for (int i = 0; i < in; ++i) {
        if (u01(rng) < p) {
          acc += (m[i] + sd[i] * normal(rng)) * w[i];
        }
      }
      draws.push_back(acc);
      s1 += acc;
      s2 += acc * acc;
    }
    const double emp_mean = s1 / double(n_draws);
    const double emp_var =
        (s2 - double(n_draws) * emp_mean * emp_mean) / double(n_draws - 1);
    for (double x : draws) {
      const double c = x - emp_mean;
      s4 += c * c * c * c;
    }
    const double m4 = s4 / double(n_draws);
    const double se_mean = std::sqrt(emp_var / double(n_draws));
    const double se_var =
        std::sqrt(std::max(m4 - emp_var * emp_var, 0.0) / double(n_draws));

    CHECK(std::abs(a.mean[0] - emp_mean) < 4.0 * se_mean);
    CHECK(std::abs(a.var[0] - emp_var) < 4.0 * se_var);
  }
}

TEST_CASE("adaptive weight noise moments") {
  // fully deterministic
  {
    auto out = awn_presynaptic_moments(
        gvec({1, 2}, {0, 0}),
        WeightDist<double>(mat(2, 1, {3, 4}), mat(2, 1, {0, 0})));
    CHECK(out.mean[0] == doctest::Approx(11.0));
    CHECK(out.var[0] == 0.0);
  }
  // direct evaluation: var = 1*4 + 1*1 + 1*1 = 6
  {
    auto out = awn_presynaptic_moments(
        gvec({1}, {1}),
        WeightDist<double>(mat(1, 1, {2}), mat(1, 1, {1})));
    CHECK(out.mean[0] == doctest::Approx(2.0));
    CHECK(out.var[0] == doctest::Approx(6.0));
  }
  CHECK_THROWS_AS(
      awn_presynaptic_moments(gvec({1, 2}, {0, 0}), WeightDist<double>(
                                  mat(1, 1, {1}), mat(1, 1, {0}))),
      std::invalid_argument);
}

TEST_CASE("awn moments match Monte Carlo over inputs and weights") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal(0.0, 1.0);
  const long n = 400000;
  double s1 = 0.0, s2 = 0.0;
  for (long d = 0; d < n; ++d) {
    const double x = 1.0 + normal(rng);
    const double w = 2.0 + normal(rng);
    const double a = x * w;
    s1 += a;
    s2 += a * a;
  }
  const double emp_mean = s1 / double(n);
  const double emp_var = s2 / double(n) - emp_mean * emp_mean;
  CHECK(emp_mean == doctest::Approx(2.0).epsilon(0.02));
  CHECK(emp_var == doctest::Approx(6.0).epsilon(0.05));
}

TEST_CASE("dropout expectation matches awn with p-rescaled weights") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uw(-2.0, 2.0);
  const int in = 5, out = 3;
  VectorX<double> m(in), v(in);
  MatrixX<double> w(in, out);
  for (int i = 0; i < in; ++i) m[i] = uw(rng), v[i] = std::abs(uw(rng));
  for (int i = 0; i < in; ++i)
    for (int j = 0; j < out; ++j) w(i, j) = uw(rng);
  for (double p : {0.0, 0.3, 0.7, 1.0}) {
    GaussianVec<double> x(m, v);
    auto fd = presynaptic_moments(x, w, zerov(out),
                                  KeepProb(p));
    auto awn = awn_presynaptic_moments(
        x, WeightDist<double>(p * w, MatrixX<double>::Zero(in, out)));
    CHECK((fd.mean - awn.mean).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("sample_presynaptic") {
  VectorX<double> b = VectorX<double>::Zero(2);
  MatrixX<double> w = mat(3, 2, {0.5, -1.0, 0.25, 0.75, -0.5, 1.0});
  auto x = gvec({1.0, -0.5, 2.0}, {0.0, 0.0, 0.0});

  // zero variance everywhere: returns exactly E[a]
  {
    std::mt19937_64 rng(1);
    auto a = presynaptic_moments(x, w, b, KeepProb(1.0));
    auto s = sample_presynaptic(x, w, b, KeepProb(1.0), rng);
    CHECK((s - a.mean).cwiseAbs().maxCoeff() == 0.0);
  }
  // fixed seed determinism
  {
    std::mt19937_64 r1(42), r2(42);
    auto s1 = sample_presynaptic(x, w, b, KeepProb(0.5), r1);
    auto s2 = sample_presynaptic(x, w, b, KeepProb(0.5), r2);
    CHECK((s1 - s2).cwiseAbs().maxCoeff() == 0.0);
  }
  // empirical moments of many draws match the analytic ones
  {
    std::mt19937_64 rng(77);
    auto xg = gvec({1.0, -0.5}, {0.5, 2.0});
    MatrixX<double> w1 = mat(2, 1, {0.8, -1.2});
    VectorX<double> b1(1);
    b1[0] = 0.3;
    auto a = presynaptic_moments(xg, w1, b1, KeepProb(0.6));
    const long n = 1000000;
    double s1 = 0.0, s2 = 0.0;
    for (long d = 0; d < n; ++d) {
      const double val =
          sample_presynaptic(xg, w1, b1, KeepProb(0.6), rng)[0];
      s1 += val;
      s2 += val * val;
    }
    const double emp_mean = s1 / double(n);
    const double emp_var = s2 / double(n) - emp_mean * emp_mean;
    const double se_mean = std::sqrt(emp_var / double(n));
    // draws are exactly Gaussian, so Var(s^2) = 2 var^2 / n
    const double se_var = emp_var * std::sqrt(2.0 / double(n - 1));
    CHECK(std::abs(emp_mean - a.mean[0]) < 4.0 * se_mean);
    CHECK(std::abs(emp_var - a.var[0]) < 4.0 * se_var);
  }
}
