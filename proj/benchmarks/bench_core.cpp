#include <benchmark/benchmark.h>

#include <random>

#include "fdrnn/gradients.hpp"
#include "fdrnn/optim.hpp"

namespace {

using namespace fdrnn;

template <class S>
RnnParams<S> bench_params(int kappa, int gamma, int omega, double scale) {
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> u(-scale, scale);
  RnnParams<S> p = RnnParams<S>::zeros(kappa, gamma, omega);
  auto fill = [&](auto& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = S(u(rng));
  };
  fill(p.w_in);
  fill(p.w_rec);
  fill(p.w_out);
  return p;
}

template <class S>
SequenceBatch<S> bench_batch(int n, int t_len, int kappa) {
  std::mt19937_64 rng(999);
  std::bernoulli_distribution coin(0.1);
  std::vector<MatrixX<S>> steps(static_cast<size_t>(t_len));
  for (auto& m : steps) {
    m.resize(n, kappa);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < kappa; ++j) m(i, j) = coin(rng) ? S(1) : S(0);
  }
  return SequenceBatch<S>(std::move(steps));
}

void BM_forward_plain(benchmark::State& state) {
  const int gamma = int(state.range(0));
  auto p = bench_params<float>(88, gamma, 88, 0.1);
  auto batch = bench_batch<float>(32, 50, 88);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        forward_plain(p, TransferKind::Tanh, TransferKind::Sigmoid, batch));
  }
}
BENCHMARK(BM_forward_plain)->Arg(100)->Arg(200);

void BM_forward_fd(benchmark::State& state) {
  const int gamma = int(state.range(0));
  auto p = bench_params<float>(88, gamma, 88, 0.1);
  auto batch = bench_batch<float>(32, 50, 88);
  DropoutConfig cfg{KeepProb(0.9), KeepProb(0.8), KeepProb(0.9), true};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        forward_fd(p, cfg, TransferKind::Tanh, TransferKind::Sigmoid, batch));
  }
}
BENCHMARK(BM_forward_fd)->Arg(100)->Arg(200);

void BM_backward_fd(benchmark::State& state) {
  const int gamma = int(state.range(0));
  auto p = bench_params<float>(88, gamma, 88, 0.1);
  auto batch = bench_batch<float>(32, 50, 88);
  DropoutConfig cfg{KeepProb(0.9), KeepProb(0.8), KeepProb(0.9), true};
  for (auto _ : state) {
    benchmark::DoNotOptimize(backward_fd(p, cfg, TransferKind::Tanh,
                                         TransferKind::Sigmoid, batch,
                                         batch.steps));
  }
}
BENCHMARK(BM_backward_fd)->Arg(100)->Arg(200);

void BM_spectral_radius(benchmark::State& state) {
  const int gamma = int(state.range(0));
  std::mt19937_64 rng(7);
  InitSpec spec{1.1, std::nullopt, 0.01, -0.8};
  auto w = init_recurrent(spec, gamma, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(spectral_radius(w));
  }
}
BENCHMARK(BM_spectral_radius)->Arg(64)->Arg(200)->Arg(400);

}  // namespace

BENCHMARK_MAIN();
