// Tuned OpenMP kernels against the serial reference loops, plus one training
// step of the desk-scale model. Sizes follow the model's hot shapes:
// B*T*N token rows by C channels.
//
//   ./kernels_bench --benchmark_filter=Gemm

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "hgfrenet/harness.hpp"
#include "hgfrenet/kernels.hpp"

using namespace hgf;
using kernels::Trans;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool Tuned>
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1)),
             k = static_cast<std::size_t>(state.range(2));
  const auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    if constexpr (Tuned)
      kernels::gemm(Trans::No, Trans::No, m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
    else
      kernels::reference::gemm(Trans::No, Trans::No, m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * m * n * k, benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}

template <bool Tuned>
void BM_GemmTransB(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1)),
             k = static_cast<std::size_t>(state.range(2));
  const auto a = random_vec(m * k, 3), b = random_vec(n * k, 4);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    if constexpr (Tuned)
      kernels::gemm(Trans::No, Trans::Yes, m, n, k, a.data(), k, b.data(), k, c.data(), n, false);
    else
      kernels::reference::gemm(Trans::No, Trans::Yes, m, n, k, a.data(), k, b.data(), k, c.data(), n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * m * n * k, benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}

template <bool Tuned>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1));
  const auto x = random_vec(rows * n, 5);
  std::vector<double> y(rows * n);
  for (auto _ : state) {
    if constexpr (Tuned)
      kernels::softmax_rows(rows, n, x.data(), y.data());
    else
      kernels::reference::softmax_rows(rows, n, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Tuned>
void BM_LayerNorm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1));
  const auto x = random_vec(rows * n, 6);
  std::vector<double> y(rows * n), rstd(rows);
  for (auto _ : state) {
    if constexpr (Tuned)
      kernels::layer_norm_rows(rows, n, x.data(), y.data(), rstd.data(), 1e-5);
    else
      kernels::reference::layer_norm_rows(rows, n, x.data(), y.data(), rstd.data(), 1e-5);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Tuned>
void BM_Gelu(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_vec(n, 7);
  std::vector<double> y(n);
  for (auto _ : state) {
    if constexpr (Tuned)
      kernels::gelu(n, x.data(), y.data());
    else
      kernels::reference::gelu(n, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

// One forward + backward + AdamW step of the default main model on a batch of 4.
void BM_TrainStep(benchmark::State& state) {
  const auto graph = skeleton::h36m_skeleton();
  net::ModelConfig cfg;
  cfg.dropout = 0.0;
  net::Model model(cfg, graph, 1);
  std::mt19937_64 rng(2);
  const Tensor x = [] {
    const auto v = random_vec(4 * 27 * 17 * 5, 8);
    return Tensor(Shape{4, 27, 17, 5}, v);
  }();
  const Tensor y(Shape{4, 27, 17, 3}, random_vec(4 * 27 * 17 * 3, 9));
  const auto params = model.parameters().trainable();
  train::AdamWState opt;
  train::AdamWConfig ac;
  for (auto _ : state) {
    model.parameters().zero_grad();
    const auto loss = losses::total_loss(model.forward(Var(x), {true, &rng}), y, cfg.loss_weights());
    backward(loss.total);
    train::adamw_step(params, opt, ac);
  }
}

// (m, n, k): token rows x channels; per-frame joint attention.
#define GEMM_SIZES Args({1836, 64, 64})->Args({1836, 128, 64})->Args({1836, 64, 128})->Args({17, 17, 8})
BENCHMARK(BM_Gemm<true>)->GEMM_SIZES;
BENCHMARK(BM_Gemm<false>)->GEMM_SIZES;
BENCHMARK(BM_GemmTransB<true>)->Args({27, 27, 8})->Args({1836, 64, 64});
BENCHMARK(BM_GemmTransB<false>)->Args({27, 27, 8})->Args({1836, 64, 64});
BENCHMARK(BM_Softmax<true>)->Args({4 * 27 * 17 * 8, 17})->Args({4 * 17 * 27 * 8, 27});
BENCHMARK(BM_Softmax<false>)->Args({4 * 27 * 17 * 8, 17})->Args({4 * 17 * 27 * 8, 27});
BENCHMARK(BM_LayerNorm<true>)->Args({1836, 64});
BENCHMARK(BM_LayerNorm<false>)->Args({1836, 64});
BENCHMARK(BM_Gelu<true>)->Arg(1836 * 128);
BENCHMARK(BM_Gelu<false>)->Arg(1836 * 128);
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
