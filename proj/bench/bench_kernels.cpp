// Serial reference kernels against the OpenMP versions the library uses.
#include "moda/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

namespace {

std::vector<double> random_vector(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = dist(rng);
    }
    return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_vector(n * n, 1);
    const auto b = random_vector(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        if constexpr (Parallel) {
            moda::kernels::gemm(false, false, n, n, n, a, b, c, false);
        } else {
            moda::kernels::gemm_serial(false, false, n, n, n, a, b, c, false);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

moda::kernels::ConvGeometry conv_geometry(std::size_t res, std::size_t channels) {
    moda::kernels::ConvGeometry g;
    g.batch = 1;
    g.in_channels = channels;
    g.out_channels = channels;
    g.height = res;
    g.width = res;
    g.kernel = 3;
    g.stride = 1;
    g.pad = 1;
    return g;
}

template <bool Parallel>
void BM_Conv(benchmark::State& state) {
    const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
    const auto in = random_vector(g.input_size(), 3);
    const auto w = random_vector(g.weight_size(), 4);
    const auto bias = random_vector(g.out_channels, 5);
    std::vector<double> out(g.output_size());
    for (auto _ : state) {
        if constexpr (Parallel) {
            moda::kernels::conv2d_forward(g, in, w, bias, out);
        } else {
            moda::kernels::conv2d_forward_serial(g, in, w, bias, out);
        }
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
    const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
    const auto in = random_vector(g.input_size(), 3);
    const auto w = random_vector(g.weight_size(), 4);
    const auto gout = random_vector(g.output_size(), 6);
    std::vector<double> gin(g.input_size()), gw(g.weight_size()), gb(g.out_channels);
    for (auto _ : state) {
        if constexpr (Parallel) {
            moda::kernels::conv2d_backward(g, in, w, gout, gin, gw, gb);
        } else {
            moda::kernels::conv2d_backward_serial(g, in, w, gout, gin, gw, gb);
        }
        benchmark::DoNotOptimize(gw.data());
    }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_Conv<false>)->Args({64, 16})->Args({32, 32});
BENCHMARK(BM_Conv<true>)->Args({64, 16})->Args({32, 32});
BENCHMARK(BM_ConvBackward<false>)->Args({64, 16});
BENCHMARK(BM_ConvBackward<true>)->Args({64, 16});

BENCHMARK_MAIN();
