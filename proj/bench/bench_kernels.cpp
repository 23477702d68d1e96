#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "unlearn/data.hpp"
#include "unlearn/kernels.hpp"
#include "unlearn/model.hpp"

namespace {

using unlearn::kernels::Backend;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

void affine_forward(benchmark::State& state, Backend backend) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const std::size_t in = 64;
    const std::size_t out = 64;
    const auto x = random_values(batch * in, 1);
    const auto w = random_values(in * out, 2);
    const auto b = random_values(out, 3);
    std::vector<double> y(batch * out);
    for (auto _ : state) {
        unlearn::kernels::affine_forward(backend, x, w, b, y, batch, in, out);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
}

void per_sample_gradients(benchmark::State& state, Backend backend) {
    const unlearn::ModelConfig cfg{{8, 32, 32, 4}, 1.0, 0};
    const auto theta = unlearn::init_params(cfg);
    const auto data = unlearn::generate_blobs(0, static_cast<std::size_t>(state.range(0)) / 4, 4, 8,
                                              1.0);
    std::vector<std::size_t> rows(data.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    const auto x = data.gather_features(rows);
    const auto y = data.gather_labels(rows);
    for (auto _ : state) {
        double acc = 0.0;
        unlearn::for_each_sample_gradient(
            theta.span(), cfg, x, y,
            [&](std::size_t, const unlearn::GradientVector& g) { acc += g[0]; }, backend);
        benchmark::DoNotOptimize(acc);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * data.size()));
}

} // namespace

BENCHMARK_CAPTURE(affine_forward, serial, Backend::serial)->Arg(256)->Arg(4096);
BENCHMARK_CAPTURE(affine_forward, parallel, Backend::parallel)->Arg(256)->Arg(4096);
BENCHMARK_CAPTURE(per_sample_gradients, serial, Backend::serial)->Arg(512);
BENCHMARK_CAPTURE(per_sample_gradients, parallel, Backend::parallel)->Arg(512);

BENCHMARK_MAIN();
