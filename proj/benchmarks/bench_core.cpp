// Microbenchmarks for the hot paths: forward/backward passes, the full ELBO
// step and conditional generation.

#include <benchmark/benchmark.h>

#include "sgal/loss.hpp"
#include "sgal/model.hpp"

using namespace sgal;

namespace {

SgalModel bench_model(Rng& rng) {
    ModelConfig cfg;   // production-sized: 512 hidden units
    return make_model(cfg, rng);
}

std::vector<ClassEntry> bench_classes(std::size_t n, std::size_t k, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<ClassEntry> out;
    for (std::size_t i = 0; i < n; ++i) {
        Vec a(k);
        for (auto& v : a) v = gauss(rng);
        out.push_back({int(i) + 1, std::move(a)});
    }
    return out;
}

void bm_encoder_forward(benchmark::State& state) {
    Rng rng(1);
    const auto model = bench_model(rng);
    const Vec x(model.feature_dim, 0.5);
    for (auto _ : state) {
        auto enc = encode(model, x, ForwardMode::EvalDeterministic, rng);
        benchmark::DoNotOptimize(enc.mean.data());
    }
}
BENCHMARK(bm_encoder_forward);

void bm_elbo_step(benchmark::State& state) {
    Rng rng(2);
    const auto model = bench_model(rng);
    const auto classes = bench_classes(12, model.attribute_dim, rng);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::pair<Vec, Vec>> batch;
    for (int i = 0; i < 64; ++i) {
        Vec x(model.feature_dim);
        for (auto& v : x) v = gauss(rng);
        batch.emplace_back(std::move(x), classes[i % classes.size()].attribute);
    }
    ElboOptions opts;
    opts.margin = default_margin(model.latent_dim);
    for (auto _ : state) {
        Rng noise(3);
        auto res = elbo_loss(model, batch, classes, opts, noise);
        benchmark::DoNotOptimize(res.loss.total);
    }
}
BENCHMARK(bm_elbo_step);

void bm_generate_dropout(benchmark::State& state) {
    Rng rng(4);
    const auto model = bench_model(rng);
    const Vec a(model.attribute_dim, 0.3);
    for (auto _ : state) {
        auto xs = generate_unseen_dropout(model, a, 16, 5, rng);
        benchmark::DoNotOptimize(xs.data());
    }
}
BENCHMARK(bm_generate_dropout);

} // namespace

BENCHMARK_MAIN();
