#include <benchmark/benchmark.h>

#include <random>

#include "sumix/mixers.hpp"
#include "sumix/rng.hpp"
#include "sumix/tensor.hpp"

using namespace sumix;

namespace {

Tensor random_batch(long n, long c, long h, long w, std::uint64_t seed) {
    Tensor t({n, c, h, w});
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (long i = 0; i < t.size(); ++i) t[i] = uni(rng);
    return t;
}

void bench_mix_batch(benchmark::State& state, MixMethod method) {
    const long side = state.range(0);
    const Tensor batch = random_batch(32, 3, side, side, 1);
    MixConfig cfg;
    cfg.method = method;
    cfg.alpha = 0.2;
    Rng rng = make_rng(2);
    for (auto _ : state) {
        MixResult out = mix_batch(cfg, batch, rng);
        benchmark::DoNotOptimize(out.mixed.data());
    }
    state.SetItemsProcessed(state.iterations() * 32);
}

}  // namespace

BENCHMARK_CAPTURE(bench_mix_batch, mixup, MixMethod::mixup)->Arg(32)->Arg(64);
BENCHMARK_CAPTURE(bench_mix_batch, cutmix, MixMethod::cutmix)->Arg(32)->Arg(64);
BENCHMARK_CAPTURE(bench_mix_batch, fmix, MixMethod::fmix)->Arg(32)->Arg(64);
BENCHMARK_CAPTURE(bench_mix_batch, saliencymix, MixMethod::saliencymix)->Arg(32)->Arg(64);
BENCHMARK_CAPTURE(bench_mix_batch, resizemix, MixMethod::resizemix)->Arg(32)->Arg(64);

static void bench_fmix_mask(benchmark::State& state) {
    const long side = state.range(0);
    Rng rng = make_rng(3);
    for (auto _ : state) {
        Tensor mask = fmix_mask(side, side, 0.4, 3.0, rng);
        benchmark::DoNotOptimize(mask.data());
    }
}
BENCHMARK(bench_fmix_mask)->Arg(32)->Arg(64)->Arg(128);

static void bench_saliency_map(benchmark::State& state) {
    const long side = state.range(0);
    const Tensor batch = random_batch(1, 3, side, side, 4);
    const Tensor image = image_at(batch, 0);
    for (auto _ : state) {
        Tensor sal = saliency_map(image);
        benchmark::DoNotOptimize(sal.data());
    }
}
BENCHMARK(bench_saliency_map)->Arg(32)->Arg(64)->Arg(128);

BENCHMARK_MAIN();
