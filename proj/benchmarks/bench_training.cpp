#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "sumix/encoder.hpp"
#include "sumix/mixers.hpp"
#include "sumix/rng.hpp"
#include "sumix/sumix.hpp"
#include "sumix/training.hpp"

using namespace sumix;

namespace {

struct Fixture {
    Encoder model;
    UncertaintyHead head;
    Tensor batch;
    std::vector<int> labels;
    MixResult mix;

    static EncoderConfig make_config(long side) {
        EncoderConfig ec;
        ec.widths = {8, 16, 32};
        ec.num_classes = 10;
        ec.in_h = side;
        ec.in_w = side;
        return ec;
    }

    explicit Fixture(long side, long n)
        : model([&] {
              Rng r = make_rng(1);
              return Encoder(make_config(side), r);
          }()),
          head([&] {
              Rng r = make_rng(2);
              return UncertaintyHead(model.feature_dim(), 16, r);
          }()) {
        Rng r = make_rng(3);
        batch = Tensor({n, 3, side, side});
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        for (long i = 0; i < batch.size(); ++i) batch[i] = uni(r);
        labels.resize(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i % 10);
        MixConfig mc;
        mc.method = MixMethod::cutmix;
        mc.alpha = 0.2;
        mix = mix_batch(mc, batch, r);
    }
};

}  // namespace

static void bench_forward(benchmark::State& state) {
    Fixture f(32, state.range(0));
    for (auto _ : state) {
        ad::NoGradGuard ng;
        auto out = f.model.forward(f.batch, ad::BnMode::eval);
        benchmark::DoNotOptimize(out.logits.val().data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bench_forward)->Arg(16)->Arg(64);

static void bench_sumix_aux(benchmark::State& state) {
    Fixture f(32, state.range(0));
    for (auto _ : state) {
        SumixAux aux = compute_sumix_aux(f.model, f.mix, f.batch, f.labels, LossMode::full_su);
        benchmark::DoNotOptimize(aux.lam_tilde_a.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bench_sumix_aux)->Arg(16)->Arg(64);

static void bench_loss_backward(benchmark::State& state) {
    Fixture f(32, state.range(0));
    const SumixAux aux = compute_sumix_aux(f.model, f.mix, f.batch, f.labels, LossMode::full_su);
    for (auto _ : state) {
        for (auto& p : f.model.parameters()) p.value.zero_grad();
        for (auto& p : f.head.parameters()) p.value.zero_grad();
        LossOutput out = loss_given_aux(f.model, f.head, f.mix, aux, 0.5, LossMode::full_su);
        ad::backward(out.loss);
        benchmark::DoNotOptimize(out.report.total);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bench_loss_backward)->Arg(16)->Arg(64);

static void bench_full_step(benchmark::State& state) {
    Fixture f(32, state.range(0));
    std::vector<NamedParam*> params;
    for (auto& p : f.model.parameters()) params.push_back(&p);
    for (auto& p : f.head.parameters()) params.push_back(&p);
    SGD sgd(params, 0.9, 1e-4);
    for (auto _ : state) {
        sgd.zero_grad();
        LossOutput out = sumix_loss(f.model, f.head, f.mix, f.batch, f.labels, 0.5,
                                    LossMode::full_su);
        ad::backward(out.loss);
        sgd.step(1e-4);  // tiny rate keeps the weights in a sane region
        benchmark::DoNotOptimize(out.report.total);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bench_full_step)->Arg(16)->Arg(64);

BENCHMARK_MAIN();
