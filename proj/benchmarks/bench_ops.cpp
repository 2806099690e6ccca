#include <benchmark/benchmark.h>

#include "sgma/ops.hpp"
#include "sgma/rng.hpp"

namespace {

using namespace sgma;

Var random_var(Shape shape, RngStream& rng, bool grad = false) {
    Tensor t(std::move(shape));
    for (double& v : t.storage()) v = rng.normal();
    return Var(std::move(t), grad);
}

void BM_Linear(benchmark::State& state) {
    const int64_t c = state.range(0);
    RngStream rng("bench", 1);
    const Var x = random_var({1, 64, 64, c}, rng);
    const Var w = random_var({c, c}, rng);
    const Var b = random_var({c}, rng);
    NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(ops::linear(x, w, b).value().data());
    state.SetItemsProcessed(state.iterations() * 64 * 64 * c * c);
}
BENCHMARK(BM_Linear)->Arg(32)->Arg(64)->Arg(128);

void BM_Conv3x3(benchmark::State& state) {
    const int64_t c = state.range(0);
    RngStream rng("bench", 2);
    const Var x = random_var({1, 32, 32, c}, rng);
    const Var w = random_var({3, 3, c, c}, rng);
    const Var b = random_var({c}, rng);
    NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, 1, 1).value().data());
    state.SetItemsProcessed(state.iterations() * 32 * 32 * 9 * c * c);
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(32)->Arg(64);

void BM_Depthwise(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    RngStream rng("bench", 3);
    const Var x = random_var({1, 64, 64, 32}, rng);
    const Var w = random_var({k, k, 32}, rng);
    const Var b = random_var({32}, rng);
    NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(ops::depthwise_conv2d(x, w, b).value().data());
}
BENCHMARK(BM_Depthwise)->Arg(3)->Arg(7)->Arg(11);

void BM_PixelAttention(benchmark::State& state) {
    const int64_t m = state.range(0);
    RngStream rng("bench", 4);
    const Var q = random_var({1, 1, 5, 32}, rng);
    const Var k = random_var({1, 32 * 32, m, 32}, rng);
    const Var v = random_var({1, 32 * 32, m, 32}, rng);
    NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(ops::pixel_attention(q, k, v, 8, true).output.value().data());
}
BENCHMARK(BM_PixelAttention)->Arg(1)->Arg(2)->Arg(3)->Arg(6);

void BM_PixelAttentionBackward(benchmark::State& state) {
    RngStream rng("bench", 5);
    const Var q = random_var({1, 1, 5, 32}, rng, true);
    const Var k = random_var({1, 32 * 32, 3, 32}, rng, true);
    const Var v = random_var({1, 32 * 32, 3, 32}, rng, true);
    for (auto _ : state) {
        const Var out = ops::pixel_attention(q, k, v, 8, true).output;
        backward(ops::mean(ops::reshape(out, {out.value().numel()}), 0));
    }
}
BENCHMARK(BM_PixelAttentionBackward);

}  // namespace
