#include <benchmark/benchmark.h>

#include "sgma/config.hpp"
#include "sgma/data.hpp"
#include "sgma/eval.hpp"
#include "sgma/model.hpp"
#include "sgma/train.hpp"

namespace {

using namespace sgma;

Config bench_config(Variant variant) {
    Config c = Config::desk();
    c.train.variant = variant;
    c.data.synthetic.train_samples = 8;
    c.data.synthetic.val_samples = 4;
    return c;
}

std::vector<const ModalityBundle*> first_batch(const Dataset& ds, size_t n) {
    std::vector<const ModalityBundle*> batch;
    for (size_t i = 0; i < n && i < ds.train.size(); ++i) batch.push_back(&ds.train[i]);
    return batch;
}

void BM_Infer(benchmark::State& state) {
    const auto variant = static_cast<Variant>(state.range(0));
    const Config cfg = bench_config(variant);
    const Dataset ds = load_configured_dataset(cfg);
    const Model model(cfg);
    const auto batch = first_batch(ds, 1);
    for (auto _ : state) benchmark::DoNotOptimize(model.infer(batch, cfg.model.modalities));
}
BENCHMARK(BM_Infer)
    ->Arg(static_cast<int>(Variant::A))
    ->Arg(static_cast<int>(Variant::B))
    ->Arg(static_cast<int>(Variant::C))
    ->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    const auto variant = static_cast<Variant>(state.range(0));
    const Config cfg = bench_config(variant);
    const Dataset ds = load_configured_dataset(cfg);
    Trainer trainer(cfg, 1000);
    const auto batch = first_batch(ds, static_cast<size_t>(cfg.train.batch_size));
    for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step(batch).loss.total);
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(Variant::A))
    ->Arg(static_cast<int>(Variant::B))
    ->Arg(static_cast<int>(Variant::C))
    ->Unit(benchmark::kMillisecond);

void BM_EvaluateAllSubsets(benchmark::State& state) {
    const Config cfg = bench_config(Variant::C);
    const Dataset ds = load_configured_dataset(cfg);
    const Model model(cfg);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            evaluate(model, ds.val, cfg.model.num_classes, cfg.data.ignore_index).miou.average);
    }
}
BENCHMARK(BM_EvaluateAllSubsets)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
