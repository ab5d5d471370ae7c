#include <benchmark/benchmark.h>

#include "srp/synthesis.hpp"
#include "srp/synthgen.hpp"

namespace {

void BM_SynthesizeFeatures(benchmark::State& state) {
    srp::SynthSpec spec;
    spec.n_interactions = static_cast<std::size_t>(state.range(0));
    spec.n_sessions = spec.n_interactions;
    const srp::Database db = srp::generate_synthetic(spec).db;
    const auto paths = srp::find_synthesis_paths(db.schema(), 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(srp::synthesize_features(db, paths, true));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SynthesizeFeatures)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
