#include <benchmark/benchmark.h>

#include <numeric>

#include "srp/retrieval.hpp"
#include "srp/synthgen.hpp"

namespace {

srp::Database interactions(std::size_t n) {
    srp::SynthSpec spec;
    spec.n_interactions = n;
    spec.n_sessions = n / 2;
    return srp::generate_synthetic(spec).db;
}

void BM_RetrieveTopK(benchmark::State& state) {
    const srp::Database db = interactions(static_cast<std::size_t>(state.range(0)));
    const std::size_t t = db.table_index("Interaction");
    std::vector<std::size_t> all(db.tables()[t].size());
    std::iota(all.begin(), all.end(), 0);
    const srp::CodedTable coded = srp::code_table(db, t, srp::fit_discretization(db, t, all, 10));
    const srp::RetrievalIndex index(coded);
    const std::vector<std::int64_t> cut = *coded.timestamps;
    for (auto _ : state) {
        benchmark::DoNotOptimize(srp::retrieve_topk(coded, 3, index, std::span<const std::int64_t>(cut)));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RetrieveTopK)->Arg(1000)->Arg(5000)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_BuildIndex(benchmark::State& state) {
    const srp::Database db = interactions(static_cast<std::size_t>(state.range(0)));
    const std::size_t t = db.table_index("Interaction");
    std::vector<std::size_t> all(db.tables()[t].size());
    std::iota(all.begin(), all.end(), 0);
    const srp::CodedTable coded = srp::code_table(db, t, srp::fit_discretization(db, t, all, 10));
    for (auto _ : state) {
        benchmark::DoNotOptimize(srp::RetrievalIndex(coded));
    }
}
BENCHMARK(BM_BuildIndex)->Arg(5000)->Arg(20000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
