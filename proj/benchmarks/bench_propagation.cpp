#include <benchmark/benchmark.h>

#include <numeric>

#include "srp/model.hpp"
#include "srp/synthgen.hpp"

namespace {

// Per-sample inference cost of a module combination on the 5000-row benchmark.
void BM_Predict(benchmark::State& state, const char* toggles) {
    srp::SynthSpec spec;
    static const srp::Database db = srp::generate_synthetic(spec).db;
    srp::SRPConfig config;
    config.toggles = srp::ModuleToggles::parse(toggles);
    const srp::PreparedData data = srp::prepare(db, config);
    srp::SrpModel model(data, config);
    const auto& rows = data.split.test;
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.predict(rows));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows.size()));
}
BENCHMARK_CAPTURE(BM_Predict, P, "p")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Predict, S_P, "s,p")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Predict, R_P, "r,p")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Predict, S_R_P, "s,r,p")->Unit(benchmark::kMillisecond);

void BM_SampleBlock(benchmark::State& state) {
    srp::SynthSpec spec;
    const srp::Database db = srp::generate_synthetic(spec).db;
    const srp::HeteroGraph g = srp::build_graph(db, srp::GraphMode::r2ne);
    const std::size_t target = *g.node_type_index("Interaction");
    std::vector<std::size_t> seeds(256);
    std::iota(seeds.begin(), seeds.end(), 4000);
    const auto ts = *db.row_timestamps(db.table_index("Interaction"));
    std::vector<std::int64_t> cut;
    for (std::size_t s : seeds) {
        cut.push_back(ts[s]);
    }
    std::uint64_t seed = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(srp::sample_neighbors(g, target, seeds, std::span<const std::int64_t>(cut),
                                                       srp::SamplerConfig{2, {5}, ++seed, true}));
    }
}
BENCHMARK(BM_SampleBlock)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
