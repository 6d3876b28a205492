// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "stlite/policy.hpp"
#include "stlite/scoring.hpp"
#include "stlite/simulator.hpp"

namespace {

stlite::StreamScenario scenario_with_frames(std::uint32_t frames, std::uint32_t grid) {
    auto s = stlite::StreamScenario::default_scenario();
    s.num_frames = frames;
    s.grid_rows = s.grid_cols = grid;
    s.components = {{0, frames, {1, 1, grid / 2, grid / 2}, s.components[0].vector}};
    s.change_schedule.clear();
    return s;
}

void BM_AttentionPrior(benchmark::State& state) {
    const auto cache = stlite::generate_stream(scenario_with_frames(static_cast<std::uint32_t>(state.range(0)), 16)).cache;
    for (auto _ : state) benchmark::DoNotOptimize(stlite::layer_attention_prior(cache, 32));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cache.seq_len()));
}
BENCHMARK(BM_AttentionPrior)->Arg(4)->Arg(16)->Arg(64);

void BM_Saliency(benchmark::State& state) {
    const auto grid = static_cast<std::uint32_t>(state.range(0));
    const auto cache = stlite::generate_stream(scenario_with_frames(1, grid)).cache;
    const auto keys = cache.mean_head_keys();
    std::vector<std::size_t> idx(static_cast<std::size_t>(grid) * grid);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const auto cells = keys.select_rows(idx);
    for (auto _ : state) benchmark::DoNotOptimize(stlite::local_uniformity_and_saliency(cells, grid, grid));
}
BENCHMARK(BM_Saliency)->Arg(16)->Arg(32)->Arg(64);

void BM_TrajectoryRedundancy(benchmark::State& state) {
    const auto cache = stlite::generate_stream(scenario_with_frames(static_cast<std::uint32_t>(state.range(0)), 16)).cache;
    const auto keys = cache.mean_head_keys();
    const std::size_t cells = 256;
    const std::size_t hist = cells * static_cast<std::size_t>(state.range(0) - 1);
    std::vector<std::size_t> h(hist), c(cells);
    for (std::size_t i = 0; i < hist; ++i) h[i] = i;
    for (std::size_t i = 0; i < cells; ++i) c[i] = hist + i;
    const auto historical = keys.select_rows(h);
    const auto current = keys.select_rows(c);
    for (auto _ : state) benchmark::DoNotOptimize(stlite::trajectory_redundancy(historical, current));
}
BENCHMARK(BM_TrajectoryRedundancy)->Arg(4)->Arg(16);

void BM_StLiteCompress(benchmark::State& state) {
    const auto cache = stlite::generate_stream(scenario_with_frames(static_cast<std::uint32_t>(state.range(0)), 16)).cache;
    stlite::BudgetConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(stlite::st_lite_compress(cache, cfg));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cache.seq_len()));
}
BENCHMARK(BM_StLiteCompress)->Arg(4)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
