// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <filesystem>

#include "vidprobe/tensor_store.hpp"

namespace vidprobe {
namespace {

void BM_TensorRoundTrip(benchmark::State& state) {
    const auto n = static_cast<std::uint64_t>(state.range(0));
    Tensor t;
    t.shape = {n, 64};
    t.values.assign(n * 64, 0.5f);
    const auto path = std::filesystem::temp_directory_path() / "vidprobe_bench.vfpb";
    for (auto _ : state) {
        write_tensor(t, path);
        benchmark::DoNotOptimize(read_tensor(path));
    }
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(n * 64 * sizeof(float)));
    std::filesystem::remove(path);
}
BENCHMARK(BM_TensorRoundTrip)->Arg(256)->Arg(16384);

void BM_PlanChunks(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(plan_chunks(static_cast<int>(state.range(0)), 16, 2));
}
BENCHMARK(BM_PlanChunks)->Arg(48)->Arg(4096);

}  // namespace
}  // namespace vidprobe
