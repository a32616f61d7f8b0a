// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "vidprobe/geometry.hpp"
#include "vidprobe/metrics.hpp"
#include "vidprobe/random.hpp"

namespace vidprobe {
namespace {

void BM_Umeyama(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    std::vector<Vec3> src(n), dst(n);
    const Mat3 r = rotation_from_axis_angle(Vec3(1, 2, 3), 0.7);
    for (std::size_t i = 0; i < n; ++i) {
        src[i] = Vec3(rng.normal(), rng.normal(), rng.normal());
        dst[i] = 1.7 * r * src[i] + Vec3(0.1, -0.2, 0.3);
    }
    for (auto _ : state) benchmark::DoNotOptimize(umeyama_align(src, dst));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Umeyama)->Arg(50)->Arg(1024)->Arg(16384);

void BM_PoseAuc(benchmark::State& state) {
    Rng rng(2);
    std::vector<PoseError> errors(static_cast<std::size_t>(state.range(0)));
    for (auto& e : errors) {
        e.rotation_deg = rng.uniform(0.0, 40.0);
        e.translation_deg = rng.uniform(0.0, 40.0);
    }
    for (auto _ : state) benchmark::DoNotOptimize(pose_auc(errors, 30.0));
}
BENCHMARK(BM_PoseAuc)->Arg(6)->Arg(1000);

}  // namespace
}  // namespace vidprobe

BENCHMARK_MAIN();
