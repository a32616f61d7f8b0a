// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "vidprobe/probe_model.hpp"
#include "vidprobe/random.hpp"

namespace vidprobe {
namespace {

ProbeConfig bench_config(int width) {
    ProbeConfig c;
    c.width = width;
    c.blocks = 4;
    c.heads = 8;
    c.in_channels = 64;
    c.grid_h = 4;
    c.grid_w = 4;
    c.frames = 4;
    c.out_h = 8;
    c.out_w = 8;
    c.head_features = 32;
    return c;
}

std::vector<float> bench_features(const ProbeConfig& c) {
    Rng rng(3);
    std::vector<float> f(static_cast<std::size_t>(c.frames * c.in_channels * c.grid_h * c.grid_w));
    for (auto& v : f) v = static_cast<float>(rng.normal());
    return f;
}

void BM_ProbeForward(benchmark::State& state) {
    const ProbeConfig c = bench_config(static_cast<int>(state.range(0)));
    const auto params = init_parameters<float>(c, 1);
    const ProbeModel<float> model(c);
    const auto features = bench_features(c);
    for (auto _ : state) benchmark::DoNotOptimize(model.forward(features, params));
}
BENCHMARK(BM_ProbeForward)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_ProbeForwardBackward(benchmark::State& state) {
    const ProbeConfig c = bench_config(static_cast<int>(state.range(0)));
    const auto params = init_parameters<float>(c, 1);
    const ProbeModel<float> model(c);
    const auto features = bench_features(c);
    auto grad = zeros_like(params);
    for (auto _ : state) {
        ProbeTape<float> tape;
        const auto out = model.forward(features, params, &tape);
        ProbeOutputs<float> d_out = out;
        model.backward(tape, params, d_out, grad);
        benchmark::ClobberMemory();
    }
}
BENCHMARK(BM_ProbeForwardBackward)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace vidprobe
