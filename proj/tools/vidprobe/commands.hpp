// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace vidprobe::cli {

struct SynthResult {
    std::filesystem::path train_manifest;
    std::filesystem::path test_manifest;
    int train_scenes = 0;
    int test_scenes = 0;
};

/// Builds the oracle dataset under config.data_root.
SynthResult cmd_synth(const RunConfig& config, std::ostream& log);

struct TrainRun {
    std::filesystem::path run_dir;
    std::filesystem::path checkpoint;
    int train_scenes = 0;
};

/// Trains on <data_root>/train.manifest (or config.manifest).
TrainRun cmd_train(const RunConfig& config, std::ostream& log);

struct EvalRun {
    std::filesystem::path run_dir;
    MetricsReport report;
};

/// Evaluates config.checkpoint on the eval split; writes report.json, report.txt, report.csv.
EvalRun cmd_eval(const RunConfig& config, std::ostream& log);

struct SweepCell {
    std::string backbone;
    std::optional<int> layer;
    std::optional<int> timestep;
    std::optional<double> point_err;
};

struct SweepRun {
    std::filesystem::path run_dir;
    std::vector<SweepCell> cells;
    std::string grid_csv;
};

/// Trains and evaluates one probe per backbone key starting with
/// config.backbone, then emits a layer x timestep grid of point errors.
SweepRun cmd_sweep(const RunConfig& config, std::ostream& log);

/// Layer rows by timestep columns; empty cells where no features exist.
std::string sweep_grid_csv(const std::vector<SweepCell>& cells);

}  // namespace vidprobe::cli
