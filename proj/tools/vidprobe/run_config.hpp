// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vidprobe/metrics.hpp"
#include "vidprobe/oracle.hpp"
#include "vidprobe/probe_model.hpp"
#include "vidprobe/trainer.hpp"

namespace vidprobe::cli {

/// Everything a command needs, merged from the config file and flags.
struct RunConfig {
    std::string data_root = "data";
    std::string backbone = "oracle";
    std::string out = "runs";
    int scenes = 10;
    double train_ratio = 0.9;
    std::string checkpoint;
    std::string manifest;       // overrides <data_root>/<split>.manifest
    std::string eval_split = "test";
    bool point_display_x10 = false;
    OracleConfig oracle;
    ProbeConfig probe;
    TrainConfig train;
    MetricsConfig metrics;

    RunConfig();

    bool operator==(const RunConfig&) const = default;
};

std::vector<KvRecord> to_records(const RunConfig& config);
RunConfig from_records(const std::vector<KvRecord>& records);

std::string format_run_config(const RunConfig& config);
void write_run_config(const RunConfig& config, const std::filesystem::path& path);
RunConfig read_run_config(const std::filesystem::path& path);

/// FNV-1a over the formatted config with the output directory cleared.
std::string run_hash(const RunConfig& config);

/// `<out>/<command>-<hash>`
std::filesystem::path run_directory(const RunConfig& config, const std::string& command);

std::vector<double> parse_thetas(const std::string& text);
std::string format_thetas(const std::vector<double>& thetas);

}  // namespace vidprobe::cli
