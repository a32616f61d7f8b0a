// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "vidprobe/probe_model.hpp"

namespace vidprobe {

struct CheckpointInfo {
    std::string backbone;
    int step = 0;
    std::uint64_t seed = 0;
    ProbeConfig config;
};

/// FNV-1a of the probe config record text.
std::string config_hash(const ProbeConfig& config);

/// `probe_<backbone>_<step>`
std::string checkpoint_name(const std::string& backbone, int step);

/// One tensor file per parameter plus `checkpoint.meta` listing name,
/// shape, seed and config hash.
void save_checkpoint(const ParameterSet<float>& params, const CheckpointInfo& info, const std::filesystem::path& dir);

struct LoadedCheckpoint {
    ParameterSet<float> params;
    CheckpointInfo info;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace vidprobe
