// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vidprobe/scene.hpp"
#include "vidprobe/tensor_store.hpp"

namespace vidprobe {

/// One video held in memory: ground truth plus the features of one backbone.
struct SceneRecord {
    std::string video_id;
    SceneAnnotation annotation;
    FeatureClip clip;
};

/// Loads every entry of `manifest` for `backbone`. Throws kEmptySplit for an
/// empty manifest and kMissingBackbone naming the first entry without it.
std::vector<SceneRecord> load_split(const Manifest& manifest, const std::filesystem::path& root,
                                    const std::string& backbone);

/// Deterministic subset of [0, n): shuffled by `seed`, first max(1, round(n * fraction))
/// indices, returned in ascending order.
std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed);

/// Concatenated C x H_f x W_f features of `frames`, frame-major.
std::vector<float> gather_features(const FeatureClip& clip, std::span<const int> frames);

}  // namespace vidprobe
