// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidprobe/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "vidprobe/error.hpp"
#include "vidprobe/random.hpp"

namespace vidprobe {

std::vector<SceneRecord> load_split(const Manifest& manifest, const std::filesystem::path& root,
                                    const std::string& backbone) {
    if (manifest.entries.empty()) {
        throw Error(ErrorCode::kEmptySplit, "manifest '" + manifest.dataset_id + "' split '" + manifest.split +
                                                "' has no entries");
    }
    for (const auto& e : manifest.entries) {
        if (!e.clips.contains(backbone)) {
            throw Error(ErrorCode::kMissingBackbone,
                        "entry '" + e.video_id + "' has no features for backbone '" + backbone + "'");
        }
    }
    manifest.validate(&root);
    std::vector<SceneRecord> out;
    out.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        SceneRecord r;
        r.video_id = e.video_id;
        r.annotation = read_annotation(root / e.annotation_path);
        r.clip = read_feature_clip(root / e.clips.at(backbone));
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw Error(ErrorCode::kConfig, "data fraction must be in (0, 1]");
    }
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (n == 0) return idx;
    Rng rng(seed);
    rng.shuffle(idx);
    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction)));
    idx.resize(std::min(keep, n));
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<float> gather_features(const FeatureClip& clip, std::span<const int> frames) {
    std::vector<float> out;
    out.reserve(frames.size() * clip.frame_size());
    for (int t : frames) {
        const auto f = feature_for_frame(clip, t);
        out.insert(out.end(), f.begin(), f.end());
    }
    return out;
}

}  // namespace vidprobe
