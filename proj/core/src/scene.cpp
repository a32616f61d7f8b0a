// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidprobe/scene.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vidprobe/error.hpp"

namespace vidprobe {

int SceneAnnotation::position_of(int raw_frame) const {
    const auto it = std::find(frame_ids.begin(), frame_ids.end(), raw_frame);
    if (it == frame_ids.end()) {
        throw Error(ErrorCode::kMissingFrame, "annotation has no frame " + std::to_string(raw_frame));
    }
    return static_cast<int>(it - frame_ids.begin());
}

SceneAnnotation SceneAnnotation::select(std::span<const int> raw_frames) const {
    SceneAnnotation out;
    out.height = height;
    out.width = width;
    const std::size_t px = pixels();
    for (int t : raw_frames) {
        const int pos = position_of(t);
        out.frame_ids.push_back(t);
        out.points.insert(out.points.end(), points.begin() + pos * px * 3, points.begin() + (pos + 1) * px * 3);
        out.depth.insert(out.depth.end(), depth.begin() + pos * px, depth.begin() + (pos + 1) * px);
        out.confidence.insert(out.confidence.end(), confidence.begin() + pos * px,
                              confidence.begin() + (pos + 1) * px);
        out.mask.insert(out.mask.end(), mask.begin() + pos * px, mask.begin() + (pos + 1) * px);
        out.poses.push_back(poses[pos]);
        out.intrinsics.push_back(intrinsics[pos]);
    }
    return out;
}

void SceneAnnotation::validate_layout() const {
    const std::size_t t = frame_ids.size();
    const std::size_t px = pixels();
    if (height <= 0 || width <= 0) throw Error(ErrorCode::kShape, "annotation has an empty pixel grid");
    if (points.size() != t * px * 3 || depth.size() != t * px || confidence.size() != t * px ||
        mask.size() != t * px || poses.size() != t || intrinsics.size() != t) {
        throw Error(ErrorCode::kShape, "annotation arrays disagree with " + std::to_string(t) + " frames of " +
                                           std::to_string(height) + "x" + std::to_string(width));
    }
    for (std::size_t i = 0; i < t * px; ++i) {
        if (mask[i] && !(depth[i] > 0.0)) {
            throw Error(ErrorCode::kInvariant, "valid pixel with non-positive depth at flat index " + std::to_string(i));
        }
        if (!(confidence[i] >= 0.0)) {
            throw Error(ErrorCode::kInvariant, "negative confidence at flat index " + std::to_string(i));
        }
    }
}

double annotation_consistency_error(const SceneAnnotation& scene) {
    double worst = 0.0;
    for (int f = 0; f < scene.frame_count(); ++f) {
        const auto expected = unproject_depth(scene.depth_of(f), scene.height, scene.width, scene.intrinsics[f],
                                              scene.poses[f]);
        const auto stored = scene.points_of(f);
        const auto mask = scene.mask_of(f);
        for (std::size_t i = 0; i < scene.pixels(); ++i) {
            if (!mask[i]) continue;
            for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(stored[3 * i + c] - expected[3 * i + c]));
        }
    }
    return worst;
}

double mean_valid_point_norm(const SceneAnnotation& scene) {
    double sum = 0.0;
    std::size_t count = 0;
    const std::size_t total = scene.mask.size();
    for (std::size_t i = 0; i < total; ++i) {
        if (!scene.mask[i]) continue;
        const double* p = scene.points.data() + 3 * i;
        sum += std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
        ++count;
    }
    if (count == 0) throw Error(ErrorCode::kEmptyScene, "scene has no valid pixels");
    return sum / static_cast<double>(count);
}

NormalizedScene normalize_scene(const SceneAnnotation& scene) {
    NormalizedScene out{scene, mean_valid_point_norm(scene)};
    if (!(out.scale > 0.0) || !std::isfinite(out.scale)) {
        throw Error(ErrorCode::kEmptyScene, "scene has zero mean point norm");
    }
    const double inv = 1.0 / out.scale;
    for (double& v : out.scene.points) v *= inv;
    for (double& v : out.scene.depth) v *= inv;
    for (auto& g : out.scene.poses) g.translation *= inv;
    return out;
}

}  // namespace vidprobe
