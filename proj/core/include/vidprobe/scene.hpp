// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vidprobe/geometry.hpp"

namespace vidprobe {

/// Ground truth for one video. Maps are stored frame-major, row-major;
/// points are in first-frame camera coordinates.
struct SceneAnnotation {
    int height = 0;
    int width = 0;
    std::vector<int> frame_ids;  // raw frame index of each stored frame
    std::vector<double> points;  // T * H * W * 3
    std::vector<double> depth;   // T * H * W
    std::vector<double> confidence;
    std::vector<std::uint8_t> mask;
    std::vector<PoseSE3> poses;  // world-to-camera
    std::vector<Intrinsics> intrinsics;

    int frame_count() const { return static_cast<int>(frame_ids.size()); }
    std::size_t pixels() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }

    /// Position of raw frame `t` among the stored frames; throws kMissingFrame.
    int position_of(int raw_frame) const;

    std::span<const double> points_of(int pos) const { return {points.data() + pos * pixels() * 3, pixels() * 3}; }
    std::span<const double> depth_of(int pos) const { return {depth.data() + pos * pixels(), pixels()}; }
    std::span<const double> confidence_of(int pos) const { return {confidence.data() + pos * pixels(), pixels()}; }
    std::span<const std::uint8_t> mask_of(int pos) const { return {mask.data() + pos * pixels(), pixels()}; }

    /// Copy restricted to the given raw frame indices, in that order.
    SceneAnnotation select(std::span<const int> raw_frames) const;

    /// Sizes agree, masks imply positive depth, confidences are non-negative.
    void validate_layout() const;
};

/// Largest deviation, over valid pixels, between the stored point map and
/// g_t^-1 applied to the unprojected depth map.
double annotation_consistency_error(const SceneAnnotation& scene);

struct NormalizedScene {
    SceneAnnotation scene;
    double scale = 1.0;
};

/// Divides points, depths and pose translations by the mean valid point
/// norm. Throws kEmptyScene when no pixel is valid.
NormalizedScene normalize_scene(const SceneAnnotation& scene);

/// Mean norm of the valid points (the normalization scale).
double mean_valid_point_norm(const SceneAnnotation& scene);

}  // namespace vidprobe
