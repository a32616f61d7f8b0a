// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidprobe/dataset.hpp"
#include "vidprobe/geometry.hpp"
#include "vidprobe/kv_text.hpp"
#include "vidprobe/scene.hpp"
#include "vidprobe/tensor_store.hpp"

namespace vidprobe {

enum class SceneKind { kOrbit, kFlythrough };

std::string to_string(SceneKind kind);
/// "orbit" or "flythrough"; throws kConfig otherwise.
SceneKind parse_scene_kind(std::string_view text);

/// Synthetic scenes plus features whose 3D content is controlled by the
/// awareness dial (noise, decorrelation, dropout).
struct OracleConfig {
    SceneKind kind = SceneKind::kOrbit;
    int primitives = 4;
    int frames = 48;
    int height = 16;
    int width = 16;
    double fov_deg = 60.0;
    int grid_h = 8;
    int grid_w = 8;
    int channels = 64;
    double noise = 0.0;          // sigma
    double decorrelation = 0.0;  // rho
    double dropout = 0.0;        // fraction of channels zeroed per clip
    std::uint64_t seed = 0;
    int frequencies = 16;
    double length_scale = 0.35;
    int appearance_dim = 8;
    int max_retries = 16;

    void validate() const;
    Intrinsics intrinsics() const;
    void to_record(KvRecord& record, const std::string& prefix = "oracle.") const;
    static OracleConfig from_record(const KvRecord& record, const std::string& prefix = "oracle.");

    bool operator==(const OracleConfig&) const = default;
};

enum class PrimitiveKind { kSphere, kBox, kDisk };

struct Primitive {
    PrimitiveKind kind = PrimitiveKind::kSphere;
    Vec3 center = Vec3::Zero();
    Mat3 rotation = Mat3::Identity();  // box axes / disk frame (normal = third column)
    Vec3 size = Vec3::Ones();          // sphere: radius in x; box: half extents; disk: radius in x
};

struct RayHit {
    double t = 0.0;
    int primitive = -1;
    Vec3 point = Vec3::Zero();
};

/// Closest hit with t > 0 along origin + t * direction.
std::optional<RayHit> cast_ray(std::span<const Primitive> primitives, const Vec3& origin, const Vec3& direction);

bool point_inside(std::span<const Primitive> primitives, const Vec3& x);

/// Z-depth image of a world-to-camera pose; 0 where nothing is hit.
/// `primitive_ids` (optional) receives the hit primitive or -1.
std::vector<double> render_depth(std::span<const Primitive> primitives, const PoseSE3& world_to_camera,
                                 const Intrinsics& k, int height, int width, std::vector<int>* primitive_ids = nullptr);

/// World-to-camera pose of a camera at `position` looking at `target`, image y pointing along world +y.
PoseSE3 look_at(const Vec3& position, const Vec3& target);

struct OracleScene {
    std::vector<Primitive> primitives;  // world coordinates
    std::vector<PoseSE3> cameras;       // world-to-camera per frame
    SceneAnnotation annotation;         // first-frame coordinates
};

/// Scene `index` of the dataset described by `config`.
OracleScene generate_scene(const OracleConfig& config, int index);

/// Features of every frame; a single identity-mapped chunk.
FeatureClip synthesize_features(const OracleScene& scene, const OracleConfig& config, int index,
                                const std::string& backbone = "oracle");

/// Scenes [first, first + count) held in memory.
std::vector<SceneRecord> build_oracle_scenes(const OracleConfig& config, int first, int count,
                                             const std::string& backbone = "oracle");

/// Train count of a 9:1 style split: round(n * train_ratio).
int train_split_count(int n_scenes, double train_ratio);

struct OracleDataset {
    Manifest train;
    Manifest test;
    std::filesystem::path train_manifest;
    std::filesystem::path test_manifest;
};

/// Writes annotations, feature clips and train/test manifests under root.
OracleDataset build_oracle_dataset(int n_scenes, double train_ratio, const OracleConfig& config,
                                   const std::filesystem::path& root, const std::string& backbone = "oracle");

}  // namespace vidprobe
