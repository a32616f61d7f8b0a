// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidprobe/scene.hpp"

namespace vidprobe {

// Tensor file layout (all integers little-endian):
//   "VFPB" | u32 version=1 | u8 dtype (0 = f32) | u8 ndim | ndim x u64 shape | payload
inline constexpr char kTensorMagic[4] = {'V', 'F', 'P', 'B'};
inline constexpr std::uint32_t kTensorVersion = 1;

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

struct Tensor {
    std::vector<std::uint64_t> shape;
    std::vector<float> values;

    Tensor() = default;
    Tensor(std::vector<std::uint64_t> s, std::vector<float> v) : shape(std::move(s)), values(std::move(v)) {}

    static Tensor zeros(std::vector<std::uint64_t> s);
    std::uint64_t numel() const;

    bool operator==(const Tensor&) const = default;
};

/// Serialized bytes of a tensor. Only kFloat32 is storable.
std::vector<std::uint8_t> encode_tensor(const Tensor& tensor, DType dtype = DType::kFloat32);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const Tensor& tensor, const std::filesystem::path& path, DType dtype = DType::kFloat32);
Tensor read_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Feature clips

struct ChunkLocation {
    int chunk = 0;
    int local = 0;

    bool operator==(const ChunkLocation&) const = default;
};

/// Raw frame index -> (chunk, local index).
using IndexMap = std::map<int, ChunkLocation>;

/// Chunked extraction layout for a video of `frame_count` frames: chunk
/// streams start at offsets 0..stride-1 and take every stride-th frame,
/// are cut into pieces of `chunk_length`, and each piece is prefixed with
/// raw frame 0. A chunk_length of 0 means no chunking (identity map).
struct ChunkPlan {
    std::vector<std::vector<int>> chunks;  // raw frame of each local slot
    IndexMap index_map;
};

ChunkPlan plan_chunks(int frame_count, int chunk_length, int stride);

struct ExtractionMeta {
    std::optional<int> layer;
    std::optional<int> timestep;
    int chunk_length = 0;
    int stride = 1;

    bool operator==(const ExtractionMeta&) const = default;
};

struct FeatureClip {
    std::string backbone_id;
    int channels = 0;
    int grid_h = 0;
    int grid_w = 0;
    std::vector<Tensor> chunks;  // each [locals, C, H_f, W_f]
    IndexMap index_map;
    ExtractionMeta meta;

    std::size_t frame_size() const {
        return static_cast<std::size_t>(channels) * static_cast<std::size_t>(grid_h) * static_cast<std::size_t>(grid_w);
    }

    /// Throws kInvalidClip when pi is not defined on 0..T-1, points at a
    /// missing slot, or chunk shapes differ.
    void validate() const;
};

/// C x H_f x W_f features for raw frame t; throws kMissingFrame naming t.
std::span<const float> feature_for_frame(const FeatureClip& clip, int t);

/// Directory layout: `clip.meta` (record text) plus `chunk_NNNN.vfpb`.
void write_feature_clip(const FeatureClip& clip, const std::filesystem::path& dir);
FeatureClip read_feature_clip(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Annotations

/// Directory of tensors: points, depth, confidence, mask, poses [T,3,4],
/// intrinsics [T,4], frames [T].
void write_annotation(const SceneAnnotation& scene, const std::filesystem::path& dir);
SceneAnnotation read_annotation(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Manifests

struct ManifestEntry {
    std::string video_id;
    int frame_count = 0;
    std::string annotation_path;                 // relative to the data root
    std::map<std::string, std::string> clips;    // backbone -> relative clip dir

    bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
    std::string dataset_id;
    std::string split;  // train | test | ablation
    std::vector<ManifestEntry> entries;

    bool operator==(const Manifest&) const = default;

    /// No duplicate ids; optionally, every referenced path exists under root.
    void validate(const std::filesystem::path* root = nullptr) const;
};

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace vidprobe
