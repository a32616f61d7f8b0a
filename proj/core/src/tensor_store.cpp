// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidprobe/tensor_store.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <string>

#include "vidprobe/error.hpp"
#include "vidprobe/kv_text.hpp"

namespace fs = std::filesystem;

namespace vidprobe {

namespace {

constexpr std::size_t kFixedHeader = 4 + 4 + 1 + 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

std::string shape_text(const std::vector<std::uint64_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor pack(std::vector<std::uint64_t> shape, const std::vector<double>& values) {
    Tensor t;
    t.shape = std::move(shape);
    t.values.assign(values.begin(), values.end());
    return t;
}

void expect_shape(const Tensor& t, const std::vector<std::uint64_t>& shape, const fs::path& path) {
    if (t.shape != shape) {
        throw Error(ErrorCode::kShape, path.string() + ": shape " + shape_text(t.shape) + ", expected " +
                                           shape_text(shape));
    }
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::uint64_t> s) {
    Tensor t;
    t.shape = std::move(s);
    t.values.assign(t.numel(), 0.0f);
    return t;
}

std::uint64_t Tensor::numel() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor, DType dtype) {
    if (dtype != DType::kFloat32) {
        throw Error(ErrorCode::kUnsupportedDtype,
                    "dtype code " + std::to_string(static_cast<int>(dtype)) + " cannot be stored");
    }
    if (tensor.shape.empty() || tensor.shape.size() > 255) {
        throw Error(ErrorCode::kShape, "tensor rank must be in [1, 255], got " + std::to_string(tensor.shape.size()));
    }
    if (tensor.numel() != tensor.values.size()) {
        throw Error(ErrorCode::kShape, "tensor shape " + shape_text(tensor.shape) + " does not match " +
                                           std::to_string(tensor.values.size()) + " values");
    }
    std::vector<std::uint8_t> out;
    out.reserve(kFixedHeader + 8 * tensor.shape.size() + 4 * tensor.values.size());
    out.insert(out.end(), kTensorMagic, kTensorMagic + 4);
    put_u32(out, kTensorVersion);
    out.push_back(static_cast<std::uint8_t>(dtype));
    out.push_back(static_cast<std::uint8_t>(tensor.shape.size()));
    for (auto d : tensor.shape) put_u64(out, d);
    for (float v : tensor.values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(out, bits);
    }
    return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) {
        throw Error(ErrorCode::kTruncated, "tensor truncated at byte " + std::to_string(bytes.size()) +
                                               " inside magic (need 4)");
    }
    if (std::memcmp(bytes.data(), kTensorMagic, 4) != 0) throw Error(ErrorCode::kBadMagic, "bad tensor magic");
    if (bytes.size() < kFixedHeader) {
        throw Error(ErrorCode::kTruncated, "tensor truncated at byte " + std::to_string(bytes.size()) +
                                               " inside header (need " + std::to_string(kFixedHeader) + ")");
    }
    const std::uint32_t version = get_u32(bytes.data() + 4);
    if (version != kTensorVersion) {
        throw Error(ErrorCode::kVersionMismatch, "tensor version " + std::to_string(version) + ", expected " +
                                                     std::to_string(kTensorVersion));
    }
    const std::uint8_t dtype = bytes[8];
    if (dtype != static_cast<std::uint8_t>(DType::kFloat32)) {
        throw Error(ErrorCode::kUnsupportedDtype, "unsupported dtype code " + std::to_string(dtype));
    }
    const std::size_t ndim = bytes[9];
    const std::size_t header = kFixedHeader + 8 * ndim;
    if (bytes.size() < header) {
        throw Error(ErrorCode::kTruncated, "tensor truncated at byte " + std::to_string(bytes.size()) +
                                               " inside shape (need " + std::to_string(header) + ")");
    }
    Tensor t;
    t.shape.resize(ndim);
    for (std::size_t i = 0; i < ndim; ++i) t.shape[i] = get_u64(bytes.data() + kFixedHeader + 8 * i);
    const std::uint64_t n = t.numel();
    const std::uint64_t need = header + 4 * n;
    if (bytes.size() < need) {
        throw Error(ErrorCode::kTruncated, "tensor truncated at byte " + std::to_string(bytes.size()) +
                                               " inside payload (need " + std::to_string(need) + ")");
    }
    if (bytes.size() > need) {
        throw Error(ErrorCode::kShape, "tensor has " + std::to_string(bytes.size() - need) + " trailing bytes");
    }
    t.values.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::uint32_t bits = get_u32(bytes.data() + header + 4 * i);
        std::memcpy(&t.values[i], &bits, 4);
    }
    return t;
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

void write_tensor(const Tensor& tensor, const fs::path& path, DType dtype) {
    write_file_bytes(path, encode_tensor(tensor, dtype));
}

Tensor read_tensor(const fs::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_tensor(bytes);
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

ChunkPlan plan_chunks(int frame_count, int chunk_length, int stride) {
    if (frame_count < 1) throw Error(ErrorCode::kShape, "clip needs at least one frame");
    ChunkPlan plan;
    if (chunk_length == 0) {
        plan.chunks.emplace_back();
        for (int t = 0; t < frame_count; ++t) {
            plan.chunks[0].push_back(t);
            plan.index_map[t] = {0, t};
        }
        return plan;
    }
    if (chunk_length < 1 || stride < 1) {
        throw Error(ErrorCode::kConfig, "chunk length and stride must be positive");
    }
    for (int offset = 0; offset < stride && offset < frame_count; ++offset) {
        std::vector<int> stream;
        for (int t = offset; t < frame_count; t += stride) stream.push_back(t);
        for (std::size_t start = 0; start < stream.size(); start += chunk_length) {
            const int id = static_cast<int>(plan.chunks.size());
            std::vector<int> chunk{0};
            for (std::size_t k = start; k < stream.size() && k < start + chunk_length; ++k) {
                chunk.push_back(stream[k]);
                plan.index_map[stream[k]] = {id, static_cast<int>(chunk.size()) - 1};
            }
            plan.chunks.push_back(std::move(chunk));
        }
    }
    plan.index_map[0] = {0, 0};
    return plan;
}

void FeatureClip::validate() const {
    if (channels <= 0 || grid_h <= 0 || grid_w <= 0) {
        throw Error(ErrorCode::kInvalidClip, "clip '" + backbone_id + "' has a non-positive feature shape");
    }
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        const auto& s = chunks[c].shape;
        if (s.size() != 4 || s[1] != static_cast<std::uint64_t>(channels) ||
            s[2] != static_cast<std::uint64_t>(grid_h) || s[3] != static_cast<std::uint64_t>(grid_w) ||
            chunks[c].values.size() != chunks[c].numel()) {
            throw Error(ErrorCode::kInvalidClip, "chunk " + std::to_string(c) + " has shape " + shape_text(s) +
                                                     ", expected [n," + std::to_string(channels) + "," +
                                                     std::to_string(grid_h) + "," + std::to_string(grid_w) + "]");
        }
    }
    int expected = 0;
    for (const auto& [t, loc] : index_map) {
        if (t != expected) {
            throw Error(ErrorCode::kInvalidClip, "clip '" + backbone_id + "' has no entry for frame " +
                                                     std::to_string(expected));
        }
        ++expected;
        if (loc.chunk < 0 || loc.chunk >= static_cast<int>(chunks.size()) || loc.local < 0 ||
            static_cast<std::uint64_t>(loc.local) >= chunks[loc.chunk].shape[0]) {
            throw Error(ErrorCode::kInvalidClip, "frame " + std::to_string(t) + " maps to missing slot (" +
                                                     std::to_string(loc.chunk) + ", " + std::to_string(loc.local) +
                                                     ")");
        }
    }
}

std::span<const float> feature_for_frame(const FeatureClip& clip, int t) {
    const auto it = clip.index_map.find(t);
    if (it == clip.index_map.end()) {
        throw Error(ErrorCode::kMissingFrame, "clip '" + clip.backbone_id + "' has no features for frame " +
                                                  std::to_string(t));
    }
    const auto [chunk, local] = it->second;
    const std::size_t size = clip.frame_size();
    return {clip.chunks.at(chunk).values.data() + static_cast<std::size_t>(local) * size, size};
}

void write_feature_clip(const FeatureClip& clip, const fs::path& dir) {
    clip.validate();
    fs::create_directories(dir);
    std::vector<KvRecord> records;
    KvRecord head;
    head.kind = "clip";
    head.set("backbone", clip.backbone_id)
        .set("channels", clip.channels)
        .set("grid_h", clip.grid_h)
        .set("grid_w", clip.grid_w)
        .set("chunk_length", clip.meta.chunk_length)
        .set("stride", clip.meta.stride);
    if (clip.meta.layer) head.set("layer", *clip.meta.layer);
    if (clip.meta.timestep) head.set("timestep", *clip.meta.timestep);
    records.push_back(head);
    for (std::size_t c = 0; c < clip.chunks.size(); ++c) {
        char name[32];
        std::snprintf(name, sizeof(name), "chunk_%04zu.vfpb", c);
        write_tensor(clip.chunks[c], dir / name);
        KvRecord r;
        r.kind = "chunk";
        r.set("id", static_cast<int>(c)).set("file", std::string(name)).set("locals", clip.chunks[c].shape[0]);
        records.push_back(r);
    }
    for (const auto& [t, loc] : clip.index_map) {
        KvRecord r;
        r.kind = "frame";
        r.set("t", t).set("chunk", loc.chunk).set("local", loc.local);
        records.push_back(r);
    }
    write_records(dir / "clip.meta", records, "vidprobe feature clip v1");
}

FeatureClip read_feature_clip(const fs::path& dir) {
    const auto records = read_records(dir / "clip.meta");
    if (records.empty() || records[0].kind != "clip") {
        throw Error(ErrorCode::kInvalidClip, dir.string() + ": clip.meta must start with a 'clip' record");
    }
    FeatureClip clip;
    const auto& head = records[0];
    clip.backbone_id = head.at("backbone");
    clip.channels = static_cast<int>(head.get_int("channels"));
    clip.grid_h = static_cast<int>(head.get_int("grid_h"));
    clip.grid_w = static_cast<int>(head.get_int("grid_w"));
    clip.meta.chunk_length = static_cast<int>(head.get_int("chunk_length"));
    clip.meta.stride = static_cast<int>(head.get_int("stride"));
    if (head.has("layer")) clip.meta.layer = static_cast<int>(head.get_int("layer"));
    if (head.has("timestep")) clip.meta.timestep = static_cast<int>(head.get_int("timestep"));
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.kind == "chunk") {
            const auto id = r.get_int("id");
            if (id != static_cast<long long>(clip.chunks.size())) {
                throw Error(ErrorCode::kInvalidClip, dir.string() + ": chunk ids must be consecutive");
            }
            clip.chunks.push_back(read_tensor(dir / r.at("file")));
        } else if (r.kind == "frame") {
            const int t = static_cast<int>(r.get_int("t"));
            if (!clip.index_map.emplace(t, ChunkLocation{static_cast<int>(r.get_int("chunk")),
                                                         static_cast<int>(r.get_int("local"))})
                     .second) {
                throw Error(ErrorCode::kInvalidClip, dir.string() + ": frame " + std::to_string(t) + " listed twice");
            }
        } else {
            throw Error(ErrorCode::kInvalidClip, dir.string() + ": unknown record '" + r.kind + "'");
        }
    }
    clip.validate();
    return clip;
}

// ---------------------------------------------------------------------------

void write_annotation(const SceneAnnotation& scene, const fs::path& dir) {
    scene.validate_layout();
    fs::create_directories(dir);
    const auto t = static_cast<std::uint64_t>(scene.frame_count());
    const auto h = static_cast<std::uint64_t>(scene.height);
    const auto w = static_cast<std::uint64_t>(scene.width);
    write_tensor(pack({t, h, w, 3}, scene.points), dir / "points.vfpb");
    write_tensor(pack({t, h, w}, scene.depth), dir / "depth.vfpb");
    write_tensor(pack({t, h, w}, scene.confidence), dir / "confidence.vfpb");
    Tensor mask({t, h, w}, std::vector<float>(scene.mask.begin(), scene.mask.end()));
    write_tensor(mask, dir / "mask.vfpb");
    Tensor poses = Tensor::zeros({t, 3, 4});
    Tensor intr = Tensor::zeros({t, 4});
    Tensor frames = Tensor::zeros({t});
    for (std::uint64_t f = 0; f < t; ++f) {
        const auto& g = scene.poses[f];
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) poses.values[f * 12 + r * 4 + c] = static_cast<float>(g.rotation(r, c));
            poses.values[f * 12 + r * 4 + 3] = static_cast<float>(g.translation(r));
        }
        const auto& k = scene.intrinsics[f];
        intr.values[f * 4 + 0] = static_cast<float>(k.fx);
        intr.values[f * 4 + 1] = static_cast<float>(k.fy);
        intr.values[f * 4 + 2] = static_cast<float>(k.cx);
        intr.values[f * 4 + 3] = static_cast<float>(k.cy);
        frames.values[f] = static_cast<float>(scene.frame_ids[f]);
    }
    write_tensor(poses, dir / "poses.vfpb");
    write_tensor(intr, dir / "intrinsics.vfpb");
    write_tensor(frames, dir / "frames.vfpb");
}

SceneAnnotation read_annotation(const fs::path& dir) {
    const Tensor frames = read_tensor(dir / "frames.vfpb");
    if (frames.shape.size() != 1) throw Error(ErrorCode::kShape, dir.string() + ": frames must be rank 1");
    const Tensor points = read_tensor(dir / "points.vfpb");
    if (points.shape.size() != 4) throw Error(ErrorCode::kShape, dir.string() + ": points must be rank 4");
    const std::uint64_t t = frames.shape[0];
    const std::uint64_t h = points.shape[1];
    const std::uint64_t w = points.shape[2];
    expect_shape(points, {t, h, w, 3}, dir / "points.vfpb");
    const Tensor depth = read_tensor(dir / "depth.vfpb");
    expect_shape(depth, {t, h, w}, dir / "depth.vfpb");
    const Tensor conf = read_tensor(dir / "confidence.vfpb");
    expect_shape(conf, {t, h, w}, dir / "confidence.vfpb");
    const Tensor mask = read_tensor(dir / "mask.vfpb");
    expect_shape(mask, {t, h, w}, dir / "mask.vfpb");
    const Tensor poses = read_tensor(dir / "poses.vfpb");
    expect_shape(poses, {t, 3, 4}, dir / "poses.vfpb");
    const Tensor intr = read_tensor(dir / "intrinsics.vfpb");
    expect_shape(intr, {t, 4}, dir / "intrinsics.vfpb");

    SceneAnnotation scene;
    scene.height = static_cast<int>(h);
    scene.width = static_cast<int>(w);
    scene.points.assign(points.values.begin(), points.values.end());
    scene.depth.assign(depth.values.begin(), depth.values.end());
    scene.confidence.assign(conf.values.begin(), conf.values.end());
    scene.mask.resize(mask.values.size());
    for (std::size_t i = 0; i < mask.values.size(); ++i) scene.mask[i] = mask.values[i] != 0.0f ? 1 : 0;
    for (std::uint64_t f = 0; f < t; ++f) {
        PoseSE3 g;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) g.rotation(r, c) = poses.values[f * 12 + r * 4 + c];
            g.translation(r) = poses.values[f * 12 + r * 4 + 3];
        }
        scene.poses.push_back(g);
        scene.intrinsics.push_back({intr.values[f * 4 + 0], intr.values[f * 4 + 1], intr.values[f * 4 + 2],
                                    intr.values[f * 4 + 3]});
        scene.frame_ids.push_back(static_cast<int>(frames.values[f]));
    }
    scene.validate_layout();
    return scene;
}

// ---------------------------------------------------------------------------

void Manifest::validate(const fs::path* root) const {
    std::set<std::string> seen;
    for (const auto& e : entries) {
        if (!seen.insert(e.video_id).second) {
            throw Error(ErrorCode::kInvalidManifest, "duplicate video id '" + e.video_id + "' in split " + split);
        }
        if (root == nullptr) continue;
        if (!fs::exists(*root / e.annotation_path)) {
            throw Error(ErrorCode::kInvalidManifest, "missing annotation '" + (*root / e.annotation_path).string() + "'");
        }
        for (const auto& [backbone, path] : e.clips) {
            if (!fs::exists(*root / path)) {
                throw Error(ErrorCode::kInvalidManifest,
                            "missing clip '" + (*root / path).string() + "' for backbone " + backbone);
            }
        }
    }
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
    manifest.validate();
    std::vector<KvRecord> records;
    KvRecord head;
    head.kind = "manifest";
    head.set("dataset", manifest.dataset_id).set("split", manifest.split);
    records.push_back(head);
    for (const auto& e : manifest.entries) {
        KvRecord r;
        r.kind = "entry";
        r.set("video", e.video_id).set("frames", e.frame_count).set("annotation", e.annotation_path);
        for (const auto& [backbone, clip] : e.clips) r.set("clip." + backbone, clip);
        records.push_back(r);
    }
    write_records(path, records, "vidprobe manifest v1");
}

Manifest read_manifest(const fs::path& path) {
    const auto records = read_records(path);
    if (records.empty() || records[0].kind != "manifest") {
        throw Error(ErrorCode::kInvalidManifest, path.string() + ": must start with a 'manifest' record");
    }
    Manifest m;
    m.dataset_id = records[0].at("dataset");
    m.split = records[0].at("split");
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.kind != "entry") throw Error(ErrorCode::kInvalidManifest, path.string() + ": unknown record '" + r.kind + "'");
        ManifestEntry e;
        for (const auto& [k, v] : r.fields) {
            if (k == "video") e.video_id = v;
            else if (k == "frames") e.frame_count = static_cast<int>(parse_int(v));
            else if (k == "annotation") e.annotation_path = v;
            else if (k.rfind("clip.", 0) == 0) e.clips[k.substr(5)] = v;
            else throw Error(ErrorCode::kInvalidManifest, path.string() + ": unknown key '" + k + "'");
        }
        if (e.video_id.empty() || e.annotation_path.empty()) {
            throw Error(ErrorCode::kInvalidManifest, path.string() + ": entry missing video or annotation");
        }
        m.entries.push_back(std::move(e));
    }
    m.validate();
    return m;
}

}  // namespace vidprobe
