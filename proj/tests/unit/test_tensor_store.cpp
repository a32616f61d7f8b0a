// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>

#include "test_support.hpp"
#include "vidprobe/error.hpp"
#include "vidprobe/tensor_store.hpp"

using namespace vidprobe;

namespace {

ErrorCode decode_error(const std::vector<std::uint8_t>& bytes, std::string* message = nullptr) {
    try {
        decode_tensor(bytes);
    } catch (const Error& e) {
        if (message) *message = e.what();
        return e.code();
    }
    FAIL("decode succeeded unexpectedly");
    return ErrorCode::kIo;
}

FeatureClip chunked_clip(int frames, int chunk_length, int stride) {
    const ChunkPlan plan = plan_chunks(frames, chunk_length, stride);
    FeatureClip clip;
    clip.backbone_id = "toy";
    clip.channels = 2;
    clip.grid_h = 1;
    clip.grid_w = 2;
    clip.meta.chunk_length = chunk_length;
    clip.meta.stride = stride;
    clip.meta.layer = 3;
    clip.meta.timestep = 200;
    clip.index_map = plan.index_map;
    for (const auto& raw : plan.chunks) {
        Tensor t = Tensor::zeros({raw.size(), 2, 1, 2});
        // Every value encodes the raw frame it came from.
        for (std::size_t l = 0; l < raw.size(); ++l) {
            for (std::size_t k = 0; k < 4; ++k) t.values[l * 4 + k] = static_cast<float>(raw[l]) + 0.25f * k;
        }
        clip.chunks.push_back(std::move(t));
    }
    return clip;
}

}  // namespace

TEST_CASE("identity matrix serializes to the documented bytes") {
    const Tensor eye({2, 2}, {1, 0, 0, 1});
    const auto bytes = encode_tensor(eye);
    REQUIRE(bytes.size() == 4 + 4 + 1 + 1 + 2 * 8 + 16);
    CHECK(std::memcmp(bytes.data(), "VFPB", 4) == 0);
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    CHECK(bytes[8] == 0);
    CHECK(bytes[9] == 2);
    CHECK(bytes[10] == 2);
    CHECK(bytes[18] == 2);
    const std::uint8_t payload[16] = {0x00, 0x00, 0x80, 0x3F, 0, 0, 0, 0, 0, 0, 0, 0, 0x00, 0x00, 0x80, 0x3F};
    CHECK(std::memcmp(bytes.data() + 26, payload, 16) == 0);
}

TEST_CASE("scalar zero payload") {
    const auto bytes = encode_tensor(Tensor({1}, {0.0f}));
    REQUIRE(bytes.size() == 18 + 4);
    CHECK(bytes[18] == 0);
    CHECK(bytes[19] == 0);
    CHECK(bytes[20] == 0);
    CHECK(bytes[21] == 0);
}

TEST_CASE("random tensor round-trips bit-exactly and re-serializes identically") {
    Rng rng(11);
    Tensor t = Tensor::zeros({3, 5, 7});
    for (auto& v : t.values) v = static_cast<float>(rng.normal());
    t.values[4] = -0.0f;
    const auto dir = test::temp_dir("tensor_roundtrip");
    write_tensor(t, dir / "a.vfpb");
    const Tensor back = read_tensor(dir / "a.vfpb");
    CHECK(back.shape == t.shape);
    REQUIRE(back.values.size() == t.values.size());
    CHECK(std::memcmp(back.values.data(), t.values.data(), 4 * t.values.size()) == 0);
    write_tensor(back, dir / "b.vfpb");
    CHECK(read_file_bytes(dir / "a.vfpb") == read_file_bytes(dir / "b.vfpb"));
}

TEST_CASE("decode errors carry distinct codes") {
    const auto good = encode_tensor(Tensor({2, 2}, {1, 2, 3, 4}));

    auto bad_magic = good;
    bad_magic[0] = 'X';
    CHECK(decode_error(bad_magic) == ErrorCode::kBadMagic);

    auto bad_version = good;
    bad_version[4] = 2;
    CHECK(decode_error(bad_version) == ErrorCode::kVersionMismatch);

    auto bad_dtype = good;
    bad_dtype[8] = 7;
    CHECK(decode_error(bad_dtype) == ErrorCode::kUnsupportedDtype);

    std::string message;
    const std::vector<std::uint8_t> truncated(good.begin(), good.end() - 3);
    CHECK(decode_error(truncated, &message) == ErrorCode::kTruncated);
    CHECK(message.find("byte 39") != std::string::npos);

    const std::vector<std::uint8_t> header_only(good.begin(), good.begin() + 12);
    CHECK(decode_error(header_only) == ErrorCode::kTruncated);
}

TEST_CASE("float64 is not storable") {
    CHECK_THROWS_AS(encode_tensor(Tensor({1}, {1.0f}), DType::kFloat64), Error);
    try {
        encode_tensor(Tensor({1}, {1.0f}), DType::kFloat64);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kUnsupportedDtype);
    }
}

TEST_CASE("unwritable path is an io error") {
    try {
        write_tensor(Tensor({1}, {1.0f}), "/nonexistent_dir_for_vidprobe/x.vfpb");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kIo);
    }
}

TEST_CASE("chunk plan for 16 frames, chunks of 8, stride 2") {
    const ChunkPlan plan = plan_chunks(16, 8, 2);
    // Independent enumeration: stream o takes o, o+2, ...; slot 0 of each chunk is frame 0.
    std::map<int, ChunkLocation> expected;
    int chunk = 0;
    for (int offset = 0; offset < 2; ++offset) {
        int local = 1;
        for (int t = offset; t < 16; t += 2) expected[t] = {chunk, local++};
        ++chunk;
    }
    expected[0] = {0, 0};
    CHECK(plan.index_map == expected);
    CHECK(plan.index_map.at(14) == ChunkLocation{0, 8});
    REQUIRE(plan.chunks.size() == 2);
    for (const auto& c : plan.chunks) CHECK(c.front() == 0);
}

TEST_CASE("every chunk slot 0 is the reference frame") {
    for (int frames : {5, 16, 37, 76}) {
        for (int len : {2, 3, 8}) {
            for (int stride : {1, 2, 3}) {
                const ChunkPlan plan = plan_chunks(frames, len, stride);
                for (const auto& c : plan.chunks) CHECK(c.front() == 0);
                CHECK(static_cast<int>(plan.index_map.size()) == frames);
                for (const auto& [t, loc] : plan.index_map) CHECK(plan.chunks[loc.chunk][loc.local] == t);
            }
        }
    }
}

TEST_CASE("feature_for_frame follows the index map") {
    const FeatureClip clip = chunked_clip(16, 8, 2);
    clip.validate();
    CHECK(feature_for_frame(clip, 0)[0] == 0.0f);
    for (int t = 0; t < 16; ++t) {
        const auto f = feature_for_frame(clip, t);
        REQUIRE(f.size() == 4);
        CHECK(f[0] == static_cast<float>(t));
        CHECK(f[3] == static_cast<float>(t) + 0.75f);
    }
}

TEST_CASE("single chunk clip returns frame 0") {
    const FeatureClip clip = chunked_clip(4, 0, 1);
    CHECK(clip.index_map.at(3) == ChunkLocation{0, 3});
    CHECK(feature_for_frame(clip, 0)[1] == 0.25f);
}

TEST_CASE("missing frame error names the frame") {
    const FeatureClip clip = chunked_clip(76, 0, 1);
    try {
        feature_for_frame(clip, 999);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kMissingFrame);
        CHECK(std::string(e.what()).find("999") != std::string::npos);
    }
}

TEST_CASE("clip directory round trip") {
    const FeatureClip clip = chunked_clip(16, 8, 2);
    const auto dir = test::temp_dir("clip_roundtrip");
    write_feature_clip(clip, dir / "clip");
    const FeatureClip back = read_feature_clip(dir / "clip");
    CHECK(back.backbone_id == clip.backbone_id);
    CHECK(back.channels == clip.channels);
    CHECK(back.index_map == clip.index_map);
    CHECK(back.meta == clip.meta);
    REQUIRE(back.chunks.size() == clip.chunks.size());
    for (std::size_t i = 0; i < clip.chunks.size(); ++i) CHECK(back.chunks[i] == clip.chunks[i]);
}

TEST_CASE("validate rejects a map entry pointing past a chunk") {
    FeatureClip clip = chunked_clip(8, 0, 1);
    clip.index_map[8] = {0, 8};
    CHECK_THROWS_AS(clip.validate(), Error);
}

TEST_CASE("annotation round trip") {
    SceneAnnotation a;
    a.height = 2;
    a.width = 3;
    a.frame_ids = {0, 4};
    Rng rng(5);
    for (int i = 0; i < 2 * 6; ++i) {
        a.depth.push_back(1.0 + i);
        a.confidence.push_back(0.5);
        a.mask.push_back(i % 5 != 0);
        for (int k = 0; k < 3; ++k) a.points.push_back(0.5 * i + k);
    }
    a.poses = {PoseSE3::identity(), test::random_pose(rng)};
    a.intrinsics = {{2, 2, 1, 0.5}, {2, 2, 1, 0.5}};
    const auto dir = test::temp_dir("annotation");
    write_annotation(a, dir / "ann");
    const SceneAnnotation b = read_annotation(dir / "ann");
    CHECK(b.frame_ids == a.frame_ids);
    CHECK(b.mask == a.mask);
    CHECK(b.height == 2);
    // Stored as f32.
    for (std::size_t i = 0; i < a.points.size(); ++i) CHECK(b.points[i] == static_cast<float>(a.points[i]));
    CHECK((b.poses[1].rotation - a.poses[1].rotation).norm() < 1e-6);
}

TEST_CASE("manifest round trip and invariants") {
    Manifest m{"ds", "train", {}};
    m.entries.push_back({"v1", 20, "ann/v1", {{"a", "feat/a/v1"}, {"b", "feat/b/v1"}}});
    m.entries.push_back({"v2", 30, "ann/v2", {{"a", "feat/a/v2"}}});
    const auto dir = test::temp_dir("manifest");
    write_manifest(m, dir / "train.manifest");
    CHECK(read_manifest(dir / "train.manifest") == m);

    Manifest dup = m;
    dup.entries.push_back(m.entries.front());
    CHECK_THROWS_AS(dup.validate(), Error);

    const auto root = dir;
    try {
        m.validate(&root);
        FAIL("paths do not exist");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kInvalidManifest);
    }
}
