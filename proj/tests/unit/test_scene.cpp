// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "test_support.hpp"
#include "vidprobe/error.hpp"
#include "vidprobe/scene.hpp"

using namespace vidprobe;

namespace {

// Consistent random scene: depth maps unprojected through random poses.
SceneAnnotation make_scene(Rng& rng, int frames, int h, int w) {
    SceneAnnotation s;
    s.height = h;
    s.width = w;
    const Intrinsics k{8, 8, (w - 1) / 2.0, (h - 1) / 2.0};
    for (int f = 0; f < frames; ++f) {
        s.frame_ids.push_back(3 * f);
        const PoseSE3 g = f == 0 ? PoseSE3::identity() : test::random_pose(rng, 0.3);
        std::vector<double> depth(h * w);
        for (std::size_t i = 0; i < depth.size(); ++i) {
            const bool valid = rng.uniform() > 0.2;
            depth[i] = valid ? rng.uniform(1.0, 3.0) : 0.0;
            s.mask.push_back(valid);
            s.confidence.push_back(valid ? rng.uniform(0.5, 1.5) : 0.0);
        }
        const auto pts = unproject_depth(depth, h, w, k, g);
        for (std::size_t i = 0; i < depth.size(); ++i) {
            for (int a = 0; a < 3; ++a) s.points.push_back(depth[i] > 0 ? pts[3 * i + a] : 0.0);
        }
        s.depth.insert(s.depth.end(), depth.begin(), depth.end());
        s.poses.push_back(g);
        s.intrinsics.push_back(k);
    }
    return s;
}

SceneAnnotation scaled(SceneAnnotation s, double factor) {
    for (auto& p : s.points) p *= factor;
    for (auto& d : s.depth) d *= factor;
    for (auto& g : s.poses) g.translation *= factor;
    return s;
}

}  // namespace

TEST_CASE("generated scene is self-consistent") {
    Rng rng(1);
    const auto s = make_scene(rng, 3, 4, 5);
    s.validate_layout();
    CHECK(annotation_consistency_error(s) < 1e-10);
}

TEST_CASE("normalize a scene already at unit mean norm") {
    Rng rng(2);
    auto s = make_scene(rng, 2, 4, 4);
    s = scaled(s, 1.0 / mean_valid_point_norm(s));
    const auto n = normalize_scene(s);
    CHECK(n.scale == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < s.points.size(); ++i) CHECK(n.scene.points[i] == doctest::Approx(s.points[i]));
}

TEST_CASE("scale then normalize equals normalize") {
    Rng rng(3);
    const auto s = make_scene(rng, 3, 4, 4);
    const auto a = normalize_scene(s);
    const auto b = normalize_scene(scaled(s, 7.0));
    CHECK(b.scale == doctest::Approx(7.0 * a.scale).epsilon(1e-12));
    for (std::size_t i = 0; i < s.points.size(); ++i) CHECK(b.scene.points[i] == doctest::Approx(a.scene.points[i]));
    for (std::size_t i = 0; i < s.depth.size(); ++i) CHECK(b.scene.depth[i] == doctest::Approx(a.scene.depth[i]));
    for (std::size_t f = 0; f < s.poses.size(); ++f) {
        CHECK((b.scene.poses[f].translation - a.scene.poses[f].translation).norm() < 1e-12);
    }
    CHECK(annotation_consistency_error(b.scene) < 1e-10);
}

TEST_CASE("single valid point at (0,3,4) has scale 5") {
    SceneAnnotation s;
    s.height = 1;
    s.width = 2;
    s.frame_ids = {0};
    s.points = {0, 3, 4, 0, 0, 0};
    s.depth = {4, 0};
    s.confidence = {1, 0};
    s.mask = {1, 0};
    s.poses = {PoseSE3::identity()};
    s.intrinsics = {{1, 1, 0, 0}};
    const auto n = normalize_scene(s);
    CHECK(n.scale == doctest::Approx(5.0));
    CHECK(n.scene.points[2] == doctest::Approx(0.8));
}

TEST_CASE("normalizing a scene without valid pixels fails") {
    Rng rng(4);
    auto s = make_scene(rng, 1, 2, 2);
    for (auto& m : s.mask) m = 0;
    try {
        normalize_scene(s);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kEmptyScene);
    }
}

TEST_CASE("select keeps the requested frames in order") {
    Rng rng(5);
    const auto s = make_scene(rng, 4, 3, 3);
    const std::vector<int> frames{0, 9, 3};
    const auto sub = s.select(frames);
    CHECK(sub.frame_ids == frames);
    CHECK(sub.position_of(9) == 1);
    for (std::size_t i = 0; i < s.pixels(); ++i) CHECK(sub.depth_of(2)[i] == s.depth_of(1)[i]);
    CHECK((sub.poses[1].rotation - s.poses[3].rotation).norm() == 0.0);
    try {
        sub.position_of(6);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kMissingFrame);
    }
}

TEST_CASE("layout validation rejects a masked pixel with zero depth") {
    Rng rng(6);
    auto s = make_scene(rng, 1, 2, 2);
    s.mask[0] = 1;
    s.depth[0] = 0.0;
    CHECK_THROWS_AS(s.validate_layout(), Error);
}
