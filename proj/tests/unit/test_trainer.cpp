// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "test_support.hpp"
#include "vidprobe/checkpoint.hpp"
#include "vidprobe/error.hpp"
#include "vidprobe/oracle.hpp"
#include "vidprobe/trainer.hpp"

using namespace vidprobe;

namespace {

OracleConfig toy_oracle() {
    OracleConfig o;
    o.frames = 16;
    o.height = 8;
    o.width = 8;
    o.grid_h = 4;
    o.grid_w = 4;
    o.channels = 16;
    o.seed = 3;
    return o;
}

ProbeConfig toy_probe() {
    ProbeConfig c;
    c.width = 16;
    c.blocks = 1;
    c.heads = 2;
    c.in_channels = 16;
    c.grid_h = 4;
    c.grid_w = 4;
    c.frames = 3;
    c.out_h = 8;
    c.out_w = 8;
    c.head_features = 4;
    return c;
}

TrainConfig toy_train() {
    TrainConfig t;
    t.frames = 3;
    t.gap = 5;
    t.steps = 10;
    t.batch_size = 2;
    t.learning_rate = 1e-3;
    t.warmup_steps = 3;
    t.seed = 5;
    return t;
}

const std::vector<SceneRecord>& toy_scenes() {
    static const std::vector<SceneRecord> scenes = build_oracle_scenes(toy_oracle(), 0, 4);
    return scenes;
}

std::set<std::vector<int>> feasible_sets(int t, int s, int gap) {
    std::set<std::vector<int>> out;
    std::vector<int> cur{0};
    auto rec = [&](auto&& self) -> void {
        if (static_cast<int>(cur.size()) == s) {
            out.insert(cur);
            return;
        }
        for (int next = cur.back() + gap; next < t; ++next) {
            cur.push_back(next);
            self(self);
            cur.pop_back();
        }
    };
    rec(rec);
    return out;
}

SceneAnnotation small_target(Rng& rng, int frames, int pixels) {
    SceneAnnotation s;
    s.height = 1;
    s.width = pixels;
    for (int f = 0; f < frames; ++f) {
        s.frame_ids.push_back(f);
        s.poses.push_back(f == 0 ? PoseSE3::identity() : test::random_pose(rng));
        s.intrinsics.push_back({1, 1, 0, 0});
        for (int p = 0; p < pixels; ++p) {
            const bool valid = p % 4 != 3;
            s.mask.push_back(valid);
            s.confidence.push_back(valid ? rng.uniform(0.5, 2.0) : 0.0);
            s.depth.push_back(valid ? rng.uniform(1.0, 2.0) : 0.0);
            for (int k = 0; k < 3; ++k) s.points.push_back(rng.normal());
        }
    }
    return s;
}

std::vector<Matrix<double>> points_of(const SceneAnnotation& s) {
    std::vector<Matrix<double>> out;
    for (int f = 0; f < s.frame_count(); ++f) {
        Matrix<double> m(static_cast<Eigen::Index>(s.pixels()), 3);
        for (std::size_t p = 0; p < s.pixels(); ++p) {
            for (int k = 0; k < 3; ++k) m(p, k) = s.points_of(f)[3 * p + k];
        }
        out.push_back(m);
    }
    return out;
}

std::vector<Matrix<double>> depth_of(const SceneAnnotation& s) {
    std::vector<Matrix<double>> out;
    for (int f = 0; f < s.frame_count(); ++f) {
        Matrix<double> m(static_cast<Eigen::Index>(s.pixels()), 1);
        for (std::size_t p = 0; p < s.pixels(); ++p) m(p, 0) = s.depth_of(f)[p];
        out.push_back(m);
    }
    return out;
}

std::vector<std::uint8_t> checkpoint_bytes(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<std::uint8_t> all;
    for (const auto& f : files) {
        const auto b = read_file_bytes(f);
        all.insert(all.end(), b.begin(), b.end());
    }
    return all;
}

}  // namespace

TEST_CASE("sample_frames with a unique feasible set") {
    Rng rng(1);
    for (int i = 0; i < 10; ++i) CHECK(sample_frames(16, 4, 5, rng) == std::vector<int>{0, 5, 10, 15});
    CHECK(feasible_sets(16, 4, 5).size() == 1);
}

TEST_CASE("sample_frames rejects videos below the feasibility bound") {
    Rng rng(2);
    try {
        sample_frames(15, 4, 5, rng);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kInsufficientFrames);
    }
}

TEST_CASE("sample_frames with gap 1 on four frames") {
    Rng rng(3);
    CHECK(sample_frames(4, 4, 1, rng) == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("sample_frames is uniform over feasible sets") {
    const auto sets = feasible_sets(20, 3, 4);
    std::map<std::vector<int>, int> counts;
    Rng rng(4);
    const int draws = 40000;
    for (int i = 0; i < draws; ++i) {
        const auto f = sample_frames(20, 3, 4, rng);
        REQUIRE(sets.count(f) == 1);
        ++counts[f];
    }
    CHECK(counts.size() == sets.size());
    const double expected = static_cast<double>(draws) / sets.size();
    double chi2 = 0.0;
    for (const auto& [f, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 77 degrees of freedom; the 0.999 quantile is about 121.
    CHECK(sets.size() == 78);
    CHECK(chi2 < 121.0);
}

TEST_CASE("eval_frames is the smallest feasible set") {
    CHECK(eval_frames(48, 4, 5) == std::vector<int>{0, 5, 10, 15});
    CHECK(*feasible_sets(30, 4, 5).begin() == eval_frames(30, 4, 5));
    CHECK_THROWS_AS(eval_frames(15, 4, 5), Error);
}

TEST_CASE("dense losses: exact prediction, uniform weights, confidence scaling") {
    Rng rng(5);
    auto gt = small_target(rng, 2, 8);
    const auto exact = points_of(gt);
    CHECK(pointmap_loss(exact, gt) == 0.0);
    CHECK(depth_loss(depth_of(gt), gt) == 0.0);

    auto pred = exact;
    for (auto& m : pred) m.array() += 0.3;
    auto pred_depth = depth_of(gt);
    for (auto& m : pred_depth) m.array() -= 0.2;
    const double base = pointmap_loss(pred, gt);
    const double base_depth = depth_loss(pred_depth, gt);

    auto uniform = gt;
    for (std::size_t i = 0; i < uniform.confidence.size(); ++i) uniform.confidence[i] = uniform.mask[i] ? 1.0 : 0.0;
    CHECK(pointmap_loss(pred, uniform) == doctest::Approx(3 * 0.09));
    CHECK(depth_loss(pred_depth, uniform) == doctest::Approx(0.04));

    auto doubled = gt;
    for (auto& c : doubled.confidence) c *= 2.0;
    CHECK(pointmap_loss(pred, doubled) == doctest::Approx(base).epsilon(1e-14));
    CHECK(depth_loss(pred_depth, doubled) == doctest::Approx(base_depth).epsilon(1e-14));

    auto empty = gt;
    for (auto& c : empty.confidence) c = 0.0;
    try {
        pointmap_loss(pred, empty);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kEmptyLoss);
    }
}

TEST_CASE("dense loss gradients match finite differences") {
    Rng rng(6);
    const auto gt = small_target(rng, 2, 6);
    auto pred = points_of(gt);
    for (auto& m : pred) {
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += 0.1 * rng.normal();
    }
    std::vector<Matrix<double>> grad;
    pointmap_loss(pred, gt, &grad);
    const double h = 1e-6;
    for (int f = 0; f < 2; ++f) {
        for (Eigen::Index i = 0; i < pred[f].size(); ++i) {
            const double saved = pred[f].data()[i];
            pred[f].data()[i] = saved + h;
            const double up = pointmap_loss(pred, gt);
            pred[f].data()[i] = saved - h;
            const double down = pointmap_loss(pred, gt);
            pred[f].data()[i] = saved;
            CHECK(grad[f].data()[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
        }
    }
}

TEST_CASE("camera loss: exact, quadratic branch, linear branch") {
    Rng rng(7);
    const auto gt = small_target(rng, 4, 4);
    const Matrix<double> enc = encode_poses(gt);
    REQUIRE(enc.rows() == 3);
    for (Eigen::Index r = 0; r < 3; ++r) CHECK(enc(r, 0) >= 0.0);
    CHECK(camera_loss(enc, gt, 0.1) == 0.0);

    const double delta = 0.1;
    Matrix<double> off = enc;
    off(1, 5) += delta / 2;
    CHECK(camera_loss(off, gt, delta) == doctest::Approx(delta * delta / 8 / 21.0).epsilon(1e-12));

    Matrix<double> far = enc;
    far(0, 2) -= 1.0;
    CHECK(camera_loss(far, gt, delta) == doctest::Approx(delta * (1.0 - delta / 2) / 21.0).epsilon(1e-12));

    Matrix<double> grad;
    camera_loss(far, gt, delta, &grad);
    CHECK(grad(0, 2) == doctest::Approx(-delta / 21.0));
}

TEST_CASE("total loss weights and gradient routing") {
    const auto c = toy_probe();
    const auto& scene = toy_scenes()[0];
    const std::vector<int> frames{0, 5, 10};
    const auto sample = make_sample(scene, frames);
    auto params = init_parameters<double>(c, 9);
    const ProbeModel<double> model(c);
    ProbeTape<double> tape;
    const auto out = model.forward(sample.features, params, &tape);

    TrainConfig t = toy_train();
    const auto all = total_loss(out, sample.target, t);
    CHECK(all.total == doctest::Approx(all.pmap + all.depth + all.cam).epsilon(1e-14));

    // Perfect outputs score zero.
    ProbeOutputs<double> perfect;
    perfect.points = points_of(sample.target);
    perfect.depth = depth_of(sample.target);
    perfect.pose = encode_poses(sample.target);
    CHECK(total_loss(perfect, sample.target, t).total == 0.0);

    t.lambda_cam = 0.0;
    ProbeOutputs<double> d_out;
    total_loss(out, sample.target, t, &d_out);
    auto grad = zeros_like(params);
    model.backward(tape, params, d_out, grad);
    CHECK(grad.camera_head.proj.weight.norm() == 0.0);
    CHECK(grad.camera_head.norm.gain.norm() == 0.0);
    CHECK(grad.point_head.out.weight.norm() > 0.0);

    t.lambda_cam = 1.0;
    t.lambda_pmap = 0.0;
    t.lambda_depth = 0.0;
    total_loss(out, sample.target, t, &d_out);
    grad.set_zero();
    model.backward(tape, params, d_out, grad);
    CHECK(grad.point_head.out.weight.norm() == 0.0);
    CHECK(grad.depth_head.proj_mid.weight.norm() == 0.0);
    CHECK(grad.camera_head.proj.weight.norm() > 0.0);
}

TEST_CASE("training targets are invariant to the scene's metric scale") {
    const auto& scene = toy_scenes()[1];
    SceneRecord big = scene;
    for (auto& p : big.annotation.points) p *= 4.5;
    for (auto& d : big.annotation.depth) d *= 4.5;
    for (auto& g : big.annotation.poses) g.translation *= 4.5;
    const std::vector<int> frames{0, 6, 12};
    const auto a = make_sample(scene, frames).target;
    const auto b = make_sample(big, frames).target;
    for (std::size_t i = 0; i < a.points.size(); ++i) CHECK(b.points[i] == doctest::Approx(a.points[i]).epsilon(1e-12));
    CHECK(camera_loss(encode_poses(a), b, 0.1) < 1e-20);
    CHECK_THROWS_AS(make_sample(scene, std::vector<int>{3, 9}), Error);
}

TEST_CASE("learning rate schedule") {
    TrainConfig t;
    t.steps = 100;
    t.warmup_steps = 10;
    t.learning_rate = 1e-3;
    t.min_learning_rate = 1e-5;
    CHECK(learning_rate_at(t, 0) == doctest::Approx(1e-4));
    CHECK(learning_rate_at(t, 9) == doctest::Approx(1e-3));
    CHECK(learning_rate_at(t, 10) == doctest::Approx(1e-3));
    CHECK(learning_rate_at(t, 55) == doctest::Approx(0.5 * (1e-3 + 1e-5)));
    for (int s = 10; s < 99; ++s) CHECK(learning_rate_at(t, s + 1) <= learning_rate_at(t, s));
}

TEST_CASE("gradient clipping and weight decay selection") {
    const auto c = toy_probe();
    auto params = init_parameters<float>(c, 1);
    auto grad = zeros_like(params);
    grad.input_proj.weight.setConstant(1.0f);
    const double n0 = std::sqrt(static_cast<double>(grad.input_proj.weight.size()));
    CHECK(clip_grad_norm(grad, 1.0) == doctest::Approx(n0));
    CHECK(grad.input_proj.weight.norm() == doctest::Approx(1.0).epsilon(1e-6));

    TrainConfig t;
    t.weight_decay = 0.5;
    AdamW opt(t, params);
    const auto before = params;
    opt.step(params, zeros_like(params), 0.1);
    // Zero gradient: only decayed tensors move, by a factor (1 - lr * wd).
    CHECK((params.input_proj.weight - 0.95f * before.input_proj.weight).norm() < 1e-6);
    CHECK((params.blocks[0].norm1.gain - before.blocks[0].norm1.gain).norm() == 0.0f);
    CHECK((params.pos_embed - before.pos_embed).norm() == 0.0f);
}

TEST_CASE("log entries are single-line json") {
    const std::string line = format_log_entry({3, {0.5, 0.25, 0.125, 0.875}, 1e-4, 2.0});
    CHECK(line.find('\n') == std::string::npos);
    CHECK(line.rfind("{\"step\":3,\"loss\":0.875,", 0) == 0);
}

TEST_CASE("step-0 loss equals the initial parameters on the first batch") {
    const auto& scenes = toy_scenes();
    const auto c = toy_probe();
    const auto t = toy_train();
    TrainConfig one = t;
    one.steps = 1;
    const auto result = train_probe(scenes, c, one);
    REQUIRE(result.log.size() == 1);

    const auto params = init_parameters<float>(c, derive_seed(t.seed, 0));
    Rng rng(derive_seed(t.seed, 2));
    auto order = result.scene_indices;
    rng.shuffle(order);
    const ProbeModel<float> model(c);
    double total = 0.0;
    for (int b = 0; b < t.batch_size; ++b) {
        const auto& scene = scenes[order[b]];
        const auto frames = sample_frames(scene.annotation.frame_count(), t.frames, t.gap, rng);
        const auto sample = make_sample(scene, frames);
        total += total_loss(model.forward(sample.features, params), sample.target, t).total;
    }
    CHECK(result.log[0].loss.total == doctest::Approx(total / t.batch_size).epsilon(1e-12));
}

TEST_CASE("equal seeds give bit-identical checkpoints") {
    const auto dir = test::temp_dir("train_determinism");
    const auto c = toy_probe();
    const auto t = toy_train();
    train_probe(toy_scenes(), c, t, {dir / "a", "oracle", {}});
    train_probe(toy_scenes(), c, t, {dir / "b", "oracle", {}});
    const auto name = checkpoint_name("oracle", t.steps);
    CHECK(checkpoint_bytes(dir / "a" / name) == checkpoint_bytes(dir / "b" / name));
    CHECK(read_file_bytes(dir / "a" / "train_log.jsonl") == read_file_bytes(dir / "b" / "train_log.jsonl"));

    TrainConfig other = t;
    other.seed = 6;
    train_probe(toy_scenes(), c, other, {dir / "c", "oracle", {}});
    CHECK(checkpoint_bytes(dir / "a" / name) != checkpoint_bytes(dir / "c" / name));
}

TEST_CASE("smoke run lowers the smoothed loss") {
    auto t = toy_train();
    t.steps = 50;
    t.warmup_steps = 5;
    t.learning_rate = 2e-3;
    const auto result = train_probe(toy_scenes(), toy_probe(), t);
    REQUIRE(result.log.size() == 50);
    std::vector<double> windows;
    for (int w = 0; w < 5; ++w) {
        double s = 0.0;
        for (int i = 0; i < 10; ++i) s += result.log[w * 10 + i].loss.total;
        windows.push_back(s / 10);
    }
    for (std::size_t w = 1; w < windows.size(); ++w) CHECK(windows[w] < windows[w - 1]);
}

TEST_CASE("checkpoint round trip and tamper detection") {
    const auto dir = test::temp_dir("checkpoint");
    const auto c = toy_probe();
    const auto params = init_parameters<float>(c, 3);
    save_checkpoint(params, {"oracle", 7, 99, c}, dir / "ck");
    const auto loaded = load_checkpoint(dir / "ck");
    CHECK(loaded.info.step == 7);
    CHECK(loaded.info.seed == 99);
    CHECK(loaded.info.backbone == "oracle");
    CHECK(loaded.info.config == c);
    std::vector<const Matrix<float>*> a, b;
    params.visit([&](const std::string&, const Matrix<float>& m) { a.push_back(&m); });
    loaded.params.visit([&](const std::string&, const Matrix<float>& m) { b.push_back(&m); });
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK((*a[i] - *b[i]).norm() == 0.0f);
    CHECK(checkpoint_name("oracle", 2000) == "probe_oracle_2000");

    // Editing the stored config without updating its hash is rejected.
    const auto meta = dir / "ck" / "checkpoint.meta";
    std::ifstream in(meta);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto pos = text.find("width=16");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 8, "width=32");
    std::ofstream(meta) << text;
    CHECK_THROWS_AS(load_checkpoint(dir / "ck"), Error);
}

TEST_CASE("data fraction subsamples the training scenes") {
    const auto idx = subsample_indices(10, 0.5, 1);
    CHECK(idx.size() == 5);
    CHECK(std::is_sorted(idx.begin(), idx.end()));
    CHECK(subsample_indices(10, 0.5, 1) == idx);
    CHECK(subsample_indices(3, 0.01, 1).size() == 1);
    CHECK(subsample_indices(7, 1.0, 2).size() == 7);

    auto t = toy_train();
    t.steps = 1;
    t.data_fraction = 0.5;
    const auto r = train_probe(toy_scenes(), toy_probe(), t);
    CHECK(r.scene_indices.size() == 2);
}

TEST_CASE("config validation and record round trip") {
    TrainConfig t = toy_train();
    t.data_fraction = 0.25;
    t.seed = 0xFFFFFFFFFFFFFFFFULL;
    KvRecord r;
    t.to_record(r);
    CHECK(TrainConfig::from_record(r) == t);
    t.data_fraction = 0.0;
    CHECK_THROWS_AS(t.validate(), Error);
    CHECK_THROWS_AS(train_probe({}, toy_probe(), toy_train()), Error);
}
