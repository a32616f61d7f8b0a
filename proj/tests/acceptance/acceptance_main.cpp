// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 255).
//
//   vidprobe_acceptance [--only NAME[,NAME...]] [--list]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vidprobe/checkpoint.hpp"
#include "vidprobe/dataset.hpp"
#include "vidprobe/error.hpp"
#include "vidprobe/geometry.hpp"
#include "vidprobe/metrics.hpp"
#include "vidprobe/oracle.hpp"
#include "vidprobe/probe_model.hpp"
#include "vidprobe/random.hpp"
#include "vidprobe/trainer.hpp"

namespace vp = vidprobe;
namespace fs = std::filesystem;

namespace {

// --- frozen experiment settings ------------------------------------------------

// Closed loop, dial at zero.
constexpr int kClosedLoopTrain = 200;
constexpr int kClosedLoopTest = 20;
constexpr int kClosedLoopSteps = 7500;
constexpr double kClosedLoopLr = 7e-4;
constexpr int kClosedLoopWarmup = 400;
constexpr double kClosedLoopPointMax = 0.065;
constexpr double kClosedLoopDepthMax = 0.05;
constexpr double kClosedLoopAuc30Min = 0.80;
constexpr double kClosedLoopBudgetS = 45 * 60;

// Dial sweep shared by the monotonicity and probe-size criteria.
const std::vector<double> kDialSigmas{0.0, 0.1, 0.2, 0.35, 0.5};
constexpr double kDialDropoutPerSigma = 0.2;
constexpr int kDialTrain = 60;
constexpr int kDialTest = 12;
constexpr int kDialSteps = 800;
constexpr int kSizeSteps = 300;

constexpr double kRandomBaselineTolerance = 0.10;

vp::OracleConfig base_oracle() {
    vp::OracleConfig c;
    c.kind = vp::SceneKind::kOrbit;
    c.frames = 48;
    c.height = 8;
    c.width = 8;
    c.grid_h = 4;
    c.grid_w = 4;
    c.channels = 64;
    c.seed = 2026;
    return c;
}

vp::OracleConfig dial_oracle(double sigma) {
    vp::OracleConfig c = base_oracle();
    c.noise = sigma;
    c.decorrelation = sigma;
    c.dropout = kDialDropoutPerSigma * sigma;
    return c;
}

vp::ProbeConfig probe_for(const vp::OracleConfig& o, int width, int blocks) {
    vp::ProbeConfig p;
    p.width = width;
    p.blocks = blocks;
    p.heads = 8;
    p.in_channels = o.channels;
    p.grid_h = o.grid_h;
    p.grid_w = o.grid_w;
    p.out_h = o.height;
    p.out_w = o.width;
    p.frames = 4;
    return p;
}

vp::TrainConfig train_config(int steps, double lr, int warmup, std::uint64_t seed) {
    vp::TrainConfig t;
    t.frames = 4;
    t.gap = 5;
    t.steps = steps;
    t.batch_size = 4;
    t.learning_rate = lr;
    t.warmup_steps = warmup;
    t.seed = seed;
    t.log_every = 100;
    return t;
}

// --- reporting -------------------------------------------------------------------

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

std::string join(const std::vector<double>& v, const char* format) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + fmt(format, v[i]);
    return out;
}

// --- geometry ----------------------------------------------------------------------

vp::Mat3 random_rotation(vp::Rng& rng) {
    vp::Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    return vp::rotation_from_axis_angle(axis.normalized(), rng.uniform(0.0, std::numbers::pi));
}

vp::Similarity perturbed(const vp::Similarity& s, vp::Rng& rng, double size) {
    vp::Similarity p = s;
    p.scale *= 1.0 + size * rng.normal();
    const vp::Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    p.rotation = vp::rotation_from_axis_angle(axis.normalized(), size * std::abs(rng.normal())) * s.rotation;
    p.translation += size * vp::Vec3(rng.normal(), rng.normal(), rng.normal());
    return p;
}

Outcome geometry_suite() {
    const auto t0 = Clock::now();
    vp::Rng rng(1);
    int recovered = 0;
    int optimal = 0;
    double worst_residual = 0.0;
    constexpr int kTrials = 1000;
    constexpr int kPoints = 50;
    for (int trial = 0; trial < kTrials; ++trial) {
        const double scale = std::exp(rng.uniform(-1.0, 1.0));
        const vp::Mat3 rot = random_rotation(rng);
        const vp::Vec3 trans(rng.normal(), rng.normal(), rng.normal());
        std::vector<vp::Vec3> src(kPoints), dst(kPoints), noisy(kPoints);
        for (int i = 0; i < kPoints; ++i) {
            src[i] = vp::Vec3(rng.normal(), rng.normal(), rng.normal());
            dst[i] = scale * rot * src[i] + trans;
            noisy[i] = dst[i] + 0.05 * vp::Vec3(rng.normal(), rng.normal(), rng.normal());
        }
        const vp::Similarity exact = vp::umeyama_align(src, dst);
        const double residual = vp::alignment_residual(exact, src, dst);
        worst_residual = std::max(worst_residual, residual);
        if (residual <= 1e-9) ++recovered;

        // Optimality against perturbations, on the exact and on a noisy target.
        const vp::Similarity fit = vp::umeyama_align(src, noisy);
        const double best = vp::alignment_residual(fit, src, noisy);
        bool beats = true;
        for (int k = 0; k < 100 && beats; ++k) {
            const double size = std::pow(10.0, rng.uniform(-6.0, -1.0));
            beats = vp::alignment_residual(perturbed(exact, rng, size), src, dst) >= residual &&
                    vp::alignment_residual(perturbed(fit, rng, size), src, noisy) >= best;
        }
        if (beats) ++optimal;
    }

    int geodesic_ok = 0;
    double worst_geodesic = 0.0;
    for (int trial = 0; trial < kTrials; ++trial) {
        const double angle = trial == 0 ? 0.0 : trial == 1 ? std::numbers::pi : rng.uniform(0.0, std::numbers::pi);
        const vp::Vec3 axis = vp::Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
        const vp::Mat3 r1 = random_rotation(rng);
        const vp::Mat3 r2 = r1 * vp::rotation_from_axis_angle(axis, angle);
        const double err = std::abs(vp::so3_geodesic_deg(r1, r2) - angle * 180.0 / std::numbers::pi);
        worst_geodesic = std::max(worst_geodesic, err);
        if (err <= 1e-9) ++geodesic_ok;
    }
    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = recovered == kTrials && optimal == kTrials && geodesic_ok == kTrials && elapsed <= 10.0;
    o.detail = fmt("umeyama %d/%d recovered (max residual %.2e), %d/%d beat 100 perturbations; geodesic %d/%d "
                   "within 1e-9 deg (max %.2e); %.1fs",
                   recovered, kTrials, worst_residual, optimal, kTrials, geodesic_ok, kTrials, worst_geodesic, elapsed);
    return o;
}

// --- AUC exactness ---------------------------------------------------------------

double brute_force_auc(const std::vector<vp::PoseError>& errors, double theta_max) {
    const long long k_max = std::llround(theta_max / vp::kAucStepDeg);
    double sum = 0.0;
    for (long long k = 1; k <= k_max; ++k) {
        const double theta = static_cast<double>(k) * vp::kAucStepDeg;
        std::size_t hits = 0;
        std::size_t n = 0;
        for (const auto& e : errors) {
            if (e.excluded) continue;
            ++n;
            if (std::max(e.rotation_deg, e.translation_deg) <= theta) ++hits;
        }
        sum += static_cast<double>(hits) / static_cast<double>(n);
    }
    return sum / static_cast<double>(k_max);
}

Outcome auc_exactness() {
    const auto t0 = Clock::now();
    vp::Rng rng(2);
    constexpr int kSets = 10000;
    int equal = 0;
    for (int set = 0; set < kSets; ++set) {
        std::vector<vp::PoseError> errors;
        const int n = 1 + static_cast<int>(rng.below(60));
        for (int i = 0; i < n; ++i) {
            vp::PoseError e;
            // On-grid values exercise the inclusive boundary.
            e.rotation_deg = rng.uniform() < 0.3 ? static_cast<double>(rng.below(400)) * 0.1 : rng.uniform(0.0, 40.0);
            e.translation_deg = rng.uniform() < 0.3 ? static_cast<double>(rng.below(400)) * 0.1 : rng.uniform(0.0, 40.0);
            e.excluded = i > 0 && rng.uniform() < 0.1;
            errors.push_back(e);
        }
        const double theta = rng.uniform() < 0.5 ? 30.0 : 5.0;
        if (vp::pose_auc(errors, theta) == brute_force_auc(errors, theta)) ++equal;
    }
    const double elapsed = seconds_since(t0);
    return {equal == kSets && elapsed <= 30.0, fmt("%d/%d sets bit-equal; %.1fs", equal, kSets, elapsed)};
}

// --- gradient check ----------------------------------------------------------------

Outcome gradient_check() {
    const auto t0 = Clock::now();
    vp::OracleConfig o = base_oracle();
    o.frames = 16;
    o.channels = 16;
    const auto scenes = vp::build_oracle_scenes(o, 0, 1);
    vp::ProbeConfig c = probe_for(o, 16, 1);
    c.heads = 2;
    c.frames = 3;
    c.head_features = 4;
    const std::vector<int> frames{0, 5, 10};
    const auto sample = vp::make_sample(scenes[0], frames);
    vp::TrainConfig t = train_config(1, 1e-3, 1, 0);
    t.frames = 3;

    vp::Rng rng(3);
    auto params = vp::init_parameters<double>(c, 4);
    // Move off the initialization so every tensor carries signal.
    params.visit([&](const std::string&, vp::Matrix<double>& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += 0.2 * rng.normal();
    });
    const vp::ProbeModel<double> model(c);
    auto loss_at = [&] { return vp::total_loss(model.forward(sample.features, params), sample.target, t).total; };

    vp::ProbeTape<double> tape;
    const auto out = model.forward(sample.features, params, &tape);
    vp::ProbeOutputs<double> d_out;
    vp::total_loss(out, sample.target, t, &d_out);
    auto grad = vp::zeros_like(params);
    model.backward(tape, params, d_out, grad);

    std::vector<vp::Matrix<double>*> grads;
    grad.visit([&](const std::string&, vp::Matrix<double>& m) { grads.push_back(&m); });
    constexpr double h = 1e-3;
    std::size_t index = 0;
    int tensors = 0;
    int passed = 0;
    double worst = 0.0;
    std::string worst_name;
    params.visit([&](const std::string& name, vp::Matrix<double>& m) {
        const vp::Matrix<double>& g = *grads[index++];
        vp::Matrix<double> numeric(m.rows(), m.cols());
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double saved = m.data()[i];
            m.data()[i] = saved + h;
            const double up = loss_at();
            m.data()[i] = saved - h;
            const double down = loss_at();
            m.data()[i] = saved;
            numeric.data()[i] = (up - down) / (2 * h);
        }
        const double scale = std::max({g.norm(), numeric.norm(), 1e-300});
        const double rel = (g - numeric).norm() / scale;
        ++tensors;
        if (rel <= 1e-4) ++passed;
        if (rel > worst) {
            worst = rel;
            worst_name = name;
        }
    });
    const double elapsed = seconds_since(t0);
    return {passed == tensors && elapsed <= 120.0,
            fmt("%d/%d tensors within 1e-4 (worst %.2e at %s); %.1fs", passed, tensors, worst, worst_name.c_str(),
                elapsed)};
}

// --- closed loop and dial experiments ------------------------------------------------

struct Split {
    std::vector<vp::SceneRecord> train;
    std::vector<vp::SceneRecord> test;
};

Split oracle_split(const vp::OracleConfig& o, int n_train, int n_test) {
    return {vp::build_oracle_scenes(o, 0, n_train), vp::build_oracle_scenes(o, n_train, n_test)};
}

vp::MetricsConfig metrics_config() {
    vp::MetricsConfig m;
    m.frames = 4;
    m.gap = 5;
    m.seed = 11;
    return m;
}

struct Fit {
    vp::MetricsReport report;
    double seconds = 0.0;
};

Fit fit_and_evaluate(const Split& split, const vp::ProbeConfig& probe, const vp::TrainConfig& train) {
    const auto t0 = Clock::now();
    const auto result = vp::train_probe(split.train, probe, train);
    Fit f;
    f.report = vp::evaluate_probe(result.params, probe, split.test, metrics_config());
    f.seconds = seconds_since(t0);
    return f;
}

// Shared between the closed-loop and correspondence criteria.
const Split& dial_zero_split() {
    static const Split split = oracle_split(base_oracle(), kClosedLoopTrain, kClosedLoopTest);
    return split;
}

Outcome closed_loop() {
    const auto t0 = Clock::now();
    const Split& split = dial_zero_split();
    const auto fit = fit_and_evaluate(split, probe_for(base_oracle(), 256, 4),
                                      train_config(kClosedLoopSteps, kClosedLoopLr, kClosedLoopWarmup, 7));
    const auto& r = fit.report;
    const double auc30 = r.mean_auc.at(1);
    const double elapsed = seconds_since(t0);
    const bool pass = r.mean_point_err <= kClosedLoopPointMax && r.mean_depth_err <= kClosedLoopDepthMax &&
                      auc30 >= kClosedLoopAuc30Min && elapsed <= kClosedLoopBudgetS;
    return {pass, fmt("point %.4f (<= %g), depth %.4f (<= %g), AUC@30 %.3f (>= %g), AUC@5 %.3f; "
                      "%d steps; %.0fs (<= %.0fs)",
                      r.mean_point_err, kClosedLoopPointMax, r.mean_depth_err, kClosedLoopDepthMax, auc30,
                      kClosedLoopAuc30Min, r.mean_auc.at(0), kClosedLoopSteps, elapsed, kClosedLoopBudgetS)};
}

const std::vector<Split>& dial_splits() {
    static const std::vector<Split> splits = [] {
        std::vector<Split> out;
        for (double s : kDialSigmas) out.push_back(oracle_split(dial_oracle(s), kDialTrain, kDialTest));
        return out;
    }();
    return splits;
}

std::vector<vp::MetricsReport> dial_sweep(int width, int blocks, int steps) {
    std::vector<vp::MetricsReport> reports;
    for (std::size_t i = 0; i < kDialSigmas.size(); ++i) {
        const auto o = dial_oracle(kDialSigmas[i]);
        reports.push_back(fit_and_evaluate(dial_splits()[i], probe_for(o, width, blocks),
                                           train_config(steps, 5e-4, steps / 10, 21))
                              .report);
    }
    return reports;
}

bool strictly_increasing(const std::vector<double>& v) {
    return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end();
}

Outcome monotonicity() {
    const auto t0 = Clock::now();
    const auto reports = dial_sweep(256, 4, kDialSteps);
    std::vector<double> point, auc;
    for (const auto& r : reports) {
        point.push_back(r.mean_point_err);
        auc.push_back(-r.mean_auc.at(1));
    }
    const bool pass = strictly_increasing(point) && strictly_increasing(auc);
    for (auto& a : auc) a = -a;
    return {pass, fmt("sigma {%s}: point {%s}, AUC@30 {%s}; %.0fs", join(kDialSigmas, "%g").c_str(),
                      join(point, "%.4f").c_str(), join(auc, "%.3f").c_str(), seconds_since(t0))};
}

// Monte-Carlo expectation of the pixel error under uniformly random cell matching.
double random_matching_baseline(const std::vector<vp::Vec2>& targets, int grid_h, int grid_w, int r, vp::Rng& rng) {
    constexpr int kDraws = 200;
    const double offset = 0.5 * (r - 1);
    double sum = 0.0;
    for (const auto& t : targets) {
        for (int k = 0; k < kDraws; ++k) {
            const auto cell = static_cast<int>(rng.below(static_cast<std::uint64_t>(grid_h) * grid_w));
            const vp::Vec2 center((cell % grid_w) * r + offset, (cell / grid_w) * r + offset);
            sum += (center - t).norm();
        }
    }
    return sum / (static_cast<double>(targets.size()) * kDraws);
}

struct CorrespondenceStats {
    double error = 0.0;
    double baseline = 0.0;
};

CorrespondenceStats correspondence_over(const std::vector<vp::SceneRecord>& scenes, const vp::OracleConfig& o) {
    const auto m = metrics_config();
    vp::Rng mc(99);
    double err = 0.0;
    double base = 0.0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto& s = scenes[i];
        std::vector<int> raw;
        for (int p : vp::eval_frames(s.annotation.frame_count(), m.frames, m.gap)) {
            raw.push_back(s.annotation.frame_ids.at(static_cast<std::size_t>(p)));
        }
        const auto features = vp::gather_features(s.clip, raw);
        const std::span<const float> all(features);
        const std::size_t fs = s.clip.frame_size();
        vp::Rng rng(vp::derive_seed(m.seed, i));
        const auto res = vp::correspondence_error({all.subspan(0, fs), o.channels, o.grid_h, o.grid_w},
                                                  {all.subspan(fs, fs), o.channels, o.grid_h, o.grid_w},
                                                  s.annotation.select(raw), 0, 1, m.n_anchors, rng, m.nn_metric,
                                                  m.occlusion_tolerance);
        err += res.error;
        base += random_matching_baseline(res.targets, o.grid_h, o.grid_w, o.height / o.grid_h, mc);
    }
    const double n = static_cast<double>(scenes.size());
    return {err / n, base / n};
}

Outcome correspondence_sanity() {
    const auto t0 = Clock::now();
    const auto o = base_oracle();
    const double diagonal = std::sqrt(2.0) * (o.height / o.grid_h);
    const auto zero = correspondence_over(dial_zero_split().test, o);
    vp::OracleConfig decorrelated = o;
    decorrelated.decorrelation = 1.0;
    const auto random = correspondence_over(vp::build_oracle_scenes(decorrelated, kClosedLoopTrain, kClosedLoopTest),
                                            decorrelated);
    const double gap = std::abs(random.error - random.baseline) / random.baseline;
    const bool pass = zero.error <= diagonal && gap <= kRandomBaselineTolerance;
    return {pass, fmt("dial zero %.3f px (<= cell diagonal %.3f); rho=1 %.3f px vs random baseline %.3f "
                      "(%.1f%%, <= %.0f%%); %.1fs",
                      zero.error, diagonal, random.error, random.baseline, 100 * gap, 100 * kRandomBaselineTolerance,
                      seconds_since(t0))};
}

double kendall_tau(const std::vector<double>& a, const std::vector<double>& b) {
    int concordant = 0;
    int discordant = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const double s = (a[i] - a[j]) * (b[i] - b[j]);
            if (s > 0) ++concordant;
            if (s < 0) ++discordant;
        }
    }
    const double pairs = static_cast<double>(a.size() * (a.size() - 1) / 2);
    return (concordant - discordant) / pairs;
}

Outcome probe_size_ordering() {
    const auto t0 = Clock::now();
    std::vector<double> small, large;
    for (const auto& r : dial_sweep(512, 1, kSizeSteps)) small.push_back(r.mean_point_err);
    for (const auto& r : dial_sweep(1024, 1, kSizeSteps)) large.push_back(r.mean_point_err);
    const double tau = kendall_tau(small, large);
    return {tau == 1.0, fmt("point error d=512 {%s}, d=1024 {%s}; Kendall tau %.2f; %.0fs",
                            join(small, "%.4f").c_str(), join(large, "%.4f").c_str(), tau, seconds_since(t0))};
}

// --- determinism ----------------------------------------------------------------

std::vector<char> tree_bytes(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<char> out;
    for (const auto& f : files) {
        const auto rel = fs::relative(f, root).string();
        out.insert(out.end(), rel.begin(), rel.end());
        std::ifstream in(f, std::ios::binary);
        out.insert(out.end(), std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    return out;
}

Outcome determinism() {
    const auto t0 = Clock::now();
    const auto root = fs::temp_directory_path() / "vidprobe_acceptance_determinism";
    fs::remove_all(root);
    vp::OracleConfig o = base_oracle();
    o.noise = 0.1;
    o.decorrelation = 0.1;
    const auto probe = probe_for(o, 64, 2);
    std::vector<std::vector<char>> checkpoints, datasets;
    std::vector<std::string> reports;
    for (int run = 0; run < 2; ++run) {
        const auto dir = root / ("run" + std::to_string(run));
        vp::build_oracle_dataset(12, 0.75, o, dir / "data");
        datasets.push_back(tree_bytes(dir / "data"));
        const auto train = vp::load_split(vp::read_manifest(dir / "data" / "train.manifest"), dir / "data", "oracle");
        const auto test = vp::load_split(vp::read_manifest(dir / "data" / "test.manifest"), dir / "data", "oracle");
        vp::TrainOutput out;
        out.dir = dir / "train";
        const auto result = vp::train_probe(train, probe, train_config(40, 1e-3, 4, 5), out);
        checkpoints.push_back(tree_bytes(out.dir));
        reports.push_back(vp::report_to_json(vp::evaluate_probe(result.params, probe, test, metrics_config())));
    }
    fs::remove_all(root);
    const bool pass = datasets[0] == datasets[1] && checkpoints[0] == checkpoints[1] && reports[0] == reports[1];
    return {pass, fmt("dataset %s, checkpoints+log %s (%zu bytes), report %s; %.1fs",
                      datasets[0] == datasets[1] ? "identical" : "DIFFER",
                      checkpoints[0] == checkpoints[1] ? "identical" : "DIFFER", checkpoints[0].size(),
                      reports[0] == reports[1] ? "identical" : "DIFFER", seconds_since(t0))};
}

struct Criterion {
    const char* name;
    Outcome (*run)();
};

const Criterion kCriteria[] = {
    {"geometry", geometry_suite},
    {"auc-exactness", auc_exactness},
    {"gradient-check", gradient_check},
    {"closed-loop", closed_loop},
    {"monotonicity", monotonicity},
    {"correspondence", correspondence_sanity},
    {"probe-size", probe_size_ordering},
    {"determinism", determinism},
};

}  // namespace

int main(int argc, char** argv) {
    std::set<std::string> only;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--list") == 0) {
            for (const auto& c : kCriteria) std::printf("%s\n", c.name);
            return 0;
        }
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
            std::stringstream names(argv[++i]);
            for (std::string n; std::getline(names, n, ',');) only.insert(n);
            continue;
        }
        std::fprintf(stderr, "usage: %s [--only NAME[,NAME...]] [--list]\n", argv[0]);
        return 2;
    }
    int failed = 0;
    for (const auto& c : kCriteria) {
        if (!only.empty() && !only.contains(c.name)) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return std::min(failed, 255);
}
