// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidprobe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "vidprobe/checkpoint.hpp"
#include "vidprobe/error.hpp"

namespace vidprobe {

namespace {

void check_frames(std::size_t pred_frames, const SceneAnnotation& gt, Eigen::Index rows) {
    if (static_cast<int>(pred_frames) != gt.frame_count()) {
        throw Error(ErrorCode::kShape, "prediction has " + std::to_string(pred_frames) + " frames, target has " +
                                           std::to_string(gt.frame_count()));
    }
    if (static_cast<std::size_t>(rows) != gt.pixels()) {
        throw Error(ErrorCode::kShape, "prediction has " + std::to_string(rows) + " pixels per frame, target has " +
                                           std::to_string(gt.pixels()));
    }
}

template <class T, class Target>
T weighted_l2(const std::vector<Matrix<T>>& pred, const SceneAnnotation& gt, int channels, Target target,
              std::vector<Matrix<T>>* grad, const char* what) {
    if (pred.empty()) throw Error(ErrorCode::kShape, std::string(what) + ": no frames");
    check_frames(pred.size(), gt, pred.front().rows());
    double weight = 0.0;
    double sum = 0.0;
    const std::size_t pixels = gt.pixels();
    for (std::size_t f = 0; f < pred.size(); ++f) {
        const auto conf = gt.confidence_of(static_cast<int>(f));
        const auto mask = gt.mask_of(static_cast<int>(f));
        for (std::size_t p = 0; p < pixels; ++p) {
            if (!mask[p] || !(conf[p] > 0.0)) continue;
            weight += conf[p];
            double e2 = 0.0;
            for (int k = 0; k < channels; ++k) {
                const double d = static_cast<double>(pred[f](static_cast<Eigen::Index>(p), k)) - target(f, p, k);
                e2 += d * d;
            }
            sum += conf[p] * e2;
        }
    }
    if (!(weight > 0.0)) throw Error(ErrorCode::kEmptyLoss, std::string(what) + ": no confident valid pixels");
    if (grad) {
        grad->resize(pred.size());
        for (std::size_t f = 0; f < pred.size(); ++f) {
            auto& g = (*grad)[f];
            g = Matrix<T>::Zero(pred[f].rows(), pred[f].cols());
            const auto conf = gt.confidence_of(static_cast<int>(f));
            const auto mask = gt.mask_of(static_cast<int>(f));
            for (std::size_t p = 0; p < pixels; ++p) {
                if (!mask[p] || !(conf[p] > 0.0)) continue;
                const double s = 2.0 * conf[p] / weight;
                for (int k = 0; k < channels; ++k) {
                    const auto row = static_cast<Eigen::Index>(p);
                    g(row, k) = static_cast<T>(s * (static_cast<double>(pred[f](row, k)) - target(f, p, k)));
                }
            }
        }
    }
    return static_cast<T>(sum / weight);
}

}  // namespace

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, "train config: " + msg); };
    if (lambda_pmap < 0 || lambda_depth < 0 || lambda_cam < 0) fail("loss weights must be >= 0");
    if (!(huber_delta > 0)) fail("huber delta must be positive");
    if (frames < 2) fail("frames must be >= 2");
    if (gap < 1) fail("gap must be >= 1");
    if (steps < 0) fail("steps must be >= 0");
    if (batch_size < 1) fail("batch size must be >= 1");
    if (!(learning_rate > 0) || min_learning_rate < 0) fail("learning rates must be positive");
    if (warmup_steps < 0) fail("warmup must be >= 0");
    if (!(data_fraction > 0.0 && data_fraction <= 1.0)) fail("data fraction must be in (0, 1]");
    if (log_every < 1) fail("log_every must be >= 1");
    if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
}

void TrainConfig::to_record(KvRecord& r, const std::string& p) const {
    r.set(p + "lambda_pmap", lambda_pmap)
        .set(p + "lambda_depth", lambda_depth)
        .set(p + "lambda_cam", lambda_cam)
        .set(p + "huber_delta", huber_delta)
        .set(p + "frames", frames)
        .set(p + "gap", gap)
        .set(p + "steps", steps)
        .set(p + "batch_size", batch_size)
        .set(p + "learning_rate", learning_rate)
        .set(p + "min_learning_rate", min_learning_rate)
        .set(p + "warmup_steps", warmup_steps)
        .set(p + "weight_decay", weight_decay)
        .set(p + "grad_clip", grad_clip)
        .set(p + "beta1", beta1)
        .set(p + "beta2", beta2)
        .set(p + "adam_eps", adam_eps)
        .set(p + "seed", seed)
        .set(p + "data_fraction", data_fraction)
        .set(p + "log_every", log_every)
        .set(p + "checkpoint_every", checkpoint_every);
}

TrainConfig TrainConfig::from_record(const KvRecord& r, const std::string& p) {
    TrainConfig c;
    auto dbl = [&](const char* key, double& field) {
        if (const auto* v = r.find(p + key)) field = parse_double(*v);
    };
    auto num = [&](const char* key, int& field) {
        if (const auto* v = r.find(p + key)) field = static_cast<int>(parse_int(*v));
    };
    dbl("lambda_pmap", c.lambda_pmap);
    dbl("lambda_depth", c.lambda_depth);
    dbl("lambda_cam", c.lambda_cam);
    dbl("huber_delta", c.huber_delta);
    num("frames", c.frames);
    num("gap", c.gap);
    num("steps", c.steps);
    num("batch_size", c.batch_size);
    dbl("learning_rate", c.learning_rate);
    dbl("min_learning_rate", c.min_learning_rate);
    num("warmup_steps", c.warmup_steps);
    dbl("weight_decay", c.weight_decay);
    dbl("grad_clip", c.grad_clip);
    dbl("beta1", c.beta1);
    dbl("beta2", c.beta2);
    dbl("adam_eps", c.adam_eps);
    if (const auto* v = r.find(p + "seed")) c.seed = parse_uint(*v);
    dbl("data_fraction", c.data_fraction);
    num("log_every", c.log_every);
    num("checkpoint_every", c.checkpoint_every);
    return c;
}

std::vector<int> sample_frames(int frame_count, int frames, int gap, Rng& rng) {
    if (frames < 1 || gap < 1) throw Error(ErrorCode::kConfig, "sample_frames: frames and gap must be >= 1");
    const long long needed = 1 + static_cast<long long>(frames - 1) * gap;
    if (frame_count < needed) {
        throw Error(ErrorCode::kInsufficientFrames, "video has " + std::to_string(frame_count) + " frames, need " +
                                                        std::to_string(needed) + " for " + std::to_string(frames) +
                                                        " frames with gap " + std::to_string(gap));
    }
    // Stars and bars: S-1 distinct values u in [1, M] map to t_i = u_i + i (gap - 1).
    const int m = frame_count - 1 - (frames - 1) * (gap - 1);
    std::vector<int> pool(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) pool[static_cast<std::size_t>(i)] = i + 1;
    for (int i = 0; i < frames - 1; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(m - i));
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    std::sort(pool.begin(), pool.begin() + (frames - 1));
    std::vector<int> out{0};
    for (int i = 1; i < frames; ++i) out.push_back(pool[static_cast<std::size_t>(i - 1)] + i * (gap - 1));
    return out;
}

std::vector<int> eval_frames(int frame_count, int frames, int gap) {
    if (frame_count < 1 + (frames - 1) * gap) {
        throw Error(ErrorCode::kInsufficientFrames, "video has " + std::to_string(frame_count) +
                                                        " frames, too few for evaluation with gap " +
                                                        std::to_string(gap));
    }
    std::vector<int> out;
    for (int i = 0; i < frames; ++i) out.push_back(i * gap);
    return out;
}

template <class T>
T pointmap_loss(const std::vector<Matrix<T>>& pred, const SceneAnnotation& gt, std::vector<Matrix<T>>* grad) {
    return weighted_l2(
        pred, gt, 3, [&](std::size_t f, std::size_t p, int k) { return gt.points_of(static_cast<int>(f))[p * 3 + k]; },
        grad, "pointmap_loss");
}

template <class T>
T depth_loss(const std::vector<Matrix<T>>& pred, const SceneAnnotation& gt, std::vector<Matrix<T>>* grad) {
    return weighted_l2(
        pred, gt, 1, [&](std::size_t f, std::size_t p, int) { return gt.depth_of(static_cast<int>(f))[p]; }, grad,
        "depth_loss");
}

Matrix<double> encode_poses(const SceneAnnotation& gt) {
    const int s = gt.frame_count();
    Matrix<double> out(std::max(0, s - 1), 7);
    for (int i = 1; i < s; ++i) {
        const auto& g = gt.poses[static_cast<std::size_t>(i)];
        const auto q = quaternion_from_rotation(g.rotation);
        for (int k = 0; k < 4; ++k) out(i - 1, k) = q[static_cast<std::size_t>(k)];
        for (int k = 0; k < 3; ++k) out(i - 1, 4 + k) = g.translation(k);
    }
    return out;
}

template <class T>
T camera_loss(const Matrix<T>& pred, const SceneAnnotation& gt, double delta, Matrix<T>* grad) {
    const Matrix<double> target = encode_poses(gt);
    if (pred.rows() != target.rows() || pred.cols() != 7) {
        throw Error(ErrorCode::kShape, "camera_loss: prediction is " + std::to_string(pred.rows()) + "x" +
                                           std::to_string(pred.cols()) + ", expected " +
                                           std::to_string(target.rows()) + "x7");
    }
    const double n = static_cast<double>(target.size());
    if (n == 0) throw Error(ErrorCode::kEmptyLoss, "camera_loss: no non-reference frames");
    if (grad) grad->resize(pred.rows(), 7);
    double sum = 0.0;
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
        for (int k = 0; k < 7; ++k) {
            const double e = static_cast<double>(pred(r, k)) - target(r, k);
            const double a = std::abs(e);
            double d = 0.0;
            if (a <= delta) {
                sum += 0.5 * e * e;
                d = e;
            } else {
                sum += delta * (a - 0.5 * delta);
                d = e > 0 ? delta : -delta;
            }
            if (grad) (*grad)(r, k) = static_cast<T>(d / n);
        }
    }
    return static_cast<T>(sum / n);
}

template <class T>
LossBreakdown total_loss(const ProbeOutputs<T>& outputs, const SceneAnnotation& target, const TrainConfig& config,
                         ProbeOutputs<T>* grad) {
    LossBreakdown out;
    ProbeOutputs<T> g;
    out.pmap = static_cast<double>(pointmap_loss(outputs.points, target, grad ? &g.points : nullptr));
    out.depth = static_cast<double>(depth_loss(outputs.depth, target, grad ? &g.depth : nullptr));
    out.cam = static_cast<double>(camera_loss(outputs.pose, target, config.huber_delta, grad ? &g.pose : nullptr));
    out.total = config.lambda_pmap * out.pmap + config.lambda_depth * out.depth + config.lambda_cam * out.cam;
    if (grad) {
        for (auto& m : g.points) m *= static_cast<T>(config.lambda_pmap);
        for (auto& m : g.depth) m *= static_cast<T>(config.lambda_depth);
        g.pose *= static_cast<T>(config.lambda_cam);
        *grad = std::move(g);
    }
    return out;
}

TrainSample make_sample(const SceneRecord& scene, std::span<const int> frames) {
    if (frames.empty() || frames.front() != 0) {
        throw Error(ErrorCode::kInvariant, "sample frames must start with the reference frame 0");
    }
    TrainSample s;
    s.features = gather_features(scene.clip, frames);
    s.target = normalize_scene(scene.annotation.select(frames)).scene;
    return s;
}

double learning_rate_at(const TrainConfig& c, int step) {
    if (step < c.warmup_steps) return c.learning_rate * (step + 1) / c.warmup_steps;
    const int span = std::max(1, c.steps - c.warmup_steps);
    const double progress = std::min(1.0, static_cast<double>(step - c.warmup_steps) / span);
    return c.min_learning_rate +
           0.5 * (c.learning_rate - c.min_learning_rate) * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(const TrainConfig& config, const ParameterSet<float>& params)
    : config_(config), m_(zeros_like(params)), v_(zeros_like(params)) {
    params.visit([this](const std::string& name, const Matrix<float>&) {
        decay_.push_back(name.size() >= 7 && name.compare(name.size() - 7, 7, ".weight") == 0);
    });
}

void AdamW::step(ParameterSet<float>& params, const ParameterSet<float>& grad, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, t_);
    const double bc2 = 1.0 - std::pow(config_.beta2, t_);
    std::vector<Matrix<float>*> ps, ms, vs;
    std::vector<const Matrix<float>*> gs;
    params.visit([&](const std::string&, Matrix<float>& m) { ps.push_back(&m); });
    m_.visit([&](const std::string&, Matrix<float>& m) { ms.push_back(&m); });
    v_.visit([&](const std::string&, Matrix<float>& m) { vs.push_back(&m); });
    grad.visit([&](const std::string&, const Matrix<float>& m) { gs.push_back(&m); });
    const float b1 = static_cast<float>(config_.beta1);
    const float b2 = static_cast<float>(config_.beta2);
    const float step_size = static_cast<float>(lr / bc1);
    const float inv_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
    const float eps = static_cast<float>(config_.adam_eps);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto p = ps[i]->array();
        auto m = ms[i]->array();
        auto v = vs[i]->array();
        const auto g = gs[i]->array();
        if (decay_[i]) p *= static_cast<float>(1.0 - lr * config_.weight_decay);
        m = b1 * m + (1.0f - b1) * g;
        v = b2 * v + (1.0f - b2) * g.square();
        p -= step_size * m / (v.sqrt() * inv_bc2 + eps);
    }
}

double clip_grad_norm(ParameterSet<float>& grad, double max_norm) {
    double sq = 0.0;
    grad.visit([&sq](const std::string&, const Matrix<float>& m) { sq += m.template cast<double>().squaredNorm(); });
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const float s = static_cast<float>(max_norm / norm);
        grad.visit([s](const std::string&, Matrix<float>& m) { m *= s; });
    }
    return norm;
}

std::string format_log_entry(const TrainLogEntry& e) {
    nlohmann::ordered_json j;
    j["step"] = e.step;
    j["loss"] = e.loss.total;
    j["pmap"] = e.loss.pmap;
    j["depth"] = e.loss.depth;
    j["cam"] = e.loss.cam;
    j["lr"] = e.learning_rate;
    j["grad_norm"] = e.grad_norm;
    return j.dump();
}

TrainResult train_probe(std::span<const SceneRecord> scenes, const ProbeConfig& probe, const TrainConfig& train,
                        const TrainOutput& output) {
    probe.validate();
    train.validate();
    if (scenes.empty()) throw Error(ErrorCode::kEmptySplit, "train_probe: no training scenes");
    if (probe.frames != train.frames) {
        throw Error(ErrorCode::kConfig, "probe frames " + std::to_string(probe.frames) + " != train frames " +
                                            std::to_string(train.frames));
    }
    TrainResult result;
    result.scene_indices = subsample_indices(scenes.size(), train.data_fraction, derive_seed(train.seed, 1));
    const std::uint64_t init_seed = derive_seed(train.seed, 0);
    result.params = init_parameters<float>(probe, init_seed);

    const ProbeModel<float> model(probe);
    AdamW optimizer(train, result.params);
    ParameterSet<float> grad = zeros_like(result.params);
    Rng rng(derive_seed(train.seed, 2));
    std::vector<std::size_t> order;
    std::size_t cursor = 0;

    std::ofstream log_file;
    if (!output.dir.empty()) {
        std::filesystem::create_directories(output.dir);
        log_file.open(output.dir / "train_log.jsonl", std::ios::binary | std::ios::trunc);
        if (!log_file) throw Error(ErrorCode::kIo, "cannot write " + (output.dir / "train_log.jsonl").string());
    }
    auto save = [&](int step) {
        if (output.dir.empty()) return;
        save_checkpoint(result.params, CheckpointInfo{output.backbone, step, init_seed, probe},
                        output.dir / checkpoint_name(output.backbone, step));
    };

    ProbeTape<float> tape;
    ProbeOutputs<float> d_out;
    for (int step = 0; step < train.steps; ++step) {
        grad.set_zero();
        LossBreakdown mean;
        for (int b = 0; b < train.batch_size; ++b) {
            if (cursor == order.size()) {
                order = result.scene_indices;
                rng.shuffle(order);
                cursor = 0;
            }
            const SceneRecord& scene = scenes[order[cursor++]];
            const auto frames = sample_frames(scene.annotation.frame_count(), train.frames, train.gap, rng);
            std::vector<int> raw(frames.size());
            for (std::size_t i = 0; i < frames.size(); ++i) raw[i] = scene.annotation.frame_ids.at(static_cast<std::size_t>(frames[i]));
            const TrainSample sample = make_sample(scene, raw);
            const auto out = model.forward(sample.features, result.params, &tape);
            const LossBreakdown l = total_loss(out, sample.target, train, &d_out);
            model.backward(tape, result.params, d_out, grad);
            mean.pmap += l.pmap;
            mean.depth += l.depth;
            mean.cam += l.cam;
            mean.total += l.total;
        }
        const double inv = 1.0 / train.batch_size;
        mean.pmap *= inv;
        mean.depth *= inv;
        mean.cam *= inv;
        mean.total *= inv;
        grad.visit([inv](const std::string&, Matrix<float>& m) { m *= static_cast<float>(inv); });
        const double norm = clip_grad_norm(grad, train.grad_clip);
        const double lr = learning_rate_at(train, step);
        optimizer.step(result.params, grad, lr);

        const TrainLogEntry entry{step, mean, lr, norm};
        result.log.push_back(entry);
        if (log_file.is_open() && step % train.log_every == 0) log_file << format_log_entry(entry) << '\n';
        if (output.on_step) output.on_step(entry);
        if (train.checkpoint_every > 0 && (step + 1) % train.checkpoint_every == 0 && step + 1 < train.steps) {
            save(step + 1);
        }
    }
    save(train.steps);
    return result;
}

template float pointmap_loss<float>(const std::vector<Matrix<float>>&, const SceneAnnotation&,
                                    std::vector<Matrix<float>>*);
template double pointmap_loss<double>(const std::vector<Matrix<double>>&, const SceneAnnotation&,
                                      std::vector<Matrix<double>>*);
template float depth_loss<float>(const std::vector<Matrix<float>>&, const SceneAnnotation&,
                                 std::vector<Matrix<float>>*);
template double depth_loss<double>(const std::vector<Matrix<double>>&, const SceneAnnotation&,
                                   std::vector<Matrix<double>>*);
template float camera_loss<float>(const Matrix<float>&, const SceneAnnotation&, double, Matrix<float>*);
template double camera_loss<double>(const Matrix<double>&, const SceneAnnotation&, double, Matrix<double>*);
template LossBreakdown total_loss<float>(const ProbeOutputs<float>&, const SceneAnnotation&, const TrainConfig&,
                                         ProbeOutputs<float>*);
template LossBreakdown total_loss<double>(const ProbeOutputs<double>&, const SceneAnnotation&, const TrainConfig&,
                                          ProbeOutputs<double>*);

}  // namespace vidprobe
