// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vidprobe/dataset.hpp"
#include "vidprobe/kv_text.hpp"
#include "vidprobe/probe_model.hpp"
#include "vidprobe/random.hpp"
#include "vidprobe/scene.hpp"

namespace vidprobe {

struct TrainConfig {
    double lambda_pmap = 1.0;
    double lambda_depth = 1.0;
    double lambda_cam = 1.0;
    double huber_delta = 0.1;
    int frames = 4;
    int gap = 5;
    int steps = 1000;
    int batch_size = 4;
    double learning_rate = 1e-4;
    double min_learning_rate = 1e-6;
    int warmup_steps = 500;
    double weight_decay = 0.01;
    double grad_clip = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    double data_fraction = 1.0;
    int log_every = 1;
    int checkpoint_every = 0;  // 0: final checkpoint only

    void validate() const;
    void to_record(KvRecord& record, const std::string& prefix = "train.") const;
    static TrainConfig from_record(const KvRecord& record, const std::string& prefix = "train.");

    bool operator==(const TrainConfig&) const = default;
};

/// Frame 0 plus S-1 frames drawn uniformly among index sets whose pairwise
/// gaps are all >= gap; ascending. Throws kInsufficientFrames when
/// frame_count < 1 + (S-1) * gap.
std::vector<int> sample_frames(int frame_count, int frames, int gap, Rng& rng);

/// Lexicographically smallest feasible set {0, gap, 2 gap, ...}.
std::vector<int> eval_frames(int frame_count, int frames, int gap);

/// Sum of c * |pred - gt|^2 over valid pixels divided by the sum of c.
/// Throws kEmptyLoss when no pixel carries confidence. `grad` (optional)
/// receives d(loss)/d(pred).
template <class T>
T pointmap_loss(const std::vector<Matrix<T>>& pred, const SceneAnnotation& gt, std::vector<Matrix<T>>* grad = nullptr);

template <class T>
T depth_loss(const std::vector<Matrix<T>>& pred, const SceneAnnotation& gt, std::vector<Matrix<T>>* grad = nullptr);

/// Ground-truth pose of every non-reference frame as (qw qx qy qz tx ty tz), qw >= 0.
Matrix<double> encode_poses(const SceneAnnotation& gt);

/// Element-wise Huber averaged over (S-1) x 7 components.
template <class T>
T camera_loss(const Matrix<T>& pred, const SceneAnnotation& gt, double delta, Matrix<T>* grad = nullptr);

struct LossBreakdown {
    double pmap = 0.0;
    double depth = 0.0;
    double cam = 0.0;
    double total = 0.0;
};

/// Weighted multi-task loss against a scene-normalized target.
template <class T>
LossBreakdown total_loss(const ProbeOutputs<T>& outputs, const SceneAnnotation& target, const TrainConfig& config,
                         ProbeOutputs<T>* grad = nullptr);

/// Probe input and normalized target for one scene and frame set.
struct TrainSample {
    std::vector<float> features;
    SceneAnnotation target;
};

TrainSample make_sample(const SceneRecord& scene, std::span<const int> frames);

/// Linear warmup then cosine decay to min_learning_rate.
double learning_rate_at(const TrainConfig& config, int step);

/// Decoupled weight decay Adam. Decay applies to tensors named `*.weight`.
class AdamW {
public:
    AdamW(const TrainConfig& config, const ParameterSet<float>& params);
    void step(ParameterSet<float>& params, const ParameterSet<float>& grad, double lr);

private:
    TrainConfig config_;
    ParameterSet<float> m_;
    ParameterSet<float> v_;
    std::vector<bool> decay_;
    int t_ = 0;
};

/// Scales `grad` so its global norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(ParameterSet<float>& grad, double max_norm);

struct TrainLogEntry {
    int step = 0;
    LossBreakdown loss;
    double learning_rate = 0.0;
    double grad_norm = 0.0;
};

std::string format_log_entry(const TrainLogEntry& entry);

struct TrainOutput {
    std::filesystem::path dir;  // empty: nothing written
    std::string backbone = "oracle";
    std::function<void(const TrainLogEntry&)> on_step;
};

struct TrainResult {
    ParameterSet<float> params;
    std::vector<TrainLogEntry> log;
    std::vector<std::size_t> scene_indices;  // subset of the input used for training
};

/// Fits a fresh probe on `scenes`. Deterministic given the seeds in `train`.
/// Writes `train_log.jsonl` and checkpoint directories under output.dir.
TrainResult train_probe(std::span<const SceneRecord> scenes, const ProbeConfig& probe, const TrainConfig& train,
                        const TrainOutput& output = {});

}  // namespace vidprobe
