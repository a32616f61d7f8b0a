// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidprobe/dataset.hpp"
#include "vidprobe/geometry.hpp"
#include "vidprobe/probe_model.hpp"
#include "vidprobe/random.hpp"
#include "vidprobe/scene.hpp"

namespace vidprobe {

inline constexpr double kAucStepDeg = 0.1;

enum class NnMetric { kCosine, kEuclidean };

struct MetricsConfig {
    std::vector<double> thetas{5.0, 30.0};
    bool umeyama_scale = true;
    bool correspondence = true;
    int n_anchors = 256;
    double occlusion_tolerance = 0.05;
    NnMetric nn_metric = NnMetric::kCosine;
    std::uint64_t seed = 0;
    int frames = 4;
    int gap = 5;

    bool operator==(const MetricsConfig&) const = default;
};

/// Decoded probe output for S frames. poses[0] is the identity.
struct Prediction {
    std::vector<std::vector<double>> points;  // per frame, H * W * 3
    std::vector<std::vector<double>> depth;   // per frame, H * W
    std::vector<PoseSE3> poses;
};

Prediction decode_outputs(const ProbeOutputs<float>& outputs);

/// Valid pixels of all frames stacked into one cloud; each source scaled to
/// unit mean norm, prediction aligned onto ground truth, mean residual.
/// Throws kDegenerate with fewer than 3 valid points.
double point_error(const Prediction& pred, const SceneAnnotation& gt, bool with_scale = true);

/// Mean |D_pred / s_pred - D_gt / s_gt| over valid pixels, each scale taken
/// from the matching point cloud.
double depth_error(const Prediction& pred, const SceneAnnotation& gt);

/// Relative pose errors over all pairs i < j.
std::vector<PoseError> pairwise_pose_errors(std::span<const PoseSE3> pred, std::span<const PoseSE3> gt);

/// Fraction of non-excluded pairs with max(e_R, e_T) <= theta, per theta.
/// Throws kDegenerate when every pair is excluded.
std::vector<double> joint_accuracy_curve(std::span<const PoseError> errors, std::span<const double> thetas);

/// Mean joint accuracy over theta in {step, 2 step, ..., theta_max}.
double pose_auc(std::span<const PoseError> errors, double theta_max, double step = kAucStepDeg);

struct FeatureGrid {
    std::span<const float> values;  // C x H_f x W_f
    int channels = 0;
    int grid_h = 0;
    int grid_w = 0;
};

struct CorrespondenceResult {
    double error = 0.0;     // mean pixel distance
    int anchors = 0;        // surviving anchors
    std::vector<Vec2> targets;  // ground-truth pixel of each surviving anchor in view B
};

/// Cross-view correspondence error between stored frames pos_a and pos_b of `gt`.
/// Throws kNoOverlap when no anchor survives reprojection and occlusion tests.
CorrespondenceResult correspondence_error(const FeatureGrid& a, const FeatureGrid& b, const SceneAnnotation& gt,
                                          int pos_a, int pos_b, int n_anchors, Rng& rng,
                                          NnMetric metric = NnMetric::kCosine, double occlusion_tolerance = 0.05);

struct SceneMetrics {
    std::string video_id;
    double point_err = 0.0;
    double depth_err = 0.0;
    std::vector<PoseError> pose_errors;
    std::vector<double> auc;  // parallel to MetricsReport::thetas
    std::optional<double> correspondence_err;
};

struct MetricsReport {
    std::string backbone;
    std::vector<double> thetas;
    std::vector<SceneMetrics> scenes;
    double mean_point_err = 0.0;
    double mean_depth_err = 0.0;
    std::vector<double> mean_auc;
    std::optional<double> mean_correspondence_err;
    int correspondence_scenes = 0;
    bool point_display_x10 = false;

    /// Recomputes the aggregate means from the per-scene records in order.
    void aggregate();
};

SceneMetrics evaluate_prediction(const Prediction& pred, const SceneAnnotation& gt, const MetricsConfig& config);

/// Evaluates on the deterministic frame set of every scene. Throws kEmptyReport for no scenes.
MetricsReport evaluate_probe(const ParameterSet<float>& params, const ProbeConfig& probe,
                             std::span<const SceneRecord> scenes, const MetricsConfig& config,
                             const std::string& backbone = "oracle");

// --- report emission -----------------------------------------------------------------

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);

/// Aligned table with columns Point, Depth and AUC@theta; point error shown x10
/// when the report's display flag is set.
std::string report_to_table(const MetricsReport& report);

/// One row per scene plus a final `mean` row; stored (unscaled) values.
std::string report_to_csv(const MetricsReport& report);

/// Three significant digits.
std::string format_metric(double value);

}  // namespace vidprobe
