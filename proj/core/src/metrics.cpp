// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vidprobe/error.hpp"
#include "vidprobe/trainer.hpp"

namespace vidprobe {

namespace {

struct Clouds {
    std::vector<Vec3> pred;
    std::vector<Vec3> gt;
    std::vector<double> pred_depth;
    std::vector<double> gt_depth;
};

Clouds valid_clouds(const Prediction& pred, const SceneAnnotation& gt) {
    const int frames = gt.frame_count();
    if (static_cast<int>(pred.points.size()) != frames || static_cast<int>(pred.depth.size()) != frames) {
        throw Error(ErrorCode::kShape, "prediction has " + std::to_string(pred.points.size()) +
                                           " frames, annotation has " + std::to_string(frames));
    }
    Clouds c;
    const std::size_t pixels = gt.pixels();
    for (int f = 0; f < frames; ++f) {
        const auto& pp = pred.points[static_cast<std::size_t>(f)];
        const auto& pd = pred.depth[static_cast<std::size_t>(f)];
        if (pp.size() != pixels * 3 || pd.size() != pixels) {
            throw Error(ErrorCode::kShape, "prediction resolution does not match the annotation");
        }
        const auto gp = gt.points_of(f);
        const auto gd = gt.depth_of(f);
        const auto mask = gt.mask_of(f);
        for (std::size_t p = 0; p < pixels; ++p) {
            if (!mask[p]) continue;
            c.pred.emplace_back(pp[3 * p], pp[3 * p + 1], pp[3 * p + 2]);
            c.gt.emplace_back(gp[3 * p], gp[3 * p + 1], gp[3 * p + 2]);
            c.pred_depth.push_back(pd[p]);
            c.gt_depth.push_back(gd[p]);
        }
    }
    if (c.gt.size() < 3) {
        throw Error(ErrorCode::kDegenerate, "scene has " + std::to_string(c.gt.size()) + " valid points, need 3");
    }
    return c;
}

double mean_norm(const std::vector<Vec3>& cloud) {
    double s = 0.0;
    for (const auto& x : cloud) s += x.norm();
    return s / static_cast<double>(cloud.size());
}

double checked_scale(const std::vector<Vec3>& cloud, const char* what) {
    const double s = mean_norm(cloud);
    if (!(s > 0.0) || !std::isfinite(s)) {
        throw Error(ErrorCode::kDegenerate, std::string(what) + " cloud has zero mean norm");
    }
    return s;
}

}  // namespace

Prediction decode_outputs(const ProbeOutputs<float>& outputs) {
    Prediction p;
    for (const auto& m : outputs.points) {
        p.points.emplace_back(m.data(), m.data() + m.size());
    }
    for (const auto& m : outputs.depth) {
        p.depth.emplace_back(m.data(), m.data() + m.size());
    }
    p.poses.push_back(PoseSE3::identity());
    for (Eigen::Index r = 0; r < outputs.pose.rows(); ++r) {
        PoseSE3 g;
        g.rotation = rotation_from_quaternion({outputs.pose(r, 0), outputs.pose(r, 1), outputs.pose(r, 2),
                                               outputs.pose(r, 3)});
        g.translation = Vec3(outputs.pose(r, 4), outputs.pose(r, 5), outputs.pose(r, 6));
        p.poses.push_back(g);
    }
    return p;
}

double point_error(const Prediction& pred, const SceneAnnotation& gt, bool with_scale) {
    Clouds c = valid_clouds(pred, gt);
    const double sp = checked_scale(c.pred, "predicted");
    const double sg = checked_scale(c.gt, "ground-truth");
    for (auto& x : c.pred) x /= sp;
    for (auto& x : c.gt) x /= sg;
    const Similarity sim = umeyama_align(c.pred, c.gt, with_scale);
    double sum = 0.0;
    for (std::size_t i = 0; i < c.pred.size(); ++i) sum += (sim.apply(c.pred[i]) - c.gt[i]).norm();
    return sum / static_cast<double>(c.pred.size());
}

double depth_error(const Prediction& pred, const SceneAnnotation& gt) {
    const Clouds c = valid_clouds(pred, gt);
    const double sp = checked_scale(c.pred, "predicted");
    const double sg = checked_scale(c.gt, "ground-truth");
    double sum = 0.0;
    for (std::size_t i = 0; i < c.gt_depth.size(); ++i) sum += std::abs(c.pred_depth[i] / sp - c.gt_depth[i] / sg);
    return sum / static_cast<double>(c.gt_depth.size());
}

std::vector<PoseError> pairwise_pose_errors(std::span<const PoseSE3> pred, std::span<const PoseSE3> gt) {
    if (pred.size() != gt.size()) {
        throw Error(ErrorCode::kShape, "pose lists differ in length: " + std::to_string(pred.size()) + " vs " +
                                           std::to_string(gt.size()));
    }
    std::vector<PoseError> out;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (std::size_t j = i + 1; j < pred.size(); ++j) {
            const PoseSE3 rp = relative_pose(pred[i], pred[j]);
            const PoseSE3 rg = relative_pose(gt[i], gt[j]);
            const TranslationAngle ta = translation_angle_deg(rp.translation, rg.translation);
            out.push_back({so3_geodesic_deg(rp.rotation, rg.rotation), ta.degrees, ta.excluded});
        }
    }
    return out;
}

std::vector<double> joint_accuracy_curve(std::span<const PoseError> errors, std::span<const double> thetas) {
    std::vector<double> joint;
    for (const auto& e : errors) {
        if (!e.excluded) joint.push_back(e.joint());
    }
    if (joint.empty()) throw Error(ErrorCode::kDegenerate, "no non-excluded pose pairs");
    const double n = static_cast<double>(joint.size());
    std::vector<double> out;
    for (double theta : thetas) {
        const auto hits = std::count_if(joint.begin(), joint.end(), [theta](double e) { return e <= theta; });
        out.push_back(static_cast<double>(hits) / n);
    }
    return out;
}

double pose_auc(std::span<const PoseError> errors, double theta_max, double step) {
    if (!(theta_max > 0) || !(step > 0)) throw Error(ErrorCode::kConfig, "pose_auc: theta and step must be positive");
    std::vector<double> joint;
    for (const auto& e : errors) {
        if (!e.excluded) joint.push_back(e.joint());
    }
    if (joint.empty()) throw Error(ErrorCode::kDegenerate, "no non-excluded pose pairs");
    std::sort(joint.begin(), joint.end());
    const double n = static_cast<double>(joint.size());
    const long long k_max = std::llround(theta_max / step);
    double sum = 0.0;
    std::size_t hits = 0;
    for (long long k = 1; k <= k_max; ++k) {
        const double theta = static_cast<double>(k) * step;
        while (hits < joint.size() && joint[hits] <= theta) ++hits;
        sum += static_cast<double>(hits) / n;
    }
    return sum / static_cast<double>(k_max);
}

CorrespondenceResult correspondence_error(const FeatureGrid& a, const FeatureGrid& b, const SceneAnnotation& gt,
                                          int pos_a, int pos_b, int n_anchors, Rng& rng, NnMetric metric,
                                          double occlusion_tolerance) {
    if (a.channels != b.channels || a.grid_h != b.grid_h || a.grid_w != b.grid_w) {
        throw Error(ErrorCode::kShape, "correspondence: feature grids differ between views");
    }
    const int c = a.channels;
    const int gh = a.grid_h;
    const int gw = a.grid_w;
    const std::size_t cells = static_cast<std::size_t>(gh) * gw;
    if (a.values.size() != cells * c || b.values.size() != cells * c) {
        throw Error(ErrorCode::kShape, "correspondence: feature size does not match C x H_f x W_f");
    }
    if (gt.height % gh != 0 || gt.width % gw != 0 || gt.height / gh != gt.width / gw) {
        throw Error(ErrorCode::kShape, "correspondence: video grid is not an integer multiple of the feature grid");
    }
    const int r = gt.height / gh;
    const int h = gt.height;
    const int w = gt.width;

    auto cell_vectors = [&](std::span<const float> v) {
        Matrix<double> m(static_cast<Eigen::Index>(cells), c);
        for (int ch = 0; ch < c; ++ch) {
            for (std::size_t s = 0; s < cells; ++s) m(static_cast<Eigen::Index>(s), ch) = v[ch * cells + s];
        }
        if (metric == NnMetric::kCosine) {
            for (Eigen::Index s = 0; s < m.rows(); ++s) {
                const double norm = m.row(s).norm();
                if (norm > 0) m.row(s) /= norm;
            }
        }
        return m;
    };
    const Matrix<double> fa = cell_vectors(a.values);
    const Matrix<double> fb = cell_vectors(b.values);

    std::vector<std::size_t> valid;
    const auto mask_a = gt.mask_of(pos_a);
    for (std::size_t p = 0; p < gt.pixels(); ++p) {
        if (mask_a[p]) valid.push_back(p);
    }
    const std::size_t take = std::min(valid.size(), static_cast<std::size_t>(std::max(0, n_anchors)));
    for (std::size_t i = 0; i < take; ++i) {
        std::swap(valid[i], valid[i + rng.below(valid.size() - i)]);
    }
    valid.resize(take);

    const PoseSE3 g_ab = relative_pose(gt.poses[static_cast<std::size_t>(pos_a)], gt.poses[static_cast<std::size_t>(pos_b)]);
    const auto& k_a = gt.intrinsics[static_cast<std::size_t>(pos_a)];
    const auto& k_b = gt.intrinsics[static_cast<std::size_t>(pos_b)];
    const auto depth_a = gt.depth_of(pos_a);
    const auto depth_b = gt.depth_of(pos_b);
    const auto mask_b = gt.mask_of(pos_b);

    CorrespondenceResult out;
    double sum = 0.0;
    for (std::size_t p : valid) {
        const int u = static_cast<int>(p % w);
        const int v = static_cast<int>(p / w);
        const Reprojection rp = reproject_pixel(Vec2(u, v), depth_a[p], k_a, k_b, g_ab);
        if (!(rp.depth > 0)) continue;
        const long long ub = std::llround(rp.pixel.x());
        const long long vb = std::llround(rp.pixel.y());
        if (ub < 0 || vb < 0 || ub >= w || vb >= h) continue;
        const std::size_t q = static_cast<std::size_t>(vb) * w + static_cast<std::size_t>(ub);
        if (!mask_b[q] || std::abs(rp.depth - depth_b[q]) > occlusion_tolerance * depth_b[q]) continue;

        const auto query = fa.row(static_cast<Eigen::Index>((v / r) * gw + u / r));
        Eigen::Index best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (Eigen::Index s = 0; s < fb.rows(); ++s) {
            const double score =
                metric == NnMetric::kCosine ? fb.row(s).dot(query) : -(fb.row(s) - query).squaredNorm();
            if (score > best_score) {
                best_score = score;
                best = s;
            }
        }
        const double offset = 0.5 * (r - 1);
        const Vec2 predicted(static_cast<double>(best % gw) * r + offset, static_cast<double>(best / gw) * r + offset);
        sum += (predicted - rp.pixel).norm();
        out.targets.push_back(rp.pixel);
    }
    out.anchors = static_cast<int>(out.targets.size());
    if (out.anchors == 0) throw Error(ErrorCode::kNoOverlap, "no anchor survives reprojection into the second view");
    out.error = sum / out.anchors;
    return out;
}

void MetricsReport::aggregate() {
    if (scenes.empty()) throw Error(ErrorCode::kEmptyReport, "report has no scenes");
    const double n = static_cast<double>(scenes.size());
    mean_point_err = 0.0;
    mean_depth_err = 0.0;
    mean_auc.assign(thetas.size(), 0.0);
    double corr = 0.0;
    correspondence_scenes = 0;
    for (const auto& s : scenes) {
        mean_point_err += s.point_err;
        mean_depth_err += s.depth_err;
        for (std::size_t k = 0; k < thetas.size(); ++k) mean_auc[k] += s.auc.at(k);
        if (s.correspondence_err) {
            corr += *s.correspondence_err;
            ++correspondence_scenes;
        }
    }
    mean_point_err /= n;
    mean_depth_err /= n;
    for (double& v : mean_auc) v /= n;
    mean_correspondence_err.reset();
    if (correspondence_scenes > 0) mean_correspondence_err = corr / correspondence_scenes;
}

SceneMetrics evaluate_prediction(const Prediction& pred, const SceneAnnotation& gt, const MetricsConfig& config) {
    SceneMetrics m;
    m.point_err = point_error(pred, gt, config.umeyama_scale);
    m.depth_err = depth_error(pred, gt);
    m.pose_errors = pairwise_pose_errors(pred.poses, gt.poses);
    for (double theta : config.thetas) m.auc.push_back(pose_auc(m.pose_errors, theta));
    return m;
}

MetricsReport evaluate_probe(const ParameterSet<float>& params, const ProbeConfig& probe,
                             std::span<const SceneRecord> scenes, const MetricsConfig& config,
                             const std::string& backbone) {
    if (scenes.empty()) throw Error(ErrorCode::kEmptyReport, "evaluate_probe: no scenes to evaluate");
    const ProbeModel<float> model(probe);
    MetricsReport report;
    report.backbone = backbone;
    report.thetas = config.thetas;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const SceneRecord& scene = scenes[i];
        const auto positions = eval_frames(scene.annotation.frame_count(), config.frames, config.gap);
        std::vector<int> raw;
        for (int p : positions) raw.push_back(scene.annotation.frame_ids.at(static_cast<std::size_t>(p)));
        const SceneAnnotation gt = scene.annotation.select(raw);
        const auto features = gather_features(scene.clip, raw);
        const Prediction pred = decode_outputs(model.forward(features, params));
        SceneMetrics m = evaluate_prediction(pred, gt, config);
        m.video_id = scene.video_id;
        if (config.correspondence) {
            Rng rng(derive_seed(config.seed, i));
            const std::size_t fs = scene.clip.frame_size();
            const FeatureGrid fa{std::span<const float>(features).subspan(0, fs), scene.clip.channels,
                                 scene.clip.grid_h, scene.clip.grid_w};
            const FeatureGrid fb{std::span<const float>(features).subspan(fs, fs), scene.clip.channels,
                                 scene.clip.grid_h, scene.clip.grid_w};
            try {
                m.correspondence_err =
                    correspondence_error(fa, fb, gt, 0, 1, config.n_anchors, rng, config.nn_metric,
                                         config.occlusion_tolerance)
                        .error;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::kNoOverlap) throw;
            }
        }
        report.scenes.push_back(std::move(m));
    }
    report.aggregate();
    return report;
}

}  // namespace vidprobe
