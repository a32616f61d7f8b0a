// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidprobe/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "vidprobe/error.hpp"
#include "vidprobe/random.hpp"

namespace vidprobe {

namespace {

constexpr double kRayEps = 1e-9;
constexpr double kCameraClearance = 0.3;
constexpr double kMinCoverage = 0.3;
constexpr double kLinearWeight = 0.15;

enum SeedStream : std::uint64_t { kGeometryStream = 100, kEncoderStream = 200, kCorruptionStream = 300 };

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

std::optional<double> intersect(const Primitive& p, const Vec3& o, const Vec3& d) {
    switch (p.kind) {
        case PrimitiveKind::kSphere: {
            const Vec3 oc = o - p.center;
            const double a = d.squaredNorm();
            const double b = oc.dot(d);
            const double c = oc.squaredNorm() - p.size.x() * p.size.x();
            const double disc = b * b - a * c;
            if (disc < 0) return std::nullopt;
            const double s = std::sqrt(disc);
            const double t0 = (-b - s) / a;
            if (t0 > kRayEps) return t0;
            const double t1 = (-b + s) / a;
            if (t1 > kRayEps) return t1;
            return std::nullopt;
        }
        case PrimitiveKind::kBox: {
            const Vec3 lo = p.rotation.transpose() * (o - p.center);
            const Vec3 ld = p.rotation.transpose() * d;
            double t_near = -std::numeric_limits<double>::infinity();
            double t_far = std::numeric_limits<double>::infinity();
            for (int k = 0; k < 3; ++k) {
                if (std::abs(ld(k)) < 1e-15) {
                    if (std::abs(lo(k)) > p.size(k)) return std::nullopt;
                    continue;
                }
                double t0 = (-p.size(k) - lo(k)) / ld(k);
                double t1 = (p.size(k) - lo(k)) / ld(k);
                if (t0 > t1) std::swap(t0, t1);
                t_near = std::max(t_near, t0);
                t_far = std::min(t_far, t1);
            }
            if (t_near > t_far) return std::nullopt;
            if (t_near > kRayEps) return t_near;
            if (t_far > kRayEps) return t_far;
            return std::nullopt;
        }
        case PrimitiveKind::kDisk: {
            const Vec3 n = p.rotation.col(2);
            const double denom = n.dot(d);
            if (std::abs(denom) < 1e-15) return std::nullopt;
            const double t = n.dot(p.center - o) / denom;
            if (t <= kRayEps) return std::nullopt;
            if ((o + t * d - p.center).norm() > p.size.x()) return std::nullopt;
            return t;
        }
    }
    return std::nullopt;
}

Primitive inflated(Primitive p, double margin) {
    if (p.kind == PrimitiveKind::kDisk) return p;
    p.size += Vec3::Constant(margin);
    return p;
}

Mat3 rotation_about_y(double angle) { return rotation_from_axis_angle(Vec3::UnitY(), angle); }

// Ground disk whose normal points up (world -y; image y points along +y).
Primitive ground(double height, double radius) {
    Primitive g;
    g.kind = PrimitiveKind::kDisk;
    g.center = Vec3(0, height, 0);
    g.rotation = rotation_from_axis_angle(Vec3::UnitX(), 0.5 * std::numbers::pi);
    g.size = Vec3(radius, 0, 0);
    return g;
}

Primitive random_object(Rng& rng, double size_lo, double size_hi) {
    Primitive p;
    p.kind = rng.uniform() < 0.5 ? PrimitiveKind::kSphere : PrimitiveKind::kBox;
    if (p.kind == PrimitiveKind::kSphere) {
        const double r = rng.uniform(size_lo, size_hi);
        p.size = Vec3(r, r, r);
    } else {
        p.size = Vec3(rng.uniform(size_lo, size_hi), rng.uniform(size_lo, size_hi), rng.uniform(size_lo, size_hi));
        p.rotation = rotation_about_y(rng.uniform(0, std::numbers::pi));
    }
    return p;
}

struct Layout {
    std::vector<Primitive> primitives;
    std::vector<Vec3> positions;
    std::vector<Vec3> targets;
};

Layout orbit_layout(const OracleConfig& c, Rng& rng) {
    Layout l;
    const double floor_y = 0.5;
    l.primitives.push_back(ground(floor_y, 3.0));
    for (int k = 0; k < c.primitives; ++k) {
        Primitive p = random_object(rng, 0.15, 0.45);
        const double r = 0.7 * std::sqrt(rng.uniform());
        const double a = rng.uniform(0, 2 * std::numbers::pi);
        p.center = Vec3(r * std::cos(a), floor_y - p.size.y(), r * std::sin(a));
        l.primitives.push_back(p);
    }
    const double radius = rng.uniform(2.6, 3.4);
    const double elevation = deg2rad(rng.uniform(20.0, 35.0));
    const double jitter = deg2rad(rng.uniform(0.0, 4.0));
    const double phase = rng.uniform(0, 2 * std::numbers::pi);
    const double az0 = rng.uniform(0, 2 * std::numbers::pi);
    const double direction = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const Vec3 target(rng.uniform(-0.1, 0.1), rng.uniform(0.0, 0.2), rng.uniform(-0.1, 0.1));
    for (int t = 0; t < c.frames; ++t) {
        const double u = static_cast<double>(t) / c.frames;
        const double az = az0 + direction * 2 * std::numbers::pi * u;
        const double el = elevation + jitter * std::sin(2 * std::numbers::pi * u * 3 + phase);
        l.positions.push_back(target +
                              radius * Vec3(std::cos(el) * std::sin(az), -std::sin(el), std::cos(el) * std::cos(az)));
        l.targets.push_back(target);
    }
    return l;
}

Layout flythrough_layout(const OracleConfig& c, Rng& rng) {
    Layout l;
    const double floor_y = 1.0;
    const double length = 6.0;
    const double sway = rng.uniform(0.3, 0.6);
    const double cycles = rng.uniform(1.0, 2.0);
    const double heading = rng.uniform(0, 2 * std::numbers::pi);
    const Mat3 turn = rotation_about_y(heading);
    l.primitives.push_back(ground(floor_y, 40.0));
    const int objects = 3 * c.primitives;
    for (int k = 0; k < objects; ++k) {
        Primitive p = random_object(rng, 0.25, 0.8);
        // Either side of the corridor swept by the camera path.
        const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const Vec3 local(side * rng.uniform(2.1, 4.0), floor_y - p.size.y(), rng.uniform(1.0, length + 6.0));
        p.center = turn * local;
        p.rotation = turn * p.rotation;
        l.primitives.push_back(p);
    }
    auto path = [&](double z) { return Vec3(sway * std::sin(2 * std::numbers::pi * cycles * z / length), 0.0, z); };
    for (int t = 0; t < c.frames; ++t) {
        const double z = length * t / std::max(1, c.frames - 1);
        const Vec3 p = path(z);
        const Vec3 ahead = path(z + 1.0) + Vec3(0, 0.15, 0);
        l.positions.push_back(turn * p);
        l.targets.push_back(turn * ahead);
    }
    return l;
}

bool layout_ok(const Layout& l) {
    std::vector<Primitive> grown;
    for (const auto& p : l.primitives) grown.push_back(inflated(p, kCameraClearance));
    for (const auto& x : l.positions) {
        if (point_inside(grown, x)) return false;
    }
    return true;
}

struct Encoder {
    Eigen::MatrixXd frequencies;  // F x 3
    Eigen::MatrixXd projection;   // D x C
    std::vector<double> background;
    int dim = 0;
};

Encoder make_encoder(const OracleConfig& c) {
    Rng rng(derive_seed(c.seed, kEncoderStream));
    Encoder e;
    e.dim = 3 + 2 * c.frequencies + c.appearance_dim;
    e.frequencies.resize(c.frequencies, 3);
    for (Eigen::Index i = 0; i < e.frequencies.size(); ++i) e.frequencies.data()[i] = rng.normal() / c.length_scale;
    // Expected squared norm of an encoding: linear part + unit Fourier part + unit appearance.
    const double scale = 1.0 / std::sqrt(kLinearWeight * kLinearWeight * 9.0 + 2.0);
    e.projection.resize(e.dim, c.channels);
    for (Eigen::Index i = 0; i < e.projection.size(); ++i) e.projection.data()[i] = rng.normal() * scale;
    for (int k = 0; k < c.appearance_dim; ++k) e.background.push_back(rng.normal() / std::sqrt(c.appearance_dim));
    return e;
}

}  // namespace

std::string to_string(SceneKind kind) { return kind == SceneKind::kOrbit ? "orbit" : "flythrough"; }

SceneKind parse_scene_kind(std::string_view text) {
    if (text == "orbit") return SceneKind::kOrbit;
    if (text == "flythrough") return SceneKind::kFlythrough;
    throw Error(ErrorCode::kConfig, "unknown scene kind '" + std::string(text) + "' (expected orbit or flythrough)");
}

void OracleConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, "oracle config: " + msg); };
    if (primitives < 1) fail("need at least one primitive");
    if (frames < 1) fail("need at least one frame");
    if (height <= 0 || width <= 0) fail("video size must be positive");
    if (!(fov_deg > 0 && fov_deg < 180)) fail("fov must be in (0, 180)");
    if (grid_h <= 0 || grid_w <= 0 || height % grid_h != 0 || width % grid_w != 0 ||
        height / grid_h != width / grid_w) {
        fail("video size must be the same integer multiple of the feature grid in both axes");
    }
    if (channels <= 0) fail("channels must be positive");
    if (!(noise >= 0)) fail("noise must be >= 0");
    if (!(decorrelation >= 0 && decorrelation <= 1)) fail("decorrelation must be in [0, 1]");
    if (!(dropout >= 0 && dropout < 1)) fail("dropout must be in [0, 1)");
    if (frequencies < 1 || appearance_dim < 1) fail("encoding sizes must be positive");
    if (!(length_scale > 0)) fail("length scale must be positive");
    if (max_retries < 1) fail("max_retries must be >= 1");
}

Intrinsics OracleConfig::intrinsics() const {
    const double f = 0.5 * width / std::tan(0.5 * deg2rad(fov_deg));
    return {f, f, 0.5 * (width - 1), 0.5 * (height - 1)};
}

void OracleConfig::to_record(KvRecord& r, const std::string& p) const {
    r.set(p + "kind", to_string(kind))
        .set(p + "primitives", primitives)
        .set(p + "frames", frames)
        .set(p + "height", height)
        .set(p + "width", width)
        .set(p + "fov_deg", fov_deg)
        .set(p + "grid_h", grid_h)
        .set(p + "grid_w", grid_w)
        .set(p + "channels", channels)
        .set(p + "noise", noise)
        .set(p + "decorrelation", decorrelation)
        .set(p + "dropout", dropout)
        .set(p + "seed", seed)
        .set(p + "frequencies", frequencies)
        .set(p + "length_scale", length_scale)
        .set(p + "appearance_dim", appearance_dim)
        .set(p + "max_retries", max_retries);
}

OracleConfig OracleConfig::from_record(const KvRecord& r, const std::string& p) {
    OracleConfig c;
    auto dbl = [&](const char* key, double& field) {
        if (const auto* v = r.find(p + key)) field = parse_double(*v);
    };
    auto num = [&](const char* key, int& field) {
        if (const auto* v = r.find(p + key)) field = static_cast<int>(parse_int(*v));
    };
    if (const auto* v = r.find(p + "kind")) c.kind = parse_scene_kind(*v);
    num("primitives", c.primitives);
    num("frames", c.frames);
    num("height", c.height);
    num("width", c.width);
    dbl("fov_deg", c.fov_deg);
    num("grid_h", c.grid_h);
    num("grid_w", c.grid_w);
    num("channels", c.channels);
    dbl("noise", c.noise);
    dbl("decorrelation", c.decorrelation);
    dbl("dropout", c.dropout);
    if (const auto* v = r.find(p + "seed")) c.seed = parse_uint(*v);
    num("frequencies", c.frequencies);
    dbl("length_scale", c.length_scale);
    num("appearance_dim", c.appearance_dim);
    num("max_retries", c.max_retries);
    return c;
}

std::optional<RayHit> cast_ray(std::span<const Primitive> primitives, const Vec3& origin, const Vec3& direction) {
    std::optional<RayHit> best;
    for (std::size_t i = 0; i < primitives.size(); ++i) {
        const auto t = intersect(primitives[i], origin, direction);
        if (t && (!best || *t < best->t)) best = RayHit{*t, static_cast<int>(i), origin + *t * direction};
    }
    return best;
}

bool point_inside(std::span<const Primitive> primitives, const Vec3& x) {
    for (const auto& p : primitives) {
        switch (p.kind) {
            case PrimitiveKind::kSphere:
                if ((x - p.center).norm() < p.size.x()) return true;
                break;
            case PrimitiveKind::kBox: {
                const Vec3 l = p.rotation.transpose() * (x - p.center);
                if ((l.array().abs() < p.size.array()).all()) return true;
                break;
            }
            case PrimitiveKind::kDisk:
                break;
        }
    }
    return false;
}

std::vector<double> render_depth(std::span<const Primitive> primitives, const PoseSE3& g, const Intrinsics& k,
                                 int height, int width, std::vector<int>* primitive_ids) {
    std::vector<double> depth(static_cast<std::size_t>(height) * width, 0.0);
    if (primitive_ids) primitive_ids->assign(depth.size(), -1);
    const PoseSE3 inv = g.inverse();
    const Vec3 origin = inv.translation;
    for (int v = 0; v < height; ++v) {
        for (int u = 0; u < width; ++u) {
            // Unnormalized camera ray with unit z, so the hit parameter is the z-depth.
            const Vec3 dir = inv.rotation * Vec3((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
            if (const auto hit = cast_ray(primitives, origin, dir)) {
                const std::size_t idx = static_cast<std::size_t>(v) * width + u;
                depth[idx] = hit->t;
                if (primitive_ids) (*primitive_ids)[idx] = hit->primitive;
            }
        }
    }
    return depth;
}

PoseSE3 look_at(const Vec3& position, const Vec3& target) {
    const Vec3 z = (target - position).normalized();
    Vec3 x = Vec3::UnitY().cross(z);
    if (x.norm() < 1e-9) x = Vec3::UnitX();
    x.normalize();
    const Vec3 y = z.cross(x);
    PoseSE3 g;
    g.rotation.row(0) = x.transpose();
    g.rotation.row(1) = y.transpose();
    g.rotation.row(2) = z.transpose();
    g.translation = -g.rotation * position;
    return g;
}

OracleScene generate_scene(const OracleConfig& config, int index) {
    config.validate();
    const std::uint64_t base = derive_seed(derive_seed(config.seed, kGeometryStream), static_cast<std::uint64_t>(index));
    const Intrinsics k = config.intrinsics();
    for (int attempt = 0; attempt < config.max_retries; ++attempt) {
        Rng rng(derive_seed(base, static_cast<std::uint64_t>(attempt)));
        const Layout l = config.kind == SceneKind::kOrbit ? orbit_layout(config, rng) : flythrough_layout(config, rng);
        if (!layout_ok(l)) continue;

        OracleScene s;
        s.primitives = l.primitives;
        for (int t = 0; t < config.frames; ++t) {
            s.cameras.push_back(look_at(l.positions[static_cast<std::size_t>(t)], l.targets[static_cast<std::size_t>(t)]));
        }
        SceneAnnotation& a = s.annotation;
        a.height = config.height;
        a.width = config.width;
        const std::size_t pixels = a.pixels();
        const PoseSE3 ref_inv = s.cameras.front().inverse();
        bool covered = true;
        for (int t = 0; t < config.frames; ++t) {
            const PoseSE3& cam = s.cameras[static_cast<std::size_t>(t)];
            const PoseSE3 g = cam * ref_inv;
            const auto depth = render_depth(s.primitives, cam, k, a.height, a.width);
            const auto points = unproject_depth(depth, a.height, a.width, k, g);
            std::size_t hits = 0;
            a.frame_ids.push_back(t);
            a.poses.push_back(t == 0 ? PoseSE3::identity() : g);
            a.intrinsics.push_back(k);
            for (std::size_t p = 0; p < pixels; ++p) {
                const bool valid = depth[p] > 0;
                hits += valid ? 1 : 0;
                a.depth.push_back(depth[p]);
                a.confidence.push_back(valid ? 1.0 : 0.0);
                a.mask.push_back(valid ? 1 : 0);
                for (int c = 0; c < 3; ++c) a.points.push_back(valid ? points[3 * p + c] : 0.0);
            }
            if (static_cast<double>(hits) < kMinCoverage * static_cast<double>(pixels)) covered = false;
        }
        if (!covered) continue;
        a.validate_layout();
        return s;
    }
    throw Error(ErrorCode::kRetryExhausted, "scene " + std::to_string(index) + ": no valid camera path after " +
                                                std::to_string(config.max_retries) + " attempts");
}

FeatureClip synthesize_features(const OracleScene& scene, const OracleConfig& config, int index,
                                const std::string& backbone) {
    config.validate();
    const Encoder enc = make_encoder(config);
    Rng rng(derive_seed(derive_seed(config.seed, kCorruptionStream), static_cast<std::uint64_t>(index)));
    std::vector<std::vector<double>> appearance(scene.primitives.size());
    for (auto& code : appearance) {
        for (int k = 0; k < config.appearance_dim; ++k) code.push_back(rng.normal() / std::sqrt(config.appearance_dim));
    }
    const int c = config.channels;
    const int gh = config.grid_h;
    const int gw = config.grid_w;
    const int r = config.height / gh;
    const int frames = static_cast<int>(scene.cameras.size());
    const std::size_t cells = static_cast<std::size_t>(gh) * gw;
    const Intrinsics k = config.intrinsics();
    const PoseSE3& ref = scene.cameras.front();

    std::vector<int> dropped;
    const int n_drop = static_cast<int>(std::llround(config.dropout * c));
    {
        std::vector<int> all(static_cast<std::size_t>(c));
        for (int i = 0; i < c; ++i) all[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < n_drop; ++i) {
            std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(i) + rng.below(c - i)]);
        }
        dropped.assign(all.begin(), all.begin() + n_drop);
    }

    Tensor chunk = Tensor::zeros({static_cast<std::uint64_t>(frames), static_cast<std::uint64_t>(c),
                                  static_cast<std::uint64_t>(gh), static_cast<std::uint64_t>(gw)});
    Eigen::VectorXd code(enc.dim);
    for (int t = 0; t < frames; ++t) {
        const PoseSE3 inv = scene.cameras[static_cast<std::size_t>(t)].inverse();
        for (int a = 0; a < gh; ++a) {
            for (int b = 0; b < gw; ++b) {
                const double u = b * r + 0.5 * (r - 1);
                const double v = a * r + 0.5 * (r - 1);
                const Vec3 dir = inv.rotation * Vec3((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
                const auto hit = cast_ray(scene.primitives, inv.translation, dir);
                code.setZero();
                if (hit) {
                    const Vec3 x = ref.apply(hit->point);
                    code.head<3>() = kLinearWeight * x;
                    const double amp = 1.0 / std::sqrt(static_cast<double>(config.frequencies));
                    for (int f = 0; f < config.frequencies; ++f) {
                        const double phase = enc.frequencies.row(f).dot(x);
                        code(3 + f) = amp * std::sin(phase);
                        code(3 + config.frequencies + f) = amp * std::cos(phase);
                    }
                }
                const auto& app = hit ? appearance[static_cast<std::size_t>(hit->primitive)] : enc.background;
                for (int j = 0; j < config.appearance_dim; ++j) code(3 + 2 * config.frequencies + j) = app[static_cast<std::size_t>(j)];
                const Eigen::VectorXd base = enc.projection.transpose() * code;
                const std::size_t cell = static_cast<std::size_t>(a) * gw + b;
                for (int ch = 0; ch < c; ++ch) {
                    double value = base(ch);
                    if (config.decorrelation > 0) value = (1.0 - config.decorrelation) * value + config.decorrelation * rng.normal();
                    if (config.noise > 0) value += config.noise * rng.normal();
                    chunk.values[(static_cast<std::size_t>(t) * c + ch) * cells + cell] = static_cast<float>(value);
                }
            }
        }
    }
    for (int t = 0; t < frames; ++t) {
        for (int ch : dropped) {
            std::fill_n(chunk.values.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(t) * c + ch) * cells),
                        cells, 0.0f);
        }
    }

    FeatureClip clip;
    clip.backbone_id = backbone;
    clip.channels = c;
    clip.grid_h = gh;
    clip.grid_w = gw;
    const ChunkPlan plan = plan_chunks(frames, 0, 1);
    clip.index_map = plan.index_map;
    clip.chunks.push_back(std::move(chunk));
    clip.validate();
    return clip;
}

std::vector<SceneRecord> build_oracle_scenes(const OracleConfig& config, int first, int count,
                                             const std::string& backbone) {
    std::vector<SceneRecord> out;
    out.reserve(static_cast<std::size_t>(std::max(0, count)));
    for (int i = first; i < first + count; ++i) {
        OracleScene s = generate_scene(config, i);
        char id[32];
        std::snprintf(id, sizeof(id), "scene_%05d", i);
        out.push_back(SceneRecord{id, std::move(s.annotation), synthesize_features(s, config, i, backbone)});
    }
    return out;
}

int train_split_count(int n_scenes, double train_ratio) {
    if (n_scenes < 0 || !(train_ratio >= 0 && train_ratio <= 1)) {
        throw Error(ErrorCode::kConfig, "split: need n >= 0 and ratio in [0, 1]");
    }
    return static_cast<int>(std::llround(n_scenes * train_ratio));
}

OracleDataset build_oracle_dataset(int n_scenes, double train_ratio, const OracleConfig& config,
                                   const std::filesystem::path& root, const std::string& backbone) {
    config.validate();
    const int n_train = train_split_count(n_scenes, train_ratio);
    OracleDataset ds;
    const std::string dataset_id = "oracle-" + to_string(config.kind) + "-" + std::to_string(config.seed);
    ds.train = Manifest{dataset_id, "train", {}};
    ds.test = Manifest{dataset_id, "test", {}};
    for (int i = 0; i < n_scenes; ++i) {
        auto records = build_oracle_scenes(config, i, 1, backbone);
        SceneRecord& r = records.front();
        const std::string ann = "annotations/" + r.video_id;
        const std::string feat = "features/" + backbone + "/" + r.video_id;
        write_annotation(r.annotation, root / ann);
        write_feature_clip(r.clip, root / feat);
        ManifestEntry e{r.video_id, r.annotation.frame_count(), ann, {{backbone, feat}}};
        (i < n_train ? ds.train : ds.test).entries.push_back(std::move(e));
    }
    ds.train_manifest = root / "train.manifest";
    ds.test_manifest = root / "test.manifest";
    write_manifest(ds.train, ds.train_manifest);
    write_manifest(ds.test, ds.test_manifest);
    return ds;
}

}  // namespace vidprobe
