// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace vidprobe {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Translation norm below which a ground-truth baseline has no direction.
inline constexpr double kDegenerateBaselineEps = 1e-5;

/// Rigid world-to-camera transform: x_cam = rotation * x_world + translation.
/// World is the first frame's camera.
struct PoseSE3 {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static PoseSE3 identity() { return {}; }

    Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
    PoseSE3 inverse() const;
    /// (a * b)(x) = a(b(x)).
    PoseSE3 operator*(const PoseSE3& other) const;

    /// Throws kInvariant unless rotation is orthonormal with det +1 (1e-6).
    void validate() const;
};

struct Similarity {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
};

struct PoseError {
    double rotation_deg = 0.0;
    double translation_deg = 0.0;
    bool excluded = false;

    double joint() const { return rotation_deg > translation_deg ? rotation_deg : translation_deg; }
};

/// Pinhole intrinsics in pixels. Pixel (col u, row v) has its center at
/// image coordinates (u, v).
struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
};

/// Least-squares similarity taking src onto dst (closed form via SVD of the
/// cross-covariance with the reflection fix). with_scale=false forces s=1.
Similarity umeyama_align(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale = true);

/// Sum of squared residuals of `transform` applied to src against dst.
double alignment_residual(const Similarity& transform, std::span<const Vec3> src, std::span<const Vec3> dst);

double so3_geodesic_deg(const Mat3& r1, const Mat3& r2);

struct TranslationAngle {
    double degrees = 0.0;
    bool excluded = false;
};

/// Angle between translation directions. A degenerate ground-truth t2 marks
/// the pair excluded; a degenerate prediction t1 alone scores 180 degrees.
TranslationAngle translation_angle_deg(const Vec3& t1, const Vec3& t2, double eps = kDegenerateBaselineEps);

/// Maps camera-i coordinates to camera-j coordinates: g_j * g_i^-1.
PoseSE3 relative_pose(const PoseSE3& g_i, const PoseSE3& g_j);

/// Row-major H*W*3 first-frame points; pixel (u, v) with depth d maps to
/// g^-1(d * K^-1 [u v 1]).
std::vector<double> unproject_depth(std::span<const double> depth, int height, int width, const Intrinsics& k,
                                    const PoseSE3& g);

struct Reprojection {
    Vec2 pixel;
    double depth = 0.0;
};

Reprojection reproject_pixel(const Vec2& pixel, double depth, const Intrinsics& k_a, const Intrinsics& k_b,
                             const PoseSE3& g_ab);

Mat3 rotation_from_axis_angle(const Vec3& axis, double angle_rad);

/// Unit quaternion (w, x, y, z) with w >= 0.
std::array<double, 4> quaternion_from_rotation(const Mat3& r);
Mat3 rotation_from_quaternion(const std::array<double, 4>& q);

}  // namespace vidprobe
