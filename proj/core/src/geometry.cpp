// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidprobe/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/SVD>

#include "vidprobe/error.hpp"

namespace vidprobe {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

void check_rotation(const Mat3& r, const char* what) {
    const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
    const double det = r.determinant();
    if (!r.allFinite() || ortho > 1e-6 || std::abs(det - 1.0) > 1e-6) {
        throw Error(ErrorCode::kInvariant, std::string(what) + " is not a rotation (orthogonality error " +
                                               std::to_string(ortho) + ", det " + std::to_string(det) + ")");
    }
}

}  // namespace

PoseSE3 PoseSE3::inverse() const {
    PoseSE3 inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
}

PoseSE3 PoseSE3::operator*(const PoseSE3& other) const {
    PoseSE3 out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
}

void PoseSE3::validate() const {
    check_rotation(rotation, "pose rotation");
    if (!translation.allFinite()) throw Error(ErrorCode::kInvariant, "pose translation is not finite");
}

Similarity umeyama_align(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale) {
    if (src.size() != dst.size()) {
        throw Error(ErrorCode::kShape, "umeyama_align: " + std::to_string(src.size()) + " source vs " +
                                           std::to_string(dst.size()) + " target points");
    }
    const std::size_t n = src.size();
    if (n < 3) throw Error(ErrorCode::kDegenerate, "umeyama_align needs at least 3 correspondences");

    Vec3 mu_src = Vec3::Zero();
    Vec3 mu_dst = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        if (!src[i].allFinite() || !dst[i].allFinite()) {
            throw Error(ErrorCode::kDegenerate, "umeyama_align: non-finite point at index " + std::to_string(i));
        }
        mu_src += src[i];
        mu_dst += dst[i];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    mu_src *= inv_n;
    mu_dst *= inv_n;

    Mat3 cov = Mat3::Zero();
    double var_src = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 a = src[i] - mu_src;
        const Vec3 b = dst[i] - mu_dst;
        cov.noalias() += b * a.transpose();
        var_src += a.squaredNorm();
    }
    cov *= inv_n;
    var_src *= inv_n;
    if (!(var_src > 1e-300)) throw Error(ErrorCode::kDegenerate, "umeyama_align: source points are coincident");

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 sign = Mat3::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) sign(2, 2) = -1.0;

    Similarity out;
    out.rotation = svd.matrixU() * sign * svd.matrixV().transpose();
    out.scale = with_scale ? (svd.singularValues().asDiagonal() * sign).trace() / var_src : 1.0;
    out.translation = mu_dst - out.scale * (out.rotation * mu_src);
    return out;
}

double alignment_residual(const Similarity& transform, std::span<const Vec3> src, std::span<const Vec3> dst) {
    double sum = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) sum += (transform.apply(src[i]) - dst[i]).squaredNorm();
    return sum;
}

double so3_geodesic_deg(const Mat3& r1, const Mat3& r2) {
    check_rotation(r1, "first rotation");
    check_rotation(r2, "second rotation");
    const Mat3 r = r1.transpose() * r2;
    const Vec3 s(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    return std::atan2(0.5 * s.norm(), 0.5 * (r.trace() - 1.0)) * kRadToDeg;
}

TranslationAngle translation_angle_deg(const Vec3& t1, const Vec3& t2, double eps) {
    if (!t1.allFinite() || !t2.allFinite()) {
        throw Error(ErrorCode::kInvariant, "translation_angle_deg: non-finite translation");
    }
    const double n1 = t1.norm();
    const double n2 = t2.norm();
    if (n2 < eps) return {0.0, true};
    if (n1 < eps) return {180.0, false};
    return {std::atan2(t1.cross(t2).norm(), t1.dot(t2)) * kRadToDeg, false};
}

PoseSE3 relative_pose(const PoseSE3& g_i, const PoseSE3& g_j) { return g_j * g_i.inverse(); }

std::vector<double> unproject_depth(std::span<const double> depth, int height, int width, const Intrinsics& k,
                                    const PoseSE3& g) {
    const std::size_t pixels = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    if (depth.size() != pixels) {
        throw Error(ErrorCode::kShape, "unproject_depth: depth map has " + std::to_string(depth.size()) +
                                           " values, expected " + std::to_string(pixels));
    }
    const PoseSE3 inv = g.inverse();
    std::vector<double> points(pixels * 3);
    for (int v = 0; v < height; ++v) {
        for (int u = 0; u < width; ++u) {
            const std::size_t idx = static_cast<std::size_t>(v) * width + u;
            const double d = depth[idx];
            const Vec3 cam((u - k.cx) / k.fx * d, (v - k.cy) / k.fy * d, d);
            const Vec3 world = inv.apply(cam);
            points[3 * idx + 0] = world.x();
            points[3 * idx + 1] = world.y();
            points[3 * idx + 2] = world.z();
        }
    }
    return points;
}

Reprojection reproject_pixel(const Vec2& pixel, double depth, const Intrinsics& k_a, const Intrinsics& k_b,
                             const PoseSE3& g_ab) {
    const Vec3 in_a((pixel.x() - k_a.cx) / k_a.fx * depth, (pixel.y() - k_a.cy) / k_a.fy * depth, depth);
    const Vec3 in_b = g_ab.apply(in_a);
    Reprojection out;
    out.depth = in_b.z();
    out.pixel = Vec2(k_b.fx * in_b.x() / in_b.z() + k_b.cx, k_b.fy * in_b.y() / in_b.z() + k_b.cy);
    return out;
}

Mat3 rotation_from_axis_angle(const Vec3& axis, double angle_rad) {
    return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

std::array<double, 4> quaternion_from_rotation(const Mat3& r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    return {q.w(), q.x(), q.y(), q.z()};
}

Mat3 rotation_from_quaternion(const std::array<double, 4>& q) {
    Eigen::Quaterniond e(q[0], q[1], q[2], q[3]);
    e.normalize();
    return e.toRotationMatrix();
}

}  // namespace vidprobe
