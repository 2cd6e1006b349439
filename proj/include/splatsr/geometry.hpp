// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include <Eigen/Core>

#include "splatsr/error.hpp"

namespace splatsr {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;  // quaternions are stored (w, x, y, z)
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline double sigmoid(double x) noexcept {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) noexcept { return std::log(p / (1.0 - p)); }

/// Rotation matrix of q / |q|. Throws DegenerateRotationError for a zero (or non-finite) quaternion.
inline Mat3 quaternion_to_rotation(const Vec4& q) {
    const double n = q.norm();
    if (!(n > 1e-12) || !std::isfinite(n)) {
        throw DegenerateRotationError("quaternion has zero or non-finite norm");
    }
    const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

/// Pulls dL/dR back to dL/dq through both the quaternion-to-matrix map and the normalization.
inline Vec4 quaternion_to_rotation_backward(const Vec4& q, const Mat3& d_rot) {
    const double n = q.norm();
    const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    const Mat3& g = d_rot;

    // Partial derivatives of each rotation entry with respect to the normalized components.
    Vec4 dn;
    dn[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    dn[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                   w * g(2, 1) - 2.0 * x * g(2, 2));
    dn[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                   z * g(2, 1) - 2.0 * y * g(2, 2));
    dn[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) + y * g(1, 2) +
                   x * g(2, 0) + y * g(2, 1));

    const Vec4 qn(w, x, y, z);
    return (dn - qn * qn.dot(dn)) / n;
}

/// Sigma = R diag(exp(2 log_scale)) R^T with R from the normalized quaternion.
inline Mat3 covariance_from_params(const Vec3& log_scale, const Vec4& rotation) {
    const Mat3 r = quaternion_to_rotation(rotation);
    const Vec3 var = (2.0 * log_scale).array().exp();
    return r * var.asDiagonal() * r.transpose();
}

}  // namespace splatsr
