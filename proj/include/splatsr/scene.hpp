// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "splatsr/geometry.hpp"

namespace splatsr {

/// Learnable state of one anisotropic Gaussian. Scale and opacity are stored in
/// unconstrained form (log / logit); the quaternion is normalized wherever it is read.
struct GaussianParams {
    Vec3 position = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    double opacity_logit = 0.0;
    Vec3 color = Vec3::Zero();

    [[nodiscard]] double opacity() const noexcept { return sigmoid(opacity_logit); }
    [[nodiscard]] Vec3 scale() const { return log_scale.array().exp(); }
    [[nodiscard]] Mat3 covariance() const { return covariance_from_params(log_scale, rotation); }

    friend bool operator==(const GaussianParams& a, const GaussianParams& b) {
        return a.position == b.position && a.log_scale == b.log_scale && a.rotation == b.rotation &&
               a.opacity_logit == b.opacity_logit && a.color == b.color;
    }
};

struct GaussianScene {
    std::vector<GaussianParams> gaussians;
    Vec3 background_color = Vec3::Zero();

    [[nodiscard]] std::size_t size() const noexcept { return gaussians.size(); }

    friend bool operator==(const GaussianScene& a, const GaussianScene& b) {
        return a.background_color == b.background_color && a.gaussians == b.gaussians;
    }
};

struct AxisAlignedBox {
    Vec3 min = Vec3::Constant(-1.0);
    Vec3 max = Vec3::Constant(1.0);

    [[nodiscard]] Vec3 extent() const { return max - min; }
    [[nodiscard]] double diagonal() const { return extent().norm(); }
};

/// Seeded random scene: uniform positions in the box, identity rotations, opacity 0.5,
/// uniform colors and an isotropic scale of diag / count^(1/3) / 4.
inline GaussianScene init_scene_random(int count, const AxisAlignedBox& bounds, std::uint64_t seed) {
    if (count < 1) {
        throw ArgumentError("init_scene_random: count must be >= 1");
    }
    if (!((bounds.max - bounds.min).array() > 0.0).all()) {
        throw ArgumentError("init_scene_random: degenerate bounds");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const double sigma = bounds.diagonal() / std::cbrt(static_cast<double>(count)) / 4.0;
    const double log_sigma = std::log(sigma);

    GaussianScene scene;
    scene.gaussians.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        GaussianParams g;
        for (int k = 0; k < 3; ++k) {
            g.position[k] = bounds.min[k] + unit(rng) * (bounds.max[k] - bounds.min[k]);
        }
        g.log_scale = Vec3::Constant(log_sigma);
        g.opacity_logit = logit(0.5);
        for (int k = 0; k < 3; ++k) {
            g.color[k] = unit(rng);
        }
        scene.gaussians.push_back(g);
    }
    return scene;
}

/// Pinhole camera. Intrinsics are stated at the reference (HR) resolution; pixel centers sit
/// at integer coordinates, so rescaling keeps pixel-center alignment.
struct Camera {
    Mat3 rotation_w2c = Mat3::Identity();
    Vec3 translation_w2c = Vec3::Zero();
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    double near_plane = 0.01;

    struct Intrinsics {
        double fx, fy, cx, cy;
        int width, height;
    };

    /// Effective intrinsics when rendering at `scale` times the reference resolution.
    [[nodiscard]] Intrinsics at_scale(double scale) const {
        if (!(scale > 0.0)) {
            throw ArgumentError("render scale must be positive");
        }
        return Intrinsics{fx * scale,
                          fy * scale,
                          (cx + 0.5) * scale - 0.5,
                          (cy + 0.5) * scale - 0.5,
                          static_cast<int>(std::lround(width * scale)),
                          static_cast<int>(std::lround(height * scale))};
    }

    [[nodiscard]] Vec3 center() const { return -rotation_w2c.transpose() * translation_w2c; }

    void validate() const {
        const double err = (rotation_w2c.transpose() * rotation_w2c - Mat3::Identity()).cwiseAbs().maxCoeff();
        if (!(err <= 1e-9)) {
            throw DataError("camera rotation is not orthonormal (error " + std::to_string(err) + ")");
        }
        if (!(near_plane > 0.0)) {
            throw DataError("camera near_plane must be positive");
        }
        if (width < 1 || height < 1) {
            throw DataError("camera width/height must be >= 1");
        }
    }

    /// Camera at `eye` looking at `target`, +y of the image pointing along -up (OpenCV axes).
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height,
                          double near_plane = 0.01) {
        const Vec3 forward = (target - eye).normalized();
        Vec3 right = forward.cross(up);
        if (right.norm() < 1e-9) {
            right = forward.cross(Vec3(1.0, 0.0, 0.0));
        }
        right.normalize();
        const Vec3 down = forward.cross(right);
        Camera cam;
        cam.rotation_w2c.row(0) = right.transpose();
        cam.rotation_w2c.row(1) = down.transpose();
        cam.rotation_w2c.row(2) = forward.transpose();
        cam.translation_w2c = -cam.rotation_w2c * eye;
        cam.fx = focal;
        cam.fy = focal;
        cam.cx = 0.5 * width - 0.5;
        cam.cy = 0.5 * height - 0.5;
        cam.width = width;
        cam.height = height;
        cam.near_plane = near_plane;
        return cam;
    }

    friend bool operator==(const Camera& a, const Camera& b) {
        return a.rotation_w2c == b.rotation_w2c && a.translation_w2c == b.translation_w2c && a.fx == b.fx &&
               a.fy == b.fy && a.cx == b.cx && a.cy == b.cy && a.width == b.width && a.height == b.height &&
               a.near_plane == b.near_plane;
    }
};

}  // namespace splatsr
