// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "splatsr/image.hpp"
#include "splatsr/scene.hpp"

namespace splatsr {

// Rasterizer constants (3DGS conventions).
inline constexpr double kLowPassDilation = 0.3;   // px^2 added to both diagonal entries of cov2d
inline constexpr double kRadiusSigmas = 3.0;
inline constexpr double kMinSplatAlpha = 1.0 / 255.0;
inline constexpr double kMaxSplatAlpha = 0.999;
inline constexpr double kMinTransmittance = 1e-4;

struct RenderSettings {
    /// Stop compositing a pixel once transmittance would drop below kMinTransmittance.
    bool early_stop = true;
};

/// One Gaussian after projection into a view at a given render scale.
struct ProjectedGaussian {
    std::size_t source = 0;  // index into GaussianScene::gaussians
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    Mat2 conic = Mat2::Identity();  // cov2d^-1
    double depth = 0.0;
    Vec3 color = Vec3::Zero();  // clamped to [0,1]
    double opacity = 0.0;
    double radius = 0.0;

    // Kept for the backward pass.
    Vec3 p_cam = Vec3::Zero();
    Eigen::Matrix<double, 2, 3> jacobian = Eigen::Matrix<double, 2, 3>::Zero();
    Mat3 cov_cam = Mat3::Zero();  // W Sigma W^T
};

struct Projection {
    Camera::Intrinsics intrinsics{};
    std::vector<ProjectedGaussian> splats;  // source order, culled entries omitted
};

/// Camera-space transform, near-plane culling and EWA footprint of every Gaussian.
inline Projection project(const GaussianScene& scene, const Camera& camera, double scale) {
    Projection out;
    out.intrinsics = camera.at_scale(scale);
    const auto& in = out.intrinsics;
    const Mat3& w = camera.rotation_w2c;

    out.splats.reserve(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const GaussianParams& g = scene.gaussians[i];
        const Vec3 p = w * g.position + camera.translation_w2c;
        if (!(p.z() > camera.near_plane)) {
            continue;
        }
        ProjectedGaussian s;
        s.source = i;
        s.p_cam = p;
        s.depth = p.z();
        const double inv_z = 1.0 / p.z();
        s.mean2d = Vec2(in.fx * p.x() * inv_z + in.cx, in.fy * p.y() * inv_z + in.cy);
        s.jacobian << in.fx * inv_z, 0.0, -in.fx * p.x() * inv_z * inv_z,  //
            0.0, in.fy * inv_z, -in.fy * p.y() * inv_z * inv_z;
        s.cov_cam = w * g.covariance() * w.transpose();
        s.cov2d = s.jacobian * s.cov_cam * s.jacobian.transpose();
        s.cov2d(0, 0) += kLowPassDilation;
        s.cov2d(1, 1) += kLowPassDilation;
        s.cov2d(0, 1) = s.cov2d(1, 0) = 0.5 * (s.cov2d(0, 1) + s.cov2d(1, 0));
        const double det = s.cov2d.determinant();
        if (!(det > 0.0)) {
            continue;
        }
        s.conic << s.cov2d(1, 1) / det, -s.cov2d(0, 1) / det, -s.cov2d(0, 1) / det, s.cov2d(0, 0) / det;
        const double mid = 0.5 * (s.cov2d(0, 0) + s.cov2d(1, 1));
        const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
        s.radius = kRadiusSigmas * std::sqrt(lambda_max);
        s.color = g.color.cwiseMax(0.0).cwiseMin(1.0);
        s.opacity = g.opacity();
        out.splats.push_back(s);
    }
    return out;
}

namespace detail {

/// Compact per-splat record read by the compositing loop.
struct SplatCore {
    double mx, my;
    double ca, cb, cc;  // conic [[ca, cb], [cb, cc]]
    double opacity;
    double radius2;
    double min_power;  // below this, opacity * exp(power) is certainly under kMinSplatAlpha
    double r, g, b;
};

struct SplatHit {
    std::uint32_t splat;  // index into projection.splats
    double alpha;
    double gauss;
    double transmittance;  // before this splat
    bool clamped;
};

}  // namespace detail

/// Forward state of one render: depth-sorted splats plus, per pixel, the splats whose
/// bounding box covers it (in compositing order). Reused by the backward pass.
struct Rasterization {
    Projection projection;
    std::vector<detail::SplatCore> cores;  // index-aligned with projection.splats
    std::vector<std::uint32_t> order;  // indices into projection.splats, sorted by (depth, source)
    std::vector<std::uint32_t> pixel_offsets;
    std::vector<std::uint32_t> pixel_entries;  // splat indices, front to back within each pixel
    std::vector<std::uint8_t> touches_image;   // per splat (projection order)
    std::vector<std::uint32_t> hit_offsets;    // per pixel, into hits
    std::vector<detail::SplatHit> hits;        // contributing splats, front to back within each pixel
    std::vector<double> final_transmittance;   // per pixel
    Camera camera;
    Vec3 background = Vec3::Zero();
    RenderSettings settings;
    ImageBuffer image;

    [[nodiscard]] int width() const noexcept { return projection.intrinsics.width; }
    [[nodiscard]] int height() const noexcept { return projection.intrinsics.height; }
};

namespace detail {

/// Composites one pixel front to back. Appends every splat that contributed to `hits` and
/// returns the final transmittance.
inline double composite_pixel(const Rasterization& r, int x, int y, std::vector<SplatHit>& hits) {
    const std::size_t pix = static_cast<std::size_t>(y) * static_cast<std::size_t>(r.width()) + static_cast<std::size_t>(x);
    double t = 1.0;
    const detail::SplatCore* cores = r.cores.data();
    for (std::uint32_t e = r.pixel_offsets[pix]; e < r.pixel_offsets[pix + 1]; ++e) {
        const std::uint32_t si = r.pixel_entries[e];
        const SplatCore& s = cores[si];
        const double dx = x - s.mx;
        const double dy = y - s.my;
        if (dx * dx + dy * dy > s.radius2) {
            continue;
        }
        const double power = -0.5 * (s.ca * dx * dx + 2.0 * s.cb * dx * dy + s.cc * dy * dy);
        if (power < s.min_power) {
            continue;
        }
        const double gauss = std::exp(power);
        double alpha = s.opacity * gauss;
        bool clamped = false;
        if (alpha > kMaxSplatAlpha) {
            alpha = kMaxSplatAlpha;
            clamped = true;
        }
        if (alpha < kMinSplatAlpha) {
            continue;
        }
        const double next_t = t * (1.0 - alpha);
        if (r.settings.early_stop && next_t < kMinTransmittance) {
            break;
        }
        hits.push_back({si, alpha, gauss, t, clamped});
        t = next_t;
    }
    return t;
}

}  // namespace detail

inline Rasterization rasterize(const GaussianScene& scene, const Camera& camera, double scale,
                               RenderSettings settings = {}) {
    Rasterization r;
    r.projection = project(scene, camera, scale);
    r.camera = camera;
    r.background = scene.background_color;
    r.settings = settings;
    const int width = r.width();
    const int height = r.height();
    const auto& splats = r.projection.splats;
    r.cores.resize(splats.size());
    for (std::size_t i = 0; i < splats.size(); ++i) {
        const auto& s = splats[i];
        r.cores[i] = {s.mean2d.x(), s.mean2d.y(), s.conic(0, 0), s.conic(0, 1), s.conic(1, 1), s.opacity,
                      s.radius * s.radius, std::log(kMinSplatAlpha / s.opacity) - 1e-6,
                      s.color.x(), s.color.y(), s.color.z()};
    }

    struct SortKey {
        double depth;
        std::size_t source;
        std::uint32_t index;
    };
    std::vector<SortKey> keys(splats.size());
    for (std::size_t i = 0; i < splats.size(); ++i) {
        keys[i] = {splats[i].depth, splats[i].source, static_cast<std::uint32_t>(i)};
    }
    std::sort(keys.begin(), keys.end(), [](const SortKey& a, const SortKey& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.source < b.source;
    });
    r.order.resize(splats.size());
    for (std::size_t i = 0; i < keys.size(); ++i) r.order[i] = keys[i].index;

    struct Box {
        int x0, x1, y0, y1;
    };
    std::vector<Box> boxes(splats.size());
    r.touches_image.assign(splats.size(), 0);
    const std::size_t pixels = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    std::vector<std::uint32_t> counts(pixels + 1, 0);
    for (std::size_t k = 0; k < r.order.size(); ++k) {
        const std::uint32_t si = r.order[k];
        const auto& s = splats[si];
        Box b{1, 0, 1, 0};
        const bool on_screen = std::isfinite(s.mean2d.x()) && std::isfinite(s.mean2d.y()) &&
                               std::isfinite(s.radius) && s.mean2d.x() + s.radius >= 0.0 &&
                               s.mean2d.x() - s.radius <= width - 1 && s.mean2d.y() + s.radius >= 0.0 &&
                               s.mean2d.y() - s.radius <= height - 1;
        if (on_screen) {
            b = Box{std::max(0, static_cast<int>(std::ceil(s.mean2d.x() - s.radius))),
                    static_cast<int>(std::min<double>(width - 1, std::floor(s.mean2d.x() + s.radius))),
                    std::max(0, static_cast<int>(std::ceil(s.mean2d.y() - s.radius))),
                    static_cast<int>(std::min<double>(height - 1, std::floor(s.mean2d.y() + s.radius)))};
        }
        if (b.x0 > b.x1 || b.y0 > b.y1) {
            boxes[k] = b;
            continue;
        }
        r.touches_image[si] = 1;
        // Outside the ellipse where opacity * gauss >= kMinSplatAlpha a pixel can never
        // contribute, so the per-pixel lists only need that ellipse's bounding box.
        const double m2 = -2.0 * r.cores[si].min_power;
        if (!(m2 > 0.0)) {
            boxes[k] = Box{1, 0, 1, 0};
            continue;
        }
        const double ex = std::sqrt(m2 * s.cov2d(0, 0)) * (1.0 + 1e-9) + 1e-9;
        const double ey = std::sqrt(m2 * s.cov2d(1, 1)) * (1.0 + 1e-9) + 1e-9;
        b.x0 = std::max(b.x0, static_cast<int>(std::max(-1.0, std::ceil(s.mean2d.x() - ex))));
        b.x1 = std::min(b.x1, static_cast<int>(std::min<double>(width, std::floor(s.mean2d.x() + ex))));
        b.y0 = std::max(b.y0, static_cast<int>(std::max(-1.0, std::ceil(s.mean2d.y() - ey))));
        b.y1 = std::min(b.y1, static_cast<int>(std::min<double>(height, std::floor(s.mean2d.y() + ey))));
        boxes[k] = b;
        if (b.x0 > b.x1 || b.y0 > b.y1) continue;
        for (int y = b.y0; y <= b.y1; ++y)
            for (int x = b.x0; x <= b.x1; ++x) ++counts[static_cast<std::size_t>(y) * width + x + 1];
    }
    for (std::size_t p = 0; p < pixels; ++p) counts[p + 1] += counts[p];
    r.pixel_offsets = counts;
    r.pixel_entries.resize(counts[pixels]);
    std::vector<std::uint32_t> cursor(counts.begin(), counts.end() - 1);
    for (std::size_t k = 0; k < r.order.size(); ++k) {
        const Box& b = boxes[k];
        for (int y = b.y0; y <= b.y1; ++y)
            for (int x = b.x0; x <= b.x1; ++x)
                r.pixel_entries[cursor[static_cast<std::size_t>(y) * width + x]++] = r.order[k];
    }

    r.image = ImageBuffer(width, height);
    r.hit_offsets.assign(pixels + 1, 0);
    r.final_transmittance.assign(pixels, 1.0);
    r.hits.clear();
    r.hits.reserve(r.pixel_entries.size() / 2);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * width + x;
            const std::size_t first = r.hits.size();
            const double t_final = detail::composite_pixel(r, x, y, r.hits);
            r.hit_offsets[pix + 1] = static_cast<std::uint32_t>(r.hits.size());
            r.final_transmittance[pix] = t_final;
            double cr = 0.0, cg = 0.0, cb = 0.0;
            for (std::size_t e = first; e < r.hits.size(); ++e) {
                const auto& h = r.hits[e];
                const detail::SplatCore& s = r.cores[h.splat];
                const double wgt = h.alpha * h.transmittance;
                cr += wgt * s.r;
                cg += wgt * s.g;
                cb += wgt * s.b;
            }
            r.image.at(x, y, 0) = cr + t_final * r.background.x();
            r.image.at(x, y, 1) = cg + t_final * r.background.y();
            r.image.at(x, y, 2) = cb + t_final * r.background.z();
        }
    }
    return r;
}

inline ImageBuffer render(const GaussianScene& scene, const Camera& camera, double scale, RenderSettings settings = {}) {
    return rasterize(scene, camera, scale, settings).image;
}

/// Per-pixel compositing record: which Gaussians contributed, with which weight.
struct PixelTrace {
    struct Contribution {
        std::size_t source;
        double weight;  // alpha_i * T_i
        bool clamped;
    };
    std::vector<Contribution> contributions;
    double final_transmittance = 1.0;
};

inline PixelTrace trace_pixel(const Rasterization& r, int x, int y) {
    if (x < 0 || y < 0 || x >= r.width() || y >= r.height()) {
        throw ArgumentError("trace_pixel: pixel outside image");
    }
    const std::size_t pix = static_cast<std::size_t>(y) * r.width() + x;
    PixelTrace out;
    out.final_transmittance = r.final_transmittance[pix];
    for (std::uint32_t e = r.hit_offsets[pix]; e < r.hit_offsets[pix + 1]; ++e) {
        const auto& h = r.hits[e];
        out.contributions.push_back({r.projection.splats[h.splat].source, h.alpha * h.transmittance, h.clamped});
    }
    return out;
}

/// Gradients of a scalar loss with respect to every Gaussian parameter, index-aligned with
/// the scene. `d_params[i]` mirrors GaussianParams field by field.
struct RenderGradients {
    std::vector<GaussianParams> d_params;
    std::vector<Vec2> d_mean2d;             // dL/dmean2d in pixels at the render scale
    std::vector<double> mean2d_grad_norm;   // |dL/dmean2d|
    std::vector<std::uint8_t> visible;      // projected and overlapping the image

    explicit RenderGradients(std::size_t n = 0) { resize(n); }

    void resize(std::size_t n) {
        GaussianParams zero;
        zero.rotation = Vec4::Zero();
        d_params.assign(n, zero);
        d_mean2d.assign(n, Vec2::Zero());
        mean2d_grad_norm.assign(n, 0.0);
        visible.assign(n, 0);
    }

    [[nodiscard]] std::size_t size() const noexcept { return d_params.size(); }
};

/// Exact adjoint of `rasterize`: gradients of sum(upstream * image).
inline RenderGradients render_backward(const Rasterization& r, const GaussianScene& scene, const ImageBuffer& upstream) {
    if (upstream.width() != r.width() || upstream.height() != r.height()) {
        throw ArgumentError("render_backward: upstream gradient dimensions do not match the render");
    }
    const auto& splats = r.projection.splats;
    const std::size_t m = splats.size();

    struct SplatAccum {
        Vec2 d_mean2d = Vec2::Zero();
        double d_conic_a = 0.0, d_conic_b = 0.0, d_conic_c = 0.0;  // conic = [[a, b], [b, c]]
        double d_opacity = 0.0;
        Vec3 d_color = Vec3::Zero();
    };
    std::vector<SplatAccum> acc(m);

    for (int y = 0; y < r.height(); ++y) {
        for (int x = 0; x < r.width(); ++x) {
            const Vec3 up(upstream.at(x, y, 0), upstream.at(x, y, 1), upstream.at(x, y, 2));
            if (up.isZero(0.0)) continue;
            const std::size_t pix = static_cast<std::size_t>(y) * r.width() + x;
            Vec3 behind = r.background;  // normalized colour composited behind the current splat
            for (std::uint32_t e = r.hit_offsets[pix + 1]; e-- > r.hit_offsets[pix];) {
                const detail::SplatHit* it = &r.hits[e];
                const detail::SplatCore& s = r.cores[it->splat];
                const Vec3 color(s.r, s.g, s.b);
                SplatAccum& a = acc[it->splat];
                const double weight = it->alpha * it->transmittance;
                a.d_color += weight * up;
                const double d_alpha = it->transmittance * up.dot(color - behind);
                behind = it->alpha * color + (1.0 - it->alpha) * behind;
                if (it->clamped) continue;

                a.d_opacity += d_alpha * it->gauss;
                const double dg = d_alpha * s.opacity * it->gauss;  // dL/d(power)
                const double dx = x - s.mx;
                const double dy = y - s.my;
                a.d_mean2d.x() += dg * (s.ca * dx + s.cb * dy);
                a.d_mean2d.y() += dg * (s.cb * dx + s.cc * dy);
                a.d_conic_a += -0.5 * dg * dx * dx;
                a.d_conic_b += -dg * dx * dy;
                a.d_conic_c += -0.5 * dg * dy * dy;
            }
        }
    }

    RenderGradients out(scene.size());
    const auto& in = r.projection.intrinsics;
    const Mat3& w = r.camera.rotation_w2c;
    for (std::size_t k = 0; k < m; ++k) {
        const ProjectedGaussian& s = splats[k];
        const SplatAccum& a = acc[k];
        const GaussianParams& g = scene.gaussians[s.source];
        GaussianParams& d = out.d_params[s.source];
        out.visible[s.source] = r.touches_image[k];
        out.d_mean2d[s.source] = a.d_mean2d;
        out.mean2d_grad_norm[s.source] = a.d_mean2d.norm();

        for (int ch = 0; ch < 3; ++ch) {
            d.color[ch] = (g.color[ch] >= 0.0 && g.color[ch] <= 1.0) ? a.d_color[ch] : 0.0;
        }
        d.opacity_logit = a.d_opacity * s.opacity * (1.0 - s.opacity);

        // conic -> cov2d: dL/dC = -Q G Q with G the symmetric-matrix form of dL/dQ.
        Mat2 g_conic;
        g_conic << a.d_conic_a, 0.5 * a.d_conic_b, 0.5 * a.d_conic_b, a.d_conic_c;
        const Mat2 g_cov2d = -s.conic * g_conic * s.conic;

        // cov2d = J M J^T + dilation, M = W Sigma W^T.
        const Mat3 g_cov_cam = s.jacobian.transpose() * g_cov2d * s.jacobian;
        const Eigen::Matrix<double, 2, 3> g_jac = 2.0 * g_cov2d * s.jacobian * s.cov_cam;

        const double px = s.p_cam.x(), py = s.p_cam.y(), pz = s.p_cam.z();
        const double iz = 1.0 / pz, iz2 = iz * iz, iz3 = iz2 * iz;
        Vec3 d_pcam;
        d_pcam.x() = a.d_mean2d.x() * in.fx * iz + g_jac(0, 2) * (-in.fx * iz2);
        d_pcam.y() = a.d_mean2d.y() * in.fy * iz + g_jac(1, 2) * (-in.fy * iz2);
        d_pcam.z() = -a.d_mean2d.x() * in.fx * px * iz2 - a.d_mean2d.y() * in.fy * py * iz2 +
                     g_jac(0, 0) * (-in.fx * iz2) + g_jac(0, 2) * (2.0 * in.fx * px * iz3) +
                     g_jac(1, 1) * (-in.fy * iz2) + g_jac(1, 2) * (2.0 * in.fy * py * iz3);
        d.position = w.transpose() * d_pcam;

        // Sigma = R D R^T, D = diag(exp(2 log_scale)).
        const Mat3 g_sigma = w.transpose() * g_cov_cam * w;
        const Mat3 rot = quaternion_to_rotation(g.rotation);
        const Vec3 var = (2.0 * g.log_scale).array().exp();
        const Mat3 projected = rot.transpose() * g_sigma * rot;
        for (int ax = 0; ax < 3; ++ax) d.log_scale[ax] = 2.0 * var[ax] * projected(ax, ax);
        const Mat3 g_rot = 2.0 * g_sigma * rot * var.asDiagonal();
        d.rotation = quaternion_to_rotation_backward(g.rotation, g_rot);
    }
    return out;
}

inline RenderGradients render_backward(const GaussianScene& scene, const Camera& camera, double scale,
                                       const ImageBuffer& upstream, RenderSettings settings = {}) {
    return render_backward(rasterize(scene, camera, scale, settings), scene, upstream);
}

}  // namespace splatsr
