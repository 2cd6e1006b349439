// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

// Random small configurations and the finite-difference gradient checker shared by the unit
// and acceptance tests.

#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "splatsr/splatsr.hpp"

namespace fixture {

using namespace splatsr;

inline Camera random_camera(std::mt19937_64& rng, int resolution, double focal_per_pixel) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec3 dir(n(rng), n(rng), n(rng));
    dir.normalize();
    const double dist = 3.0 + 2.0 * u(rng);
    const Vec3 target(0.2 * (u(rng) - 0.5), 0.2 * (u(rng) - 0.5), 0.2 * (u(rng) - 0.5));
    Vec3 up(n(rng), n(rng), n(rng));
    const double focal = resolution * focal_per_pixel * (0.8 + 0.4 * u(rng));
    return Camera::look_at(dist * dir, target, up.normalized(), focal, resolution, resolution, 0.01);
}

/// Up to `max_count` Gaussians near the origin with colours and opacities kept away from the
/// clamping boundaries.
inline GaussianScene random_scene(std::mt19937_64& rng, int max_count) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    const int count = 1 + static_cast<int>(u(rng) * max_count) % max_count;
    GaussianScene s;
    for (int i = 0; i < count; ++i) {
        GaussianParams g;
        Vec3 p(n(rng), n(rng), n(rng));
        g.position = 0.6 * u(rng) * p.normalized();
        for (int k = 0; k < 3; ++k) g.log_scale[k] = std::log(0.08) + u(rng) * std::log(5.0);
        g.rotation = Vec4(n(rng), n(rng), n(rng), n(rng));
        g.opacity_logit = logit(0.1 + 0.85 * u(rng));
        for (int k = 0; k < 3; ++k) g.color[k] = 0.05 + 0.9 * u(rng);
        s.gaussians.push_back(g);
    }
    for (int k = 0; k < 3; ++k) s.background_color[k] = u(rng);
    return s;
}

inline ImageBuffer random_upstream(std::mt19937_64& rng, int w, int h) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ImageBuffer img(w, h);
    for (auto& v : img.data()) v = u(rng);
    return img;
}

/// Discrete compositing structure of a render: per pixel the contributing sources and
/// clamp flags. Equal signatures mean the render is a smooth function between the points.
inline std::vector<long long> signature(const Rasterization& r) {
    std::vector<long long> sig;
    for (int y = 0; y < r.height(); ++y)
        for (int x = 0; x < r.width(); ++x) {
            const PixelTrace t = trace_pixel(r, x, y);
            sig.push_back(-1);
            for (const auto& c : t.contributions) sig.push_back(static_cast<long long>(c.source) * 2 + (c.clamped ? 1 : 0));
        }
    return sig;
}

inline double* param_slot(GaussianParams& g, int k) {
    if (k < 3) return &g.position[k];
    if (k < 6) return &g.log_scale[k - 3];
    if (k < 10) return &g.rotation[k - 6];
    if (k == 10) return &g.opacity_logit;
    return &g.color[k - 11];
}

inline const char* param_name(int k) {
    static const char* names[14] = {"position.x", "position.y", "position.z", "log_scale.x", "log_scale.y",
                                    "log_scale.z", "rotation.w", "rotation.x", "rotation.y", "rotation.z",
                                    "opacity_logit", "color.r", "color.g", "color.b"};
    return names[k];
}

inline constexpr int kParamsPerGaussian = 14;

struct GradCheckStats {
    int checked = 0;      // configurations fully compared
    int rejected = 0;     // configurations skipped because a step crossed a discrete event
    long long entries = 0;
    long long failures = 0;
    double worst_excess = 0.0;  // max |a - f| / tolerance
    std::string worst;
};

inline bool within(double analytic, double fd, double& ratio) {
    const double tol = std::max(1e-3 * std::max(std::abs(analytic), std::abs(fd)), 1e-6);
    ratio = std::abs(analytic - fd) / tol;
    return ratio <= 1.0;
}

/// A loss evaluated on a render plus its image-space gradient.
using ImageLoss = std::function<double(const ImageBuffer&, ImageBuffer* grad)>;

/// Compares render_backward(upstream = dLoss/dImage) against central differences of
/// Loss(render(theta)) for every parameter. Returns false when the configuration was rejected.
inline bool check_configuration(const GaussianScene& scene, const Camera& cam, double scale, const ImageLoss& loss,
                                GradCheckStats& stats, const std::string& label, double h = 1e-6) {
    const Rasterization r0 = rasterize(scene, cam, scale);
    const auto sig0 = signature(r0);
    ImageBuffer up;
    loss(r0.image, &up);
    const RenderGradients g = render_backward(r0, scene, up);

    struct Entry {
        double analytic, fd;
        std::size_t gaussian;
        int param;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        for (int k = 0; k < kParamsPerGaussian; ++k) {
            GaussianScene plus = scene, minus = scene;
            *param_slot(plus.gaussians[i], k) += h;
            *param_slot(minus.gaussians[i], k) -= h;
            const Rasterization rp = rasterize(plus, cam, scale);
            const Rasterization rm = rasterize(minus, cam, scale);
            if (signature(rp) != sig0 || signature(rm) != sig0) {
                ++stats.rejected;
                return false;
            }
            const double fd = (loss(rp.image, nullptr) - loss(rm.image, nullptr)) / (2.0 * h);
            GaussianParams d = g.d_params[i];
            entries.push_back({*param_slot(d, k), fd, i, k});
        }
    }
    ++stats.checked;
    for (const auto& e : entries) {
        double ratio = 0.0;
        ++stats.entries;
        if (!within(e.analytic, e.fd, ratio)) ++stats.failures;
        if (ratio > stats.worst_excess) {
            stats.worst_excess = ratio;
            stats.worst = label + " gaussian " + std::to_string(e.gaussian) + " " + param_name(e.param) +
                          ": analytic " + std::to_string(e.analytic) + " fd " + std::to_string(e.fd);
        }
    }
    return true;
}

/// Renderer-only checks: Loss = sum(upstream * image) on 16x16 renders.
inline GradCheckStats check_render_gradients(std::uint64_t seed, int configs) {
    std::mt19937_64 rng(seed);
    GradCheckStats stats;
    for (int attempt = 0; stats.checked < configs && attempt < configs * 20; ++attempt) {
        const Camera cam = random_camera(rng, 16, 1.1);
        const GaussianScene scene = random_scene(rng, 5);
        const ImageBuffer up = random_upstream(rng, 16, 16);
        ImageLoss loss = [&](const ImageBuffer& img, ImageBuffer* grad) {
            double s = 0.0;
            for (std::size_t i = 0; i < img.size(); ++i) s += up[i] * img[i];
            if (grad) *grad = up;
            return s;
        };
        const Rasterization probe = rasterize(scene, cam, 1.0);
        bool visible = false;
        for (auto t : probe.touches_image) visible = visible || t;
        if (!visible) continue;
        check_configuration(scene, cam, 1.0, loss, stats, "render config " + std::to_string(attempt));
    }
    return stats;
}

/// Full objective checks: total = w_p * L_prior(render, pseudo) + w_r * L_reg(F(render), lr) on
/// 64x64 renders with 16x16 LR targets. Targets sit at least 0.05 away from the initial render
/// per element so no L1 kink is crossed by the difference step.
inline GradCheckStats check_objective_gradients(std::uint64_t seed, int configs) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GradCheckStats stats;
    const ResampleSpec spec{4, true};
    const Downsampler down(64, 64, spec);
    for (int attempt = 0; stats.checked < configs && attempt < configs * 20; ++attempt) {
        const Camera cam = random_camera(rng, 64, 1.1);
        const GaussianScene scene = random_scene(rng, 5);
        ObjectiveConfig cfg;
        cfg.lambda_e = u(rng);
        cfg.lambda_tex = u(rng);
        cfg.lambda_cvc = u(rng);
        const ImageBuffer r0 = render(scene, cam, 1.0);
        auto offset = [&](const ImageBuffer& base) {
            ImageBuffer t = base;
            for (auto& v : t.data()) v += (u(rng) < 0.5 ? -1.0 : 1.0) * (0.05 + 0.15 * u(rng));
            return t;
        };
        const ImageBuffer pseudo = offset(r0);
        const ImageBuffer lr = offset(down.apply(r0));
        ImageLoss loss = [&](const ImageBuffer& img, ImageBuffer* grad) {
            const TermResult p = loss_prior(img, pseudo, cfg);
            const TermResult q = loss_reg(img, lr, down, cfg);
            if (grad) *grad = combine_gradients(p.grad, q.grad, cfg, 1);
            return total_loss(p.value, q.value, cfg, 1);
        };
        bool visible = false;
        for (auto t : rasterize(scene, cam, 1.0).touches_image) visible = visible || t;
        if (!visible) continue;
        check_configuration(scene, cam, 1.0, loss, stats, "objective config " + std::to_string(attempt));
    }
    return stats;
}

}  // namespace fixture
