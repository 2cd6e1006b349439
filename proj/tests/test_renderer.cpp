// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace splatsr;

namespace {

double max_abs_diff(const ImageBuffer& a, const ImageBuffer& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Camera front_camera(int res, double focal) {
    return Camera::look_at(Vec3(0, 0, -4), Vec3::Zero(), Vec3::UnitY(), focal, res, res);
}

}  // namespace

TEST(Projection, ScreenCovarianceMatchesDifferencedJacobian) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 50; ++i) {
        const Camera cam = fixture::random_camera(rng, 32, 1.0);
        const GaussianScene s = fixture::random_scene(rng, 5);
        const Projection p = project(s, cam, 1.0);
        for (const auto& sp : p.splats) {
            const GaussianParams& g = s.gaussians[sp.source];
            const Vec3 pc = cam.rotation_w2c * g.position + cam.translation_w2c;
            const Mat3 cc = cam.rotation_w2c * oracle::covariance(g.log_scale, g.rotation) * cam.rotation_w2c.transpose();
            Eigen::Matrix2d want = oracle::screen_covariance_fd(pc, cc, cam.fx, cam.fy, cam.cx, cam.cy);
            want(0, 0) += 0.3;
            want(1, 1) += 0.3;
            EXPECT_LT((sp.cov2d - want).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, want.cwiseAbs().maxCoeff()));
            const Eigen::Vector2d m = oracle::project_point(pc, cam.fx, cam.fy, cam.cx, cam.cy);
            EXPECT_LT((sp.mean2d - m).norm(), 1e-9);
        }
    }
}

TEST(Projection, CullsBehindNearPlane) {
    GaussianScene s;
    GaussianParams g;
    g.position = Vec3(0, 0, -5);  // behind a camera at z = -4 looking toward +z
    s.gaussians.push_back(g);
    EXPECT_TRUE(project(s, front_camera(16, 20), 1.0).splats.empty());
}

TEST(Render, MatchesBruteForceCompositingOracle) {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 40; ++i) {
        const Camera cam = fixture::random_camera(rng, 24, 1.0);
        GaussianScene s = fixture::random_scene(rng, 5);
        // include colours outside [0,1] to exercise shading-time clamping
        s.gaussians[0].color = Vec3(-0.5, 1.7, 0.4);
        for (bool early : {true, false}) {
            const ImageBuffer got = render(s, cam, 1.0, RenderSettings{early});
            const ImageBuffer want = oracle::render(s, cam, 1.0, early);
            EXPECT_LT(max_abs_diff(got, want), 1e-12) << "case " << i;
        }
    }
}

TEST(Render, EmptySceneIsBackground) {
    GaussianScene s;
    s.background_color = Vec3(0.2, 0.4, 0.6);
    const ImageBuffer img = render(s, front_camera(16, 20), 1.0);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) EXPECT_EQ(img.at(x, y, c), s.background_color[c]);
}

TEST(Render, OutputStaysInUnitRange) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 30; ++i) {
        GaussianScene s = fixture::random_scene(rng, 5);
        for (auto& g : s.gaussians) g.color *= 3.0;  // clamped at shading
        const ImageBuffer img = render(s, fixture::random_camera(rng, 16, 1.0), 1.0);
        for (double v : img.data()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0 + 1e-15);
        }
    }
}

TEST(Render, ScaleChangesResolutionOnly) {
    std::mt19937_64 rng(4);
    const Camera cam = fixture::random_camera(rng, 64, 1.0);
    const GaussianScene s = fixture::random_scene(rng, 5);
    EXPECT_EQ(render(s, cam, 0.25).width(), 16);
    EXPECT_EQ(render(s, cam, 0.25).height(), 16);
    // pixel centres at integer coordinates: a rendered mean lands at the same physical spot
    const auto hi = project(s, cam, 1.0), lo = project(s, cam, 0.25);
    for (std::size_t k = 0; k < hi.splats.size(); ++k) {
        const Vec2 mapped = (hi.splats[k].mean2d + Vec2::Constant(0.5)) * 0.25 - Vec2::Constant(0.5);
        EXPECT_LT((mapped - lo.splats[k].mean2d).norm(), 1e-12);
    }
}

TEST(Render, InvariantToSceneOrderingWithDistinctDepths) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 20; ++i) {
        const Camera cam = fixture::random_camera(rng, 16, 1.0);
        GaussianScene s = fixture::random_scene(rng, 5);
        GaussianScene t = s;
        std::reverse(t.gaussians.begin(), t.gaussians.end());
        EXPECT_TRUE(render(s, cam, 1.0) == render(t, cam, 1.0));
    }
}

TEST(Render, EqualDepthTiesBreakBySourceIndex) {
    GaussianScene s;
    for (int i = 0; i < 2; ++i) {
        GaussianParams g;
        g.position = Vec3(0, 0, 0);
        g.log_scale = Vec3::Constant(std::log(0.3));
        g.opacity_logit = logit(0.7);
        g.color = i == 0 ? Vec3(1, 0, 0) : Vec3(0, 0, 1);
        s.gaussians.push_back(g);
    }
    const Rasterization r = rasterize(s, front_camera(16, 20), 1.0);
    const PixelTrace t = trace_pixel(r, 8, 8);
    ASSERT_EQ(t.contributions.size(), 2u);
    EXPECT_EQ(t.contributions[0].source, 0u);
    EXPECT_GT(r.image.at(8, 8, 0), r.image.at(8, 8, 2));
}

TEST(Render, DeterministicAcrossCalls) {
    std::mt19937_64 rng(6);
    const Camera cam = fixture::random_camera(rng, 32, 1.0);
    const GaussianScene s = fixture::random_scene(rng, 5);
    EXPECT_TRUE(render(s, cam, 1.0) == render(s, cam, 1.0));
}

TEST(Compositing, WeightsAndTransmittanceSumToOne) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> px(0, 31);
    int pixels = 0;
    double worst = 0.0;
    while (pixels < 1000) {
        const Camera cam = fixture::random_camera(rng, 32, 1.0);
        const GaussianScene s = fixture::random_scene(rng, 5);
        const Rasterization r = rasterize(s, cam, 1.0, RenderSettings{false});
        for (int k = 0; k < 50; ++k, ++pixels) {
            const PixelTrace t = trace_pixel(r, px(rng), px(rng));
            double sum = t.final_transmittance;
            for (const auto& c : t.contributions) sum += c.weight;
            worst = std::max(worst, std::abs(sum - 1.0));
        }
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Compositing, TraceMatchesOracleWeights) {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 20; ++i) {
        const Camera cam = fixture::random_camera(rng, 16, 1.0);
        const GaussianScene s = fixture::random_scene(rng, 5);
        const Rasterization r = rasterize(s, cam, 1.0);
        const auto sp = oracle::splats(s, cam, 1.0);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                const PixelTrace t = trace_pixel(r, x, y);
                const auto o = oracle::composite(sp, s.background_color, x, y, true);
                ASSERT_EQ(t.contributions.size(), o.weights.size());
                for (std::size_t k = 0; k < o.weights.size(); ++k) {
                    EXPECT_EQ(t.contributions[k].source, o.weights[k].first);
                    EXPECT_NEAR(t.contributions[k].weight, o.weights[k].second, 1e-12);
                }
                EXPECT_NEAR(t.final_transmittance, o.transmittance, 1e-12);
            }
    }
}

TEST(Compositing, TracePixelRejectsOutOfRange) {
    GaussianScene s;
    const Rasterization r = rasterize(s, front_camera(8, 10), 1.0);
    EXPECT_THROW(trace_pixel(r, 8, 0), ArgumentError);
    EXPECT_THROW(trace_pixel(r, 0, -1), ArgumentError);
}
