// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace splatsr;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("splatsr_test_scene_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST(Covariance, IdentityCase) {
    const Mat3 s = covariance_from_params(Vec3::Zero(), Vec4(1, 0, 0, 0));
    EXPECT_LT((s - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Covariance, ScaledAxis) {
    const Mat3 s = covariance_from_params(Vec3(std::log(2.0), 0, 0), Vec4(1, 0, 0, 0));
    EXPECT_NEAR(s(0, 0), 4.0, 1e-14);
    EXPECT_NEAR(s(1, 1), 1.0, 1e-14);
    EXPECT_NEAR(s(2, 2), 1.0, 1e-14);
    EXPECT_NEAR(s(0, 1), 0.0, 1e-15);
}

TEST(Covariance, MatchesQuaternionOracle) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 0.7);
    for (int i = 0; i < 200; ++i) {
        const Vec4 q = oracle::random_quaternion(rng);
        const Vec3 ls(n(rng), n(rng), n(rng));
        const Mat3 got = covariance_from_params(ls, q);
        const Mat3 want = oracle::covariance(ls, q);
        EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-12) << "case " << i;
    }
}

TEST(Covariance, SpectrumEqualsSquaredScales) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n(0.0, 0.5);
    for (int i = 0; i < 100; ++i) {
        const Vec3 ls(n(rng), n(rng), n(rng));
        const Mat3 s = covariance_from_params(ls, oracle::random_quaternion(rng));
        EXPECT_LT((s - s.transpose()).cwiseAbs().maxCoeff(), 1e-15);
        Eigen::SelfAdjointEigenSolver<Mat3> es(s);
        Vec3 want = (2.0 * ls).array().exp();
        std::sort(want.data(), want.data() + 3);
        EXPECT_LT((es.eigenvalues() - want).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
    }
}

TEST(Covariance, RotationIsNormalized) {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 50; ++i) {
        const Vec4 q = 5.0 * oracle::random_quaternion(rng);
        const Mat3 r = quaternion_to_rotation(q);
        EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
    }
}

TEST(Covariance, ZeroQuaternionThrows) {
    EXPECT_THROW(covariance_from_params(Vec3::Zero(), Vec4::Zero()), DegenerateRotationError);
}

TEST(InitScene, SingleGaussianInsideBox) {
    const AxisAlignedBox box{Vec3::Zero(), Vec3::Ones()};
    const GaussianScene s = init_scene_random(1, box, 7);
    ASSERT_EQ(s.size(), 1u);
    const Vec3 p = s.gaussians[0].position;
    EXPECT_TRUE((p.array() >= 0.0).all() && (p.array() <= 1.0).all());
}

TEST(InitScene, DeterministicAndBounded) {
    const AxisAlignedBox box{Vec3(-1, -2, -3), Vec3(1, 2, 3)};
    const GaussianScene a = init_scene_random(100, box, 42);
    const GaussianScene b = init_scene_random(100, box, 42);
    EXPECT_TRUE(a == b);
    const double expected = std::log(box.diagonal() / std::cbrt(100.0) / 4.0);
    for (const auto& g : a.gaussians) {
        EXPECT_TRUE((g.position.array() >= box.min.array()).all());
        EXPECT_TRUE((g.position.array() <= box.max.array()).all());
        EXPECT_DOUBLE_EQ(g.log_scale.x(), expected);
        EXPECT_DOUBLE_EQ(g.opacity(), 0.5);
        EXPECT_TRUE((g.color.array() >= 0.0).all() && (g.color.array() <= 1.0).all());
    }
    EXPECT_FALSE(a == init_scene_random(100, box, 43));
}

TEST(InitScene, RejectsBadInput) {
    EXPECT_THROW(init_scene_random(0, AxisAlignedBox{}, 0), ArgumentError);
    EXPECT_THROW(init_scene_random(3, AxisAlignedBox{Vec3::Zero(), Vec3(1, 0, 1)}, 0), ArgumentError);
}

TEST(Camera, ScaledIntrinsics) {
    Camera c;
    c.fx = 100;
    c.fy = 80;
    c.cx = 63.5;
    c.cy = 31.5;
    c.width = 128;
    c.height = 64;
    const auto k = c.at_scale(0.25);
    EXPECT_DOUBLE_EQ(k.fx, 25.0);
    EXPECT_DOUBLE_EQ(k.fy, 20.0);
    EXPECT_DOUBLE_EQ(k.cx, (63.5 + 0.5) * 0.25 - 0.5);
    EXPECT_DOUBLE_EQ(k.cy, (31.5 + 0.5) * 0.25 - 0.5);
    EXPECT_EQ(k.width, 32);
    EXPECT_EQ(k.height, 16);
    EXPECT_THROW(static_cast<void>(c.at_scale(0.0)), ArgumentError);
}

TEST(Camera, LookAtIsOrthonormal) {
    const Camera c = Camera::look_at(Vec3(3, -2, 1), Vec3::Zero(), Vec3::UnitZ(), 50, 64, 64);
    EXPECT_NO_THROW(c.validate());
    EXPECT_LT((c.center() - Vec3(3, -2, 1)).norm(), 1e-12);
    const Vec3 origin_cam = c.rotation_w2c * Vec3::Zero() + c.translation_w2c;
    EXPECT_NEAR(origin_cam.x(), 0.0, 1e-12);
    EXPECT_NEAR(origin_cam.y(), 0.0, 1e-12);
    EXPECT_GT(origin_cam.z(), 0.0);
    const Camera pole = Camera::look_at(Vec3(0, 0, 4), Vec3::Zero(), Vec3::UnitZ(), 50, 64, 64);
    EXPECT_NO_THROW(pole.validate());
}

TEST(SceneIO, RoundTripIsBitExact) {
    std::mt19937_64 rng(5);
    GaussianScene s = init_scene_random(37, AxisAlignedBox{}, 3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& g : s.gaussians) {
        g.rotation = oracle::random_quaternion(rng);
        g.opacity_logit = n(rng) * 1e-7;
        g.color.x() = n(rng) * 1e300;
    }
    s.background_color = Vec3(0.1, 1.0 / 3.0, 1.0);
    const auto dir = temp_dir("roundtrip");
    save_scene(s, dir / "a.scene");
    EXPECT_TRUE(load_scene(dir / "a.scene") == s);
}

TEST(SceneIO, EmptyScene) {
    const auto dir = temp_dir("empty");
    GaussianScene s;
    save_scene(s, dir / "e.scene");
    const GaussianScene back = load_scene(dir / "e.scene");
    EXPECT_EQ(back.size(), 0u);
    EXPECT_TRUE(back == s);
}

TEST(SceneIO, TruncatedFileReportsLine) {
    const GaussianScene s = init_scene_random(4, AxisAlignedBox{}, 1);
    std::string text = format_scene(s);
    text = text.substr(0, text.rfind('\n', text.size() - 2));  // drop the last record
    std::istringstream in(text);
    try {
        parse_scene(in, "truncated");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
        EXPECT_GT(e.line(), 0);
    }
}

TEST(SceneIO, MalformedNumber) {
    std::istringstream in("splatsr-scene 1 1 0 0 0\n1 2 3 0 0 0 1 0 0 0 0 0.5 0.5 nope\n");
    EXPECT_THROW(parse_scene(in), ParseError);
}

TEST(CameraIO, RoundTripAndValidation) {
    std::vector<Camera> cams;
    for (int i = 0; i < 5; ++i) {
        cams.push_back(Camera::look_at(Vec3(4 * std::cos(i), 4 * std::sin(i), 0.3 * i), Vec3::Zero(), Vec3::UnitZ(),
                                       100.0 + i / 3.0, 96, 64));
    }
    const auto dir = temp_dir("cams");
    save_cameras(cams, dir / "cameras.txt");
    const auto back = load_cameras(dir / "cameras.txt");
    ASSERT_EQ(back.size(), cams.size());
    for (std::size_t i = 0; i < cams.size(); ++i) EXPECT_TRUE(back[i] == cams[i]);

    std::string text = format_cameras(cams);
    const auto pos = text.find("rotation_w2c");
    text.replace(text.find(' ', pos) + 1, 1, "7");  // break orthonormality of camera 0
    std::istringstream in(text);
    EXPECT_THROW(parse_cameras(in), DataError);
}
