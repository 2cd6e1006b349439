// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "splatsr/splatsr.hpp"

using namespace splatsr;
namespace fs = std::filesystem;

namespace {

DatasetConfig small_config() {
    DatasetConfig d;
    d.scene.num_gaussians = 150;
    d.num_views = 8;
    d.hr_resolution = 48;
    return d;
}

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("splatsr_test_harness_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SPLATSR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Split, EveryEighthViewIsHeldOut) {
    std::vector<int> train, test;
    Dataset::split_every(8, 8, train, test);
    EXPECT_EQ(test, std::vector<int>{0});
    EXPECT_EQ(train.size(), 7u);
    Dataset::split_every(16, 8, train, test);
    EXPECT_EQ(test, (std::vector<int>{0, 8}));
}

TEST(Synthetic, SizesAndDeterminism) {
    DatasetConfig d = small_config();
    const SyntheticData a = generate_synthetic_dataset(d);
    ASSERT_EQ(a.dataset.views.size(), 8u);
    EXPECT_EQ(a.dataset.views[0].lr.width(), 12);
    EXPECT_EQ(a.dataset.views[0].hr->width(), 48);
    const SyntheticData b = generate_synthetic_dataset(d);
    EXPECT_TRUE(a.ground_truth == b.ground_truth);
    for (std::size_t i = 0; i < a.dataset.views.size(); ++i) EXPECT_TRUE(a.dataset.views[i].lr == b.dataset.views[i].lr);
    d.seed = 1;
    EXPECT_FALSE(generate_synthetic_dataset(d).ground_truth == a.ground_truth);

    DatasetConfig ref;
    ref.scene.num_gaussians = 50;
    const SyntheticData r = generate_synthetic_dataset(ref);
    EXPECT_EQ(r.dataset.views[0].lr.width(), 32);
    EXPECT_EQ(r.dataset.test_ids, (std::vector<int>{0, 8}));
}

TEST(Synthetic, RejectsTooSmall) {
    DatasetConfig d = small_config();
    d.hr_resolution = 40;
    EXPECT_THROW(generate_synthetic_dataset(d), ArgumentError);
}

TEST(Evaluate, GroundTruthHitsSentinel) {
    const SyntheticData d = generate_synthetic_dataset(small_config());
    const ExperimentReport r = evaluate(d.ground_truth, d.dataset, d.dataset.test_ids);
    EXPECT_EQ(r.mean_psnr, kPsnrSentinel);
    EXPECT_NEAR(r.mean_ssim, 1.0, 1e-12);
}

TEST(Evaluate, MeanIsAverageOfViews) {
    const SyntheticData d = generate_synthetic_dataset(small_config());
    const ExperimentReport r = evaluate(GaussianScene{}, d.dataset, d.dataset.train_ids);
    double s = 0.0;
    for (const auto& v : r.views) {
        EXPECT_TRUE(std::isfinite(v.psnr));
        s += v.psnr;
    }
    EXPECT_NEAR(r.mean_psnr, s / r.views.size(), 1e-12);
    EXPECT_THROW(evaluate(GaussianScene{}, d.dataset, {}), DataError);
}

TEST(DatasetIO, SaveLoadRoundTrip) {
    const SyntheticData d = generate_synthetic_dataset(small_config());
    const auto dir = temp_dir("dataset");
    save_dataset(d, dir);
    const Dataset back = load_dataset(dir);
    ASSERT_EQ(back.views.size(), d.dataset.views.size());
    EXPECT_EQ(back.train_ids, d.dataset.train_ids);
    EXPECT_EQ(back.test_ids, d.dataset.test_ids);
    EXPECT_EQ(back.factor, 4);
    EXPECT_TRUE(load_scene(dir / "ground_truth.scene") == d.ground_truth);
    for (std::size_t i = 0; i < back.views.size(); ++i) {
        EXPECT_TRUE(back.views[i].camera == d.dataset.views[i].camera);
        for (std::size_t k = 0; k < back.views[i].lr.size(); ++k)
            EXPECT_NEAR(back.views[i].lr[k], d.dataset.views[i].lr[k], 0.5 / 65535.0 + 1e-12);
    }
    fs::remove(dir / "lr" / view_file_name(3));
    EXPECT_THROW(load_dataset(dir), DataError);
    EXPECT_THROW(load_dataset(dir / "nope"), DataError);
}

TEST(Plot, DrawsSeriesOnCanvas) {
    const ImageBuffer img = draw_line_plot({0.2, 0.5, 0.8}, {30.0, 31.5, 31.0});
    EXPECT_EQ(img.width(), 480);
    EXPECT_EQ(img.height(), 320);
    int coloured = 0;
    for (std::size_t p = 0; p < img.pixel_count(); ++p) coloured += img[p * 3 + 2] > img[p * 3] + 0.3 ? 1 : 0;
    EXPECT_GT(coloured, 100);
    EXPECT_THROW(draw_line_plot({}, {}), ArgumentError);
}

TEST(Report, CsvLayout) {
    ExperimentReport r;
    r.arm = "full";
    r.views = {{0, 30.5, 0.9}};
    r.mean_psnr = 30.5;
    r.mean_ssim = 0.9;
    r.runtime_seconds = 12.0;
    const std::string csv = format_report_csv({r});
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "arm,view,psnr,ssim");
    EXPECT_NE(csv.find("full,0,"), std::string::npos);
    EXPECT_NE(csv.find("full,mean,"), std::string::npos);
    EXPECT_EQ(csv.find("12"), std::string::npos);  // runtime stays out of the CSV
}

TEST(Cli, ExitCodes) {
    const auto dir = temp_dir("cli");
    EXPECT_EQ(run_cli(""), 1);
    EXPECT_EQ(run_cli("bogus"), 1);
    EXPECT_EQ(run_cli("train --out " + (dir / "t").string() + " --set train.nonsense=1"), 1);
    EXPECT_EQ(run_cli("train --out " + (dir / "t").string() + " --data " + (dir / "missing").string()), 2);
    const std::string gen = "generate --out " + (dir / "data").string() +
                            " --set dataset.hr_resolution=48 dataset.num_views=4 dataset.test_stride=4"
                            " dataset.scene.num_gaussians=100";
    ASSERT_EQ(run_cli(gen), 0);
    EXPECT_TRUE(fs::exists(dir / "data" / "config.json"));
    EXPECT_TRUE(fs::exists(dir / "data" / "lr" / "00001.png"));

    const std::string train = "train --data " + (dir / "data").string() + " --out " + (dir / "run").string() +
                              " --iterations 5 --set train.init_count=20 supervision=reg_only";
    ASSERT_EQ(run_cli(train), 0);
    EXPECT_TRUE(fs::exists(dir / "run" / "final.scene"));
    EXPECT_TRUE(fs::exists(dir / "run" / "final_log.csv"));
    EXPECT_TRUE(fs::exists(dir / "run" / "metrics.csv"));
    EXPECT_NE(slurp(dir / "run" / "config.json").find("\"reg_only\""), std::string::npos);
    {
        std::ofstream bad(dir / "nan.scene");
        bad << "splatsr-scene 1 0 nan 0 0\n";
    }
    EXPECT_EQ(run_cli(train + " --init-scene " + (dir / "nan.scene").string()), 3);

    EXPECT_EQ(run_cli("eval --data " + (dir / "data").string() + " --scene " + (dir / "run" / "final.scene").string() +
                      " --out " + (dir / "ev").string()),
              0);
    EXPECT_EQ(run_cli("render --data " + (dir / "data").string() + " --scene " + (dir / "run" / "final.scene").string() +
                      " --out " + (dir / "rd").string() + " --split all"),
              0);
    EXPECT_TRUE(fs::exists(dir / "rd" / "00003.png"));
    EXPECT_EQ(run_cli("eval --data " + (dir / "data").string() + " --scene " + (dir / "nope.scene").string() +
                      " --out " + (dir / "ev").string()),
              2);
}
