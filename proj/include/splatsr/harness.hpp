// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "splatsr/config.hpp"
#include "splatsr/dataset.hpp"
#include "splatsr/png_io.hpp"
#include "splatsr/renderer.hpp"
#include "splatsr/scene_io.hpp"
#include "splatsr/trainer.hpp"

namespace splatsr {

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Unit vector i of n, spread evenly over the sphere.
inline Vec3 fibonacci_direction(int i, int n) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    return {r * std::cos(phi), r * std::sin(phi), z};
}

/// Ground-truth scene. "textured_sphere": flattened Gaussians tiling a sphere surface with a
/// striped colour texture plus per-Gaussian jitter. "random": init_scene_random in the sphere's box.
inline GaussianScene generate_scene(const SceneSpec& spec, const Vec3& background, std::uint64_t seed) {
    if (spec.num_gaussians < 1) throw ArgumentError("scene needs at least one Gaussian");
    if (!(spec.radius > 0.0)) throw ArgumentError("scene radius must be > 0");
    GaussianScene scene;
    if (spec.kind == "random") {
        scene = init_scene_random(spec.num_gaussians,
                                  AxisAlignedBox{Vec3::Constant(-spec.radius), Vec3::Constant(spec.radius)}, seed);
        scene.background_color = background;
        return scene;
    }
    if (spec.kind != "textured_sphere") throw ArgumentError("unknown scene kind '" + spec.kind + "'");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-0.08, 0.08);
    const int n = spec.num_gaussians;
    const double spacing = spec.radius * std::sqrt(4.0 * std::numbers::pi / n);
    const double tangential = 0.6 * spacing;
    const double normal = 0.15 * tangential;
    const double f = spec.texture_frequency;
    scene.background_color = background;
    scene.gaussians.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Vec3 dir = fibonacci_direction(i, n);
        GaussianParams g;
        g.position = spec.radius * dir;
        const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), dir);
        g.rotation = Vec4(q.w(), q.x(), q.y(), q.z());
        g.log_scale = Vec3(std::log(tangential), std::log(tangential), std::log(normal));
        g.opacity_logit = logit(0.9);
        const double theta = std::atan2(dir.y(), dir.x());
        const double phi = std::acos(std::clamp(dir.z(), -1.0, 1.0));
        const Vec3 base(0.5 + 0.35 * std::sin(f * theta), 0.5 + 0.35 * std::sin(f * phi + 1.0),
                        0.5 + 0.35 * std::sin(0.5 * f * (theta + phi)));
        for (int k = 0; k < 3; ++k) g.color[k] = std::clamp(base[k] + jitter(rng), 0.02, 0.98);
        scene.gaussians.push_back(g);
    }
    return scene;
}

inline std::vector<Camera> make_sphere_cameras(int num_views, int resolution, double distance, double focal) {
    std::vector<Camera> cams;
    cams.reserve(static_cast<std::size_t>(num_views));
    for (int i = 0; i < num_views; ++i) {
        const Vec3 eye = distance * fibonacci_direction(i, num_views);
        cams.push_back(Camera::look_at(eye, Vec3::Zero(), Vec3::UnitZ(), focal, resolution, resolution, 0.01));
    }
    return cams;
}

struct SyntheticData {
    Dataset dataset;
    GaussianScene ground_truth;
};

/// Renders HR ground truth, forms LR through `downsample` (clipped to [0,1]), and holds out every
/// `test_stride`-th view.
inline SyntheticData generate_synthetic_dataset(const DatasetConfig& cfg) {
    if (cfg.num_views < 4) throw ArgumentError("generate: num_views must be >= 4");
    if (cfg.factor < 1) throw ArgumentError("generate: factor must be >= 1");
    const int lr_res = cfg.factor > 0 ? downsampled_size(cfg.hr_resolution, cfg.factor) : 0;
    if (cfg.hr_resolution < kSsimWindow * 4 || lr_res < kSsimWindow) {
        throw ArgumentError("generate: resolution " + std::to_string(cfg.hr_resolution) + " with factor " +
                            std::to_string(cfg.factor) + " is too small for the SSIM window");
    }
    SyntheticData out;
    const Vec3 bg(cfg.background[0], cfg.background[1], cfg.background[2]);
    out.ground_truth = generate_scene(cfg.scene, bg, cfg.seed);

    Dataset& d = out.dataset;
    d.factor = cfg.factor;
    d.resample = ResampleSpec{cfg.factor, cfg.antialias};
    d.seed = cfg.seed;
    d.descriptor = cfg.scene.kind + " n=" + std::to_string(cfg.scene.num_gaussians);
    const auto cams =
        make_sphere_cameras(cfg.num_views, cfg.hr_resolution, cfg.camera_distance, cfg.focal_ratio * cfg.hr_resolution);
    const Downsampler down(cfg.hr_resolution, cfg.hr_resolution, d.resample);
    for (const Camera& cam : cams) {
        View v;
        v.camera = cam;
        v.hr = render(out.ground_truth, cam, 1.0);
        v.lr = down.apply(*v.hr);
        for (auto& x : v.lr.data()) x = std::clamp(x, 0.0, 1.0);  // bicubic overshoot; a sensor clips
        d.views.push_back(std::move(v));
    }
    Dataset::split_every(cfg.num_views, cfg.test_stride, d.train_ids, d.test_ids);
    d.validate();
    return out;
}

inline PriorProvider make_prior(const PriorConfig& cfg, const Dataset& data) {
    switch (cfg.kind) {
        case PriorKind::bicubic: return PriorProvider::bicubic(data.factor);
        case PriorKind::file: return PriorProvider::from_files(data.factor, cfg.directory);
        case PriorKind::oracle: {
            std::vector<std::optional<ImageBuffer>> hr;
            hr.reserve(data.views.size());
            for (const auto& v : data.views) hr.push_back(v.hr);
            return PriorProvider::oracle(data.factor, std::move(hr));
        }
    }
    throw ArgumentError("unknown prior kind");
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct ViewMetrics {
    int view = 0;
    double psnr = 0.0;  // sentinel-capped
    double ssim = 0.0;
};

struct ExperimentReport {
    std::string arm;
    std::vector<ViewMetrics> views;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    std::size_t num_gaussians = 0;
    double runtime_seconds = 0.0;
    Json config;
};

/// Renders each listed view at HR and scores it against ground truth.
inline ExperimentReport evaluate(const GaussianScene& scene, const Dataset& data, const std::vector<int>& ids) {
    if (ids.empty()) throw DataError("evaluate: no views to evaluate");
    ExperimentReport rep;
    rep.num_gaussians = scene.size();
    double sum_psnr = 0.0, sum_ssim = 0.0;
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= data.views.size()) throw DataError("evaluate: bad view id");
        const View& v = data.views[id];
        if (!v.hr) throw DataError("evaluate: view " + std::to_string(id) + " has no HR ground truth");
        const ImageBuffer img = render(scene, v.camera, 1.0);
        ViewMetrics m{id, reported_psnr(psnr(img, *v.hr)), ssim(img, *v.hr)};
        sum_psnr += m.psnr;
        sum_ssim += m.ssim;
        rep.views.push_back(m);
    }
    rep.mean_psnr = sum_psnr / static_cast<double>(ids.size());
    rep.mean_ssim = sum_ssim / static_cast<double>(ids.size());
    return rep;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct ArmResult {
    ExperimentReport report;
    TrainResult training;
};

/// Trains one configuration and evaluates it on the test split.
inline ArmResult run_arm(const std::string& arm, const Dataset& data, PriorProvider* prior, const ExperimentConfig& cfg,
                         const TrainOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    ArmResult out;
    out.training = train(data, prior, cfg.objective, cfg.train, options);
    out.report = evaluate(out.training.scene, data, data.test_ids);
    out.report.arm = arm;
    ExperimentConfig snapshot = cfg;
    snapshot.supervision = options.supervision;
    out.report.config = to_json(snapshot);
    out.report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

/// Baseline (LR only), +prior (lambda_e = 1) and full (configured lambda_e); optionally a
/// full run warm-started from the baseline scene.
inline std::vector<ArmResult> run_ablation(const Dataset& data, PriorProvider& prior, const ExperimentConfig& cfg) {
    std::vector<ArmResult> arms;

    TrainOptions base;
    base.supervision = Supervision::lr_only;
    arms.push_back(run_arm("baseline", data, nullptr, cfg, base));

    ExperimentConfig prior_cfg = cfg;
    prior_cfg.objective.lambda_e = 1.0;
    TrainOptions unified;
    unified.supervision = Supervision::unified;
    arms.push_back(run_arm("prior", data, &prior, prior_cfg, unified));

    arms.push_back(run_arm("full", data, &prior, cfg, unified));

    if (cfg.warm_start_arm) {
        TrainOptions warm = unified;
        warm.initial_scene = arms.front().training.scene;
        arms.push_back(run_arm("full_warm_start", data, &prior, cfg, warm));
    }
    return arms;
}

struct SweepRow {
    double lambda_e = 0.0;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    std::size_t num_gaussians = 0;
};

inline std::vector<SweepRow> sweep_lambda(const Dataset& data, PriorProvider& prior, const ExperimentConfig& cfg,
                                          const std::vector<double>& lambdas) {
    std::vector<SweepRow> rows;
    for (double l : lambdas) {
        if (!(l >= 0.0 && l <= 1.0)) throw ArgumentError("sweep: lambda_e values must lie in [0,1]");
    }
    for (double l : lambdas) {
        ExperimentConfig c = cfg;
        c.objective.lambda_e = l;
        if (cfg.sweep_iterations > 0) c.train.iterations = cfg.sweep_iterations;
        TrainOptions opt;
        opt.supervision = Supervision::unified;
        const ArmResult r = run_arm("sweep", data, &prior, c, opt);
        rows.push_back({l, r.report.mean_psnr, r.report.mean_ssim, r.report.num_gaussians});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Plotting
// ---------------------------------------------------------------------------

namespace detail {

inline void plot_dot(ImageBuffer& img, int x, int y, const Vec3& c, int radius) {
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            const int px = x + dx, py = y + dy;
            if (px < 0 || py < 0 || px >= img.width() || py >= img.height()) continue;
            if (dx * dx + dy * dy > radius * radius) continue;
            for (int k = 0; k < 3; ++k) img.at(px, py, k) = c[k];
        }
    }
}

inline void plot_line(ImageBuffer& img, double x0, double y0, double x1, double y1, const Vec3& c, int thickness) {
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        plot_dot(img, static_cast<int>(std::lround(x0 + t * (x1 - x0))), static_cast<int>(std::lround(y0 + t * (y1 - y0))),
                 c, thickness);
    }
}

}  // namespace detail

/// Line plot of y against x on a white canvas with axes and 1 dB grid lines.
inline ImageBuffer draw_line_plot(const std::vector<double>& xs, const std::vector<double>& ys, int width = 480,
                                  int height = 320) {
    if (xs.size() != ys.size() || xs.empty()) throw ArgumentError("plot: need matching, non-empty series");
    ImageBuffer img(width, height, 1.0);
    const int left = 48, right = 16, top = 16, bottom = 40;
    const double x_lo = *std::min_element(xs.begin(), xs.end());
    const double x_hi = std::max(*std::max_element(xs.begin(), xs.end()), x_lo + 1e-9);
    double y_lo = std::floor(*std::min_element(ys.begin(), ys.end())) - 1.0;
    double y_hi = std::ceil(*std::max_element(ys.begin(), ys.end())) + 1.0;
    auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * (width - left - right); };
    auto py = [&](double y) { return height - bottom - (y - y_lo) / (y_hi - y_lo) * (height - top - bottom); };
    const Vec3 grid(0.85, 0.85, 0.85), axis(0.0, 0.0, 0.0), series(0.1, 0.3, 0.8);
    for (double y = y_lo; y <= y_hi + 1e-9; y += 1.0) detail::plot_line(img, left, py(y), width - right, py(y), grid, 0);
    detail::plot_line(img, left, height - bottom, width - right, height - bottom, axis, 1);
    detail::plot_line(img, left, top, left, height - bottom, axis, 1);
    for (double x : xs) detail::plot_line(img, px(x), height - bottom, px(x), height - bottom + 6, axis, 0);
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        detail::plot_line(img, px(xs[i]), py(ys[i]), px(xs[i + 1]), py(ys[i + 1]), series, 1);
    }
    for (std::size_t i = 0; i < xs.size(); ++i) {
        detail::plot_dot(img, static_cast<int>(std::lround(px(xs[i]))), static_cast<int>(std::lround(py(ys[i]))), series, 4);
    }
    return img;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline std::string format_number(double v) { return detail::format_double(v); }

inline std::string format_report_csv(const std::vector<ExperimentReport>& reports) {
    std::string s = "arm,view,psnr,ssim\n";
    for (const auto& r : reports) {
        for (const auto& v : r.views) {
            s += r.arm + ',' + std::to_string(v.view) + ',' + format_number(v.psnr) + ',' + format_number(v.ssim) + '\n';
        }
        s += r.arm + ",mean," + format_number(r.mean_psnr) + ',' + format_number(r.mean_ssim) + '\n';
    }
    return s;
}

inline std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
    std::string s = "lambda_e,mean_psnr,mean_ssim,num_gaussians\n";
    for (const auto& r : rows) {
        s += format_number(r.lambda_e) + ',' + format_number(r.mean_psnr) + ',' + format_number(r.mean_ssim) + ',' +
             std::to_string(r.num_gaussians) + '\n';
    }
    return s;
}

inline Json report_to_json(const ExperimentReport& r) {
    Json views = Json::array();
    for (const auto& v : r.views) views.push_back({{"view", v.view}, {"psnr", v.psnr}, {"ssim", v.ssim}});
    return {{"arm", r.arm},           {"mean_psnr", r.mean_psnr},   {"mean_ssim", r.mean_ssim},
            {"num_gaussians", r.num_gaussians}, {"runtime_seconds", r.runtime_seconds}, {"views", views},
            {"config", r.config}};
}

inline void write_json(const Json& j, const std::filesystem::path& path) {
    detail::write_file_atomic(path, j.dump(2) + "\n");
}

inline std::string view_file_name(int id) {
    char name[32];
    std::snprintf(name, sizeof name, "%05d.png", id);
    return name;
}

/// Directory layout: cameras.txt, dataset.json, ground_truth.scene, hr/NNNNN.png, lr/NNNNN.png
/// (16-bit PNGs).
inline void save_dataset(const SyntheticData& data, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "hr");
    fs::create_directories(dir / "lr");
    const Dataset& d = data.dataset;
    std::vector<Camera> cams;
    for (const auto& v : d.views) cams.push_back(v.camera);
    save_cameras(cams, dir / "cameras.txt");
    save_scene(data.ground_truth, dir / "ground_truth.scene");
    for (std::size_t i = 0; i < d.views.size(); ++i) {
        if (d.views[i].hr) write_png(*d.views[i].hr, dir / "hr" / view_file_name(static_cast<int>(i)), 16);
        write_png(d.views[i].lr, dir / "lr" / view_file_name(static_cast<int>(i)), 16);
    }
    Json meta = {{"format", "splatsr-dataset"},
                 {"version", 1},
                 {"factor", d.factor},
                 {"antialias", d.resample.antialias},
                 {"train_ids", d.train_ids},
                 {"test_ids", d.test_ids},
                 {"seed", d.seed},
                 {"descriptor", d.descriptor}};
    write_json(meta, dir / "dataset.json");
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
    Json meta = read_json_file(dir / "dataset.json");
    Dataset d;
    try {
        if (meta.at("format") != "splatsr-dataset") throw DataError("dataset.json: unexpected format");
        d.factor = meta.at("factor").get<int>();
        d.resample = ResampleSpec{d.factor, meta.at("antialias").get<bool>()};
        d.train_ids = meta.at("train_ids").get<std::vector<int>>();
        d.test_ids = meta.at("test_ids").get<std::vector<int>>();
        d.seed = meta.at("seed").get<std::uint64_t>();
        d.descriptor = meta.at("descriptor").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("dataset.json: ") + e.what());
    }
    const auto cams = load_cameras(dir / "cameras.txt");
    for (std::size_t i = 0; i < cams.size(); ++i) {
        View v;
        v.camera = cams[i];
        const fs::path hr = dir / "hr" / view_file_name(static_cast<int>(i));
        if (fs::exists(hr)) v.hr = read_png(hr);
        v.lr = read_png(dir / "lr" / view_file_name(static_cast<int>(i)));
        d.views.push_back(std::move(v));
    }
    d.validate();
    return d;
}

}  // namespace splatsr
