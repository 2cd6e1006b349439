// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "splatsr/splatsr.hpp"

namespace fs = std::filesystem;
using namespace splatsr;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct CommonOptions {
    std::string config_file;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<int> iterations;
    std::optional<double> lambda_e;
    std::optional<std::string> prior;
    std::optional<std::string> prior_dir;
    std::string data_dir;
    std::string out_dir;
};

void add_config_options(CLI::App* app, CommonOptions& o) {
    app->add_option("-c,--config", o.config_file, "JSON experiment config");
    app->add_option("--set", o.overrides, "Override a config key, e.g. --set train.iterations=500")->take_all();
    app->add_option("--seed", o.seed, "Sets dataset.seed and train.seed");
    app->add_option("--iterations", o.iterations, "Sets train.iterations");
    app->add_option("--lambda-e", o.lambda_e, "Sets objective.lambda_e");
    app->add_option("--prior", o.prior, "Sets prior.kind (bicubic, oracle, file)");
    app->add_option("--prior-dir", o.prior_dir, "Sets prior.directory");
}

ExperimentConfig resolve(const CommonOptions& o) {
    std::vector<std::string> ov = o.overrides;
    auto num = [](auto v) {
        std::ostringstream s;
        s.precision(17);
        s << v;
        return s.str();
    };
    if (o.seed) {
        ov.push_back("dataset.seed=" + std::to_string(*o.seed));
        ov.push_back("train.seed=" + std::to_string(*o.seed));
    }
    if (o.iterations) ov.push_back("train.iterations=" + std::to_string(*o.iterations));
    if (o.lambda_e) ov.push_back("objective.lambda_e=" + num(*o.lambda_e));
    if (o.prior) ov.push_back("prior.kind=\"" + *o.prior + "\"");
    if (o.prior_dir) ov.push_back("prior.directory=\"" + *o.prior_dir + "\"");
    return resolve_config(o.config_file, ov);
}

void prepare_out(const std::string& dir, const ExperimentConfig& cfg) {
    if (dir.empty()) throw ArgumentError("--out is required");
    fs::create_directories(dir);
    write_json(to_json(cfg), fs::path(dir) / "config.json");
}

/// Dataset from --data, or synthesized from the config when no directory is given.
Dataset obtain_dataset(const CommonOptions& o, const ExperimentConfig& cfg) {
    if (!o.data_dir.empty()) return load_dataset(o.data_dir);
    return generate_synthetic_dataset(cfg.dataset).dataset;
}

void write_reports(const std::vector<ExperimentReport>& reports, const fs::path& out) {
    detail::write_file_atomic(out / "metrics.csv", format_report_csv(reports));
    Json arr = Json::array();
    for (const auto& r : reports) arr.push_back(report_to_json(r));
    write_json(arr, out / "report.json");
}

void save_training(const TrainResult& t, const fs::path& dir, const std::string& stem) {
    save_scene(t.scene, dir / (stem + ".scene"));
    detail::write_file_atomic(dir / (stem + "_log.csv"), format_train_log(t.log));
}

void print_report(const ExperimentReport& r) {
    std::printf("%-16s psnr %.4f  ssim %.5f  gaussians %zu\n", r.arm.c_str(), r.mean_psnr, r.mean_ssim, r.num_gaussians);
}

int cmd_generate(const CommonOptions& o) {
    const ExperimentConfig cfg = resolve(o);
    prepare_out(o.out_dir, cfg);
    const SyntheticData data = generate_synthetic_dataset(cfg.dataset);
    save_dataset(data, o.out_dir);
    std::printf("wrote %zu views (%zu train, %zu test) to %s\n", data.dataset.views.size(), data.dataset.train_ids.size(),
                data.dataset.test_ids.size(), o.out_dir.c_str());
    return kOk;
}

int cmd_train(const CommonOptions& o, const std::string& init_scene) {
    const ExperimentConfig cfg = resolve(o);
    prepare_out(o.out_dir, cfg);
    const fs::path out(o.out_dir);
    const Dataset data = obtain_dataset(o, cfg);
    PriorProvider prior = make_prior(cfg.prior, data);
    TrainOptions opt;
    opt.supervision = cfg.supervision;
    if (!init_scene.empty()) opt.initial_scene = load_scene(init_scene);
    if (cfg.train.checkpoint_interval > 0) {
        fs::create_directories(out / "checkpoints");
        opt.on_checkpoint = [&](int it, const GaussianScene& s) {
            char name[48];
            std::snprintf(name, sizeof name, "iter_%06d.scene", it);
            save_scene(s, out / "checkpoints" / name);
        };
    }
    const bool needs_prior = cfg.supervision == Supervision::unified || cfg.supervision == Supervision::prior_only;
    ArmResult r = run_arm(std::string(to_string(cfg.supervision)), data, needs_prior ? &prior : nullptr, cfg, opt);
    save_training(r.training, out, "final");
    write_reports({r.report}, out);
    print_report(r.report);
    return kOk;
}

int cmd_ablate(const CommonOptions& o) {
    const ExperimentConfig cfg = resolve(o);
    prepare_out(o.out_dir, cfg);
    const fs::path out(o.out_dir);
    const Dataset data = obtain_dataset(o, cfg);
    PriorProvider prior = make_prior(cfg.prior, data);
    const auto arms = run_ablation(data, prior, cfg);
    std::vector<ExperimentReport> reports;
    for (const auto& a : arms) {
        save_training(a.training, out, a.report.arm);
        reports.push_back(a.report);
        print_report(a.report);
    }
    write_reports(reports, out);
    std::string table = "arm,mean_psnr,mean_ssim,num_gaussians\n";
    for (const auto& r : reports) {
        table += r.arm + ',' + format_number(r.mean_psnr) + ',' + format_number(r.mean_ssim) + ',' +
                 std::to_string(r.num_gaussians) + '\n';
    }
    detail::write_file_atomic(out / "ablation.csv", table);
    return kOk;
}

int cmd_sweep(const CommonOptions& o, const std::vector<double>& lambdas_flag) {
    ExperimentConfig cfg = resolve(o);
    if (!lambdas_flag.empty()) cfg.sweep_lambdas = lambdas_flag;
    cfg.validate();
    prepare_out(o.out_dir, cfg);
    const fs::path out(o.out_dir);
    const Dataset data = obtain_dataset(o, cfg);
    PriorProvider prior = make_prior(cfg.prior, data);
    const auto rows = sweep_lambda(data, prior, cfg, cfg.sweep_lambdas);
    detail::write_file_atomic(out / "sweep.csv", format_sweep_csv(rows));
    std::vector<double> xs, ys;
    for (const auto& r : rows) {
        xs.push_back(r.lambda_e);
        ys.push_back(r.mean_psnr);
        std::printf("lambda_e %.3f  psnr %.4f  ssim %.5f\n", r.lambda_e, r.mean_psnr, r.mean_ssim);
    }
    write_png(draw_line_plot(xs, ys), out / "sweep.png");
    return kOk;
}

std::vector<int> split_ids(const Dataset& d, const std::string& split) {
    if (split == "test") return d.test_ids;
    if (split == "train") return d.train_ids;
    if (split == "all") {
        std::vector<int> ids(d.views.size());
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
        return ids;
    }
    throw ArgumentError("--split must be test, train or all");
}

int cmd_eval(const CommonOptions& o, const std::string& scene_file, const std::string& split) {
    const ExperimentConfig cfg = resolve(o);
    if (o.data_dir.empty() || scene_file.empty()) throw ArgumentError("eval needs --data and --scene");
    prepare_out(o.out_dir, cfg);
    const Dataset data = load_dataset(o.data_dir);
    ExperimentReport r = evaluate(load_scene(scene_file), data, split_ids(data, split));
    r.arm = "eval_" + split;
    r.config = to_json(cfg);
    write_reports({r}, o.out_dir);
    print_report(r);
    return kOk;
}

int cmd_render(const CommonOptions& o, const std::string& scene_file, const std::string& split, double scale) {
    const ExperimentConfig cfg = resolve(o);
    if (o.data_dir.empty() || scene_file.empty()) throw ArgumentError("render needs --data and --scene");
    prepare_out(o.out_dir, cfg);
    const Dataset data = load_dataset(o.data_dir);
    const GaussianScene scene = load_scene(scene_file);
    int n = 0;
    for (int id : split_ids(data, split)) {
        write_png(render(scene, data.views[id].camera, scale), fs::path(o.out_dir) / view_file_name(id), 8);
        ++n;
    }
    std::printf("rendered %d views to %s\n", n, o.out_dir.c_str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"splatsr: Gaussian splatting with super-resolution supervision"};
    app.require_subcommand(1);

    CommonOptions o;
    std::string scene_file, split = "test", init_scene;
    double scale = 1.0;
    std::vector<double> lambdas;

    auto* gen = app.add_subcommand("generate", "Synthesize a multi-view dataset");
    add_config_options(gen, o);
    gen->add_option("-o,--out", o.out_dir, "Output dataset directory")->required();

    auto* tr = app.add_subcommand("train", "Train one configuration");
    add_config_options(tr, o);
    tr->add_option("-d,--data", o.data_dir, "Dataset directory (synthesized from the config if omitted)");
    tr->add_option("-o,--out", o.out_dir, "Output directory")->required();
    tr->add_option("--init-scene", init_scene, "Warm-start from a scene file");

    auto* ab = app.add_subcommand("ablate", "Baseline / +prior / full comparison");
    add_config_options(ab, o);
    ab->add_option("-d,--data", o.data_dir, "Dataset directory (synthesized from the config if omitted)");
    ab->add_option("-o,--out", o.out_dir, "Output directory")->required();

    auto* sw = app.add_subcommand("sweep", "Sweep lambda_e");
    add_config_options(sw, o);
    sw->add_option("-d,--data", o.data_dir, "Dataset directory (synthesized from the config if omitted)");
    sw->add_option("-o,--out", o.out_dir, "Output directory")->required();
    sw->add_option("--lambdas", lambdas, "lambda_e values (overrides sweep_lambdas)")->delimiter(',');

    auto* ev = app.add_subcommand("eval", "Evaluate a scene on a dataset split");
    add_config_options(ev, o);
    ev->add_option("-d,--data", o.data_dir, "Dataset directory")->required();
    ev->add_option("-s,--scene", scene_file, "Scene file")->required();
    ev->add_option("-o,--out", o.out_dir, "Output directory")->required();
    ev->add_option("--split", split, "test, train or all");

    auto* rd = app.add_subcommand("render", "Render dataset views of a scene to PNG");
    add_config_options(rd, o);
    rd->add_option("-d,--data", o.data_dir, "Dataset directory")->required();
    rd->add_option("-s,--scene", scene_file, "Scene file")->required();
    rd->add_option("-o,--out", o.out_dir, "Output directory")->required();
    rd->add_option("--split", split, "test, train or all");
    rd->add_option("--scale", scale, "Render scale relative to the dataset resolution");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (gen->parsed()) return cmd_generate(o);
        if (tr->parsed()) return cmd_train(o, init_scene);
        if (ab->parsed()) return cmd_ablate(o);
        if (sw->parsed()) return cmd_sweep(o, lambdas);
        if (ev->parsed()) return cmd_eval(o, scene_file, split);
        if (rd->parsed()) return cmd_render(o, scene_file, split, scale);
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kNumerical;
    } catch (const ArgumentError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kUsage;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kData;
    }
    return kUsage;
}
