// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "splatsr/objective.hpp"
#include "splatsr/prior.hpp"
#include "splatsr/trainer.hpp"

namespace splatsr {

using Json = nlohmann::ordered_json;

/// Procedural ground-truth scene description.
struct SceneSpec {
    std::string kind = "textured_sphere";  // or "random"
    int num_gaussians = 2000;
    double radius = 1.0;
    double texture_frequency = 30.0;  // colour oscillations per radian
};

struct DatasetConfig {
    SceneSpec scene;
    int num_views = 16;
    int hr_resolution = 128;
    int factor = 4;
    bool antialias = true;
    int test_stride = 8;
    double camera_distance = 4.0;
    double focal_ratio = 1.375;  // focal length in units of the HR width
    std::array<double, 3> background{0.0, 0.0, 0.0};
    std::uint64_t seed = 0;
};

struct PriorConfig {
    PriorKind kind = PriorKind::oracle;
    std::string directory;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    PriorConfig prior;
    ObjectiveConfig objective;
    TrainConfig train;
    Supervision supervision = Supervision::unified;
    std::vector<double> sweep_lambdas{0.2, 0.35, 0.5, 0.65, 0.8};
    int sweep_iterations = 0;  // 0 = use train.iterations
    bool warm_start_arm = false;

    void validate() const {
        if (dataset.num_views < 4) throw ArgumentError("dataset.num_views must be >= 4");
        if (dataset.factor < 1) throw ArgumentError("dataset.factor must be >= 1");
        if (dataset.test_stride < 2) throw ArgumentError("dataset.test_stride must be >= 2");
        if (dataset.scene.num_gaussians < 1) throw ArgumentError("dataset.scene.num_gaussians must be >= 1");
        if (!(dataset.camera_distance > dataset.scene.radius)) {
            throw ArgumentError("dataset.camera_distance must exceed the scene radius");
        }
        if (!(dataset.focal_ratio > 0.0)) throw ArgumentError("dataset.focal_ratio must be > 0");
        for (double b : dataset.background) {
            if (!(b >= 0.0 && b <= 1.0)) throw ArgumentError("dataset.background must lie in [0,1]");
        }
        for (double l : sweep_lambdas) {
            if (!(l >= 0.0 && l <= 1.0)) throw ArgumentError("sweep_lambdas must lie in [0,1]");
        }
        if (sweep_iterations < 0) throw ArgumentError("sweep_iterations must be >= 0");
        objective.validate();
        train.validate();
    }
};

// ---------------------------------------------------------------------------
// JSON mapping. Unknown keys are rejected so typos in config files surface.
// ---------------------------------------------------------------------------

namespace detail {

class JsonReader {
public:
    JsonReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ArgumentError("config: '" + display() + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.emplace_back(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ArgumentError("config: bad value for '" + child(key) + "': " + it->dump());
        }
    }

    template <typename F>
    void object(const char* key, F&& f) {
        seen_.emplace_back(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        JsonReader sub(*it, child(key));
        f(sub);
        sub.finish();
    }

    template <typename E, typename Parse>
    void enumeration(const char* key, E& out, Parse&& parse) {
        std::string s;
        const bool present = j_.contains(key);
        get(key, s);
        if (present) out = parse(s);
    }

    void schedule(const char* key, Schedule& out) {
        seen_.emplace_back(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        out.steps.clear();
        if (!it->is_array()) throw ArgumentError("config: '" + child(key) + "' must be a list of [iteration, multiplier]");
        for (const auto& e : *it) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number()) {
                throw ArgumentError("config: '" + child(key) + "' entries must be [iteration, multiplier]");
            }
            out.steps.emplace_back(e[0].get<int>(), e[1].get<double>());
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            bool known = false;
            for (const auto& k : seen_) known = known || k == it.key();
            if (!known) throw ArgumentError("config: unknown key '" + child(it.key()) + "'");
        }
    }

private:
    [[nodiscard]] std::string display() const { return path_.empty() ? "<root>" : path_; }
    [[nodiscard]] std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const Json& j_;
    std::string path_;
    std::vector<std::string> seen_;
};

inline Json schedule_to_json(const Schedule& s) {
    Json a = Json::array();
    for (const auto& [it, m] : s.steps) a.push_back(Json::array({it, m}));
    return a;
}

}  // namespace detail

inline Json to_json(const ExperimentConfig& c) {
    Json j;
    const auto& d = c.dataset;
    j["dataset"] = {
        {"scene",
         {{"kind", d.scene.kind},
          {"num_gaussians", d.scene.num_gaussians},
          {"radius", d.scene.radius},
          {"texture_frequency", d.scene.texture_frequency}}},
        {"num_views", d.num_views},
        {"hr_resolution", d.hr_resolution},
        {"factor", d.factor},
        {"antialias", d.antialias},
        {"test_stride", d.test_stride},
        {"camera_distance", d.camera_distance},
        {"focal_ratio", d.focal_ratio},
        {"background", d.background},
        {"seed", d.seed},
    };
    j["prior"] = {{"kind", std::string(to_string(c.prior.kind))}, {"directory", c.prior.directory}};
    const auto& o = c.objective;
    j["objective"] = {
        {"lambda_e", o.lambda_e},
        {"lambda_tex", o.lambda_tex},
        {"lambda_cvc", o.lambda_cvc},
        {"prior_penalty", std::string(to_string(o.prior.penalty))},
        {"prior_tv_weight", o.prior.tv_weight},
        {"reg_penalty", std::string(to_string(o.reg.penalty))},
        {"reg_tv_weight", o.reg.tv_weight},
        {"modulation",
         {{"prior_weight_schedule", detail::schedule_to_json(o.modulation.prior_weight_schedule)},
          {"reg_weight_schedule", detail::schedule_to_json(o.modulation.reg_weight_schedule)},
          {"prior_mask_mode", std::string(to_string(o.modulation.prior_mask_mode))},
          {"prior_mask_percentile", o.modulation.prior_mask_percentile},
          {"reg_mask_mode", std::string(to_string(o.modulation.reg_mask_mode))},
          {"reg_mask_percentile", o.modulation.reg_mask_percentile}}},
    };
    const auto& t = c.train;
    j["train"] = {
        {"iterations", t.iterations},
        {"lr_position_init", t.lr_position_init},
        {"lr_position_final", t.lr_position_final},
        {"position_lr_scaled_by_extent", t.position_lr_scaled_by_extent},
        {"lr_log_scale", t.lr_log_scale},
        {"lr_rotation", t.lr_rotation},
        {"lr_opacity", t.lr_opacity},
        {"lr_color", t.lr_color},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"epsilon", t.epsilon},
        {"densify", t.densify},
        {"densify_interval", t.densify_interval},
        {"densify_from", t.densify_from},
        {"densify_until_fraction", t.densify_until_fraction},
        {"grad_threshold", t.grad_threshold},
        {"percent_dense", t.percent_dense},
        {"prune_opacity", t.prune_opacity},
        {"opacity_reset_interval", t.opacity_reset_interval},
        {"max_gaussians", t.max_gaussians},
        {"init_count", t.init_count},
        {"seed", t.seed},
        {"checkpoint_interval", t.checkpoint_interval},
    };
    j["supervision"] = std::string(to_string(c.supervision));
    j["sweep_lambdas"] = c.sweep_lambdas;
    j["sweep_iterations"] = c.sweep_iterations;
    j["warm_start_arm"] = c.warm_start_arm;
    return j;
}

/// Missing keys keep their defaults; unknown keys and ill-typed values raise ArgumentError.
inline ExperimentConfig config_from_json(const Json& j) {
    ExperimentConfig c;
    detail::JsonReader root(j, "");
    root.object("dataset", [&](detail::JsonReader& r) {
        auto& d = c.dataset;
        r.object("scene", [&](detail::JsonReader& s) {
            s.get("kind", d.scene.kind);
            s.get("num_gaussians", d.scene.num_gaussians);
            s.get("radius", d.scene.radius);
            s.get("texture_frequency", d.scene.texture_frequency);
        });
        r.get("num_views", d.num_views);
        r.get("hr_resolution", d.hr_resolution);
        r.get("factor", d.factor);
        r.get("antialias", d.antialias);
        r.get("test_stride", d.test_stride);
        r.get("camera_distance", d.camera_distance);
        r.get("focal_ratio", d.focal_ratio);
        r.get("background", d.background);
        r.get("seed", d.seed);
    });
    root.object("prior", [&](detail::JsonReader& r) {
        r.enumeration("kind", c.prior.kind, parse_prior_kind);
        r.get("directory", c.prior.directory);
    });
    root.object("objective", [&](detail::JsonReader& r) {
        auto& o = c.objective;
        r.get("lambda_e", o.lambda_e);
        r.get("lambda_tex", o.lambda_tex);
        r.get("lambda_cvc", o.lambda_cvc);
        r.enumeration("prior_penalty", o.prior.penalty, parse_penalty);
        r.get("prior_tv_weight", o.prior.tv_weight);
        r.enumeration("reg_penalty", o.reg.penalty, parse_penalty);
        r.get("reg_tv_weight", o.reg.tv_weight);
        r.object("modulation", [&](detail::JsonReader& m) {
            auto& mod = o.modulation;
            m.schedule("prior_weight_schedule", mod.prior_weight_schedule);
            m.schedule("reg_weight_schedule", mod.reg_weight_schedule);
            m.enumeration("prior_mask_mode", mod.prior_mask_mode, parse_mask_mode);
            m.get("prior_mask_percentile", mod.prior_mask_percentile);
            m.enumeration("reg_mask_mode", mod.reg_mask_mode, parse_mask_mode);
            m.get("reg_mask_percentile", mod.reg_mask_percentile);
        });
    });
    root.object("train", [&](detail::JsonReader& r) {
        auto& t = c.train;
        r.get("iterations", t.iterations);
        r.get("lr_position_init", t.lr_position_init);
        r.get("lr_position_final", t.lr_position_final);
        r.get("position_lr_scaled_by_extent", t.position_lr_scaled_by_extent);
        r.get("lr_log_scale", t.lr_log_scale);
        r.get("lr_rotation", t.lr_rotation);
        r.get("lr_opacity", t.lr_opacity);
        r.get("lr_color", t.lr_color);
        r.get("beta1", t.beta1);
        r.get("beta2", t.beta2);
        r.get("epsilon", t.epsilon);
        r.get("densify", t.densify);
        r.get("densify_interval", t.densify_interval);
        r.get("densify_from", t.densify_from);
        r.get("densify_until_fraction", t.densify_until_fraction);
        r.get("grad_threshold", t.grad_threshold);
        r.get("percent_dense", t.percent_dense);
        r.get("prune_opacity", t.prune_opacity);
        r.get("opacity_reset_interval", t.opacity_reset_interval);
        r.get("max_gaussians", t.max_gaussians);
        r.get("init_count", t.init_count);
        r.get("seed", t.seed);
        r.get("checkpoint_interval", t.checkpoint_interval);
    });
    root.enumeration("supervision", c.supervision, parse_supervision);
    root.get("sweep_lambdas", c.sweep_lambdas);
    root.get("sweep_iterations", c.sweep_iterations);
    root.get("warm_start_arm", c.warm_start_arm);
    root.finish();
    c.validate();
    return c;
}

/// Applies `a.b.c=value` to a JSON tree. The value is parsed as JSON when possible and kept
/// as a string otherwise (so `prior.kind=file` works unquoted).
inline void apply_override(Json& j, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ArgumentError("override '" + std::string(assignment) + "' is not of the form key=value");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string raw(assignment.substr(eq + 1));
    Json value = Json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    Json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ArgumentError("override key '" + key + "' has an empty component");
        if (!node->is_object()) {
            if (!node->is_null()) throw ArgumentError("override key '" + key + "' descends into a non-object");
            *node = Json::object();
        }
        if (dot == std::string::npos) {
            (*node)[part] = std::move(value);
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

inline Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    Json j = Json::parse(ss.str(), nullptr, false, true);
    if (j.is_discarded()) throw ArgumentError("config file is not valid JSON: " + path.string());
    return j;
}

/// File (optional) plus overrides, resolved into a validated config.
inline ExperimentConfig resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
    Json j = file.empty() ? Json::object() : read_json_file(file);
    for (const auto& o : overrides) apply_override(j, o);
    return config_from_json(j);
}

}  // namespace splatsr
