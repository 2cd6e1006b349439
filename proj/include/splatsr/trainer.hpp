// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "splatsr/dataset.hpp"
#include "splatsr/objective.hpp"
#include "splatsr/prior.hpp"
#include "splatsr/renderer.hpp"

namespace splatsr {

/// Optimizer and densification settings. Defaults follow the reference 3DGS configuration
/// except for the desk-scale iteration count.
struct TrainConfig {
    int iterations = 7000;
    double lr_position_init = 1.6e-4;
    double lr_position_final = 1.6e-6;
    bool position_lr_scaled_by_extent = true;
    double lr_log_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_opacity = 5e-2;
    double lr_color = 2.5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;

    bool densify = true;
    int densify_interval = 100;
    int densify_from = 500;
    double densify_until_fraction = 0.6;
    double grad_threshold = 2e-4;   // mean |dL/dmean2d| in NDC units
    double percent_dense = 0.01;    // clone/split boundary as a fraction of the scene extent
    double prune_opacity = 5e-3;
    int opacity_reset_interval = 3000;
    int max_gaussians = 20000;

    int init_count = 1000;
    std::uint64_t seed = 0;
    int checkpoint_interval = 0;  // 0 = no intermediate checkpoints

    [[nodiscard]] int densify_until() const {
        return static_cast<int>(std::floor(densify_until_fraction * iterations));
    }

    void validate() const {
        if (iterations < 0) throw ArgumentError("iterations must be >= 0");
        for (double lr : {lr_position_init, lr_position_final, lr_log_scale, lr_rotation, lr_opacity, lr_color}) {
            if (!(lr > 0.0)) throw ArgumentError("learning rates must be > 0");
        }
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ArgumentError("adam betas must lie in [0,1)");
        if (!(epsilon > 0.0)) throw ArgumentError("adam epsilon must be > 0");
        if (densify_interval < 1 || opacity_reset_interval < 1) throw ArgumentError("intervals must be >= 1");
        if (!(grad_threshold > 0.0) || !(percent_dense > 0.0) || !(prune_opacity > 0.0)) {
            throw ArgumentError("densification thresholds must be > 0");
        }
        if (init_count < 1) throw ArgumentError("init_count must be >= 1");
        if (max_gaussians < 1) throw ArgumentError("max_gaussians must be >= 1");
    }
};

/// Which loss terms drive the optimization.
enum class Supervision {
    unified,     // lambda_e * prior + (1 - lambda_e) * reg
    prior_only,  // prior term alone
    reg_only,    // consistency term alone
    lr_only,     // render at LR scale and fit the LR images directly (baseline)
};

inline std::string_view to_string(Supervision s) {
    switch (s) {
        case Supervision::unified: return "unified";
        case Supervision::prior_only: return "prior_only";
        case Supervision::reg_only: return "reg_only";
        case Supervision::lr_only: return "lr_only";
    }
    return "?";
}

inline Supervision parse_supervision(std::string_view s) {
    if (s == "unified") return Supervision::unified;
    if (s == "prior_only") return Supervision::prior_only;
    if (s == "reg_only") return Supervision::reg_only;
    if (s == "lr_only") return Supervision::lr_only;
    throw ArgumentError("unknown supervision '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

enum ParamGroup : int { kPosition = 0, kLogScale, kRotation, kOpacity, kColor, kNumGroups };

inline GaussianParams zero_params() {
    GaussianParams z;
    z.rotation = Vec4::Zero();
    return z;
}

/// Adam moments mirroring the scene layout, one step counter per parameter group.
struct OptimizerState {
    std::vector<GaussianParams> first_moment;
    std::vector<GaussianParams> second_moment;
    std::array<long long, kNumGroups> steps{};

    OptimizerState() = default;
    explicit OptimizerState(std::size_t n) : first_moment(n, zero_params()), second_moment(n, zero_params()) {}

    [[nodiscard]] std::size_t size() const noexcept { return first_moment.size(); }
};

/// Exponential (log-linear) decay from `init` at step 0 to `final` at `max_steps`.
inline double exponential_lr(double init, double final_lr, long long step, long long max_steps) {
    if (max_steps <= 0) return init;
    const double t = std::clamp(static_cast<double>(step) / static_cast<double>(max_steps), 0.0, 1.0);
    return std::exp(std::log(init) * (1.0 - t) + std::log(final_lr) * t);
}

struct LearningRates {
    std::array<double, kNumGroups> lr{};
};

inline LearningRates learning_rates(const TrainConfig& cfg, int iteration, double spatial_scale) {
    LearningRates r;
    const double pos_scale = cfg.position_lr_scaled_by_extent ? spatial_scale : 1.0;
    r.lr[kPosition] = pos_scale * exponential_lr(cfg.lr_position_init, cfg.lr_position_final, iteration, cfg.iterations);
    r.lr[kLogScale] = cfg.lr_log_scale;
    r.lr[kRotation] = cfg.lr_rotation;
    r.lr[kOpacity] = cfg.lr_opacity;
    r.lr[kColor] = cfg.lr_color;
    return r;
}

namespace detail {

template <typename F>
void for_each_group(GaussianParams& p, GaussianParams& g, GaussianParams& m, GaussianParams& v, F&& f) {
    f(kPosition, p.position.data(), g.position.data(), m.position.data(), v.position.data(), 3);
    f(kLogScale, p.log_scale.data(), g.log_scale.data(), m.log_scale.data(), v.log_scale.data(), 3);
    f(kRotation, p.rotation.data(), g.rotation.data(), m.rotation.data(), v.rotation.data(), 4);
    f(kOpacity, &p.opacity_logit, &g.opacity_logit, &m.opacity_logit, &v.opacity_logit, 1);
    f(kColor, p.color.data(), g.color.data(), m.color.data(), v.color.data(), 3);
}

}  // namespace detail

/// One bias-corrected Adam update of every parameter group (torch formulation:
/// p -= lr / (1 - b1^t) * m / (sqrt(v) / sqrt(1 - b2^t) + eps)).
inline void adam_step(GaussianScene& scene, std::vector<GaussianParams> gradients, OptimizerState& state,
                      const TrainConfig& cfg, const LearningRates& rates) {
    const std::size_t n = scene.size();
    if (gradients.size() != n || state.size() != n || state.second_moment.size() != n) {
        throw ArgumentError("adam_step: gradient/optimizer state size does not match the scene");
    }
    std::array<double, kNumGroups> step_size{}, bc2_sqrt{};
    for (int gi = 0; gi < kNumGroups; ++gi) {
        const auto t = static_cast<double>(++state.steps[gi]);
        step_size[gi] = rates.lr[gi] / (1.0 - std::pow(cfg.beta1, t));
        bc2_sqrt[gi] = std::sqrt(1.0 - std::pow(cfg.beta2, t));
    }
    for (std::size_t i = 0; i < n; ++i) {
        detail::for_each_group(scene.gaussians[i], gradients[i], state.first_moment[i], state.second_moment[i],
                               [&](int gi, double* p, const double* g, double* m, double* v, int len) {
                                   for (int k = 0; k < len; ++k) {
                                       m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
                                       v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
                                       p[k] -= step_size[gi] * m[k] / (std::sqrt(v[k]) / bc2_sqrt[gi] + cfg.epsilon);
                                   }
                               });
    }
}

// ---------------------------------------------------------------------------
// Densification
// ---------------------------------------------------------------------------

/// Running per-Gaussian screen-space gradient statistics between densification events.
struct DensifyStats {
    std::vector<double> grad_accum;
    std::vector<int> visible_count;

    explicit DensifyStats(std::size_t n = 0) : grad_accum(n, 0.0), visible_count(n, 0) {}

    /// Adds one view's |dL/dmean2d|, measured in NDC units (pixels * size / 2 per axis).
    void add(const RenderGradients& g, int render_width, int render_height) {
        for (std::size_t i = 0; i < g.size() && i < grad_accum.size(); ++i) {
            if (!g.visible[i]) continue;
            const double gx = g.d_mean2d[i].x() * 0.5 * render_width;
            const double gy = g.d_mean2d[i].y() * 0.5 * render_height;
            grad_accum[i] += std::sqrt(gx * gx + gy * gy);
            visible_count[i] += 1;
        }
    }

    [[nodiscard]] double mean(std::size_t i) const {
        return visible_count[i] > 0 ? grad_accum[i] / visible_count[i] : 0.0;
    }
};

struct DensifyReport {
    int clones = 0;
    int splits = 0;
    int prunes = 0;
};

inline constexpr double kSplitScaleDivisor = 1.6;

/// Clones small high-gradient Gaussians, splits large ones into two children sampled from the
/// parent distribution (scales / 1.6), then prunes low-opacity Gaussians. Survivors keep their
/// order and moments; new Gaussians are appended with zeroed moments.
inline DensifyReport densify_and_prune(GaussianScene& scene, OptimizerState& state, const DensifyStats& stats,
                                       const TrainConfig& cfg, double scene_extent, std::uint64_t seed, int iteration) {
    const std::size_t n = scene.size();
    if (state.size() != n || stats.grad_accum.size() != n) {
        throw ArgumentError("densify_and_prune: statistics/optimizer size does not match the scene");
    }
    DensifyReport report;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(iteration)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double boundary = cfg.percent_dense * scene_extent;
    std::size_t budget = cfg.max_gaussians > static_cast<int>(n) ? static_cast<std::size_t>(cfg.max_gaussians) - n : 0;

    std::vector<char> split(n, 0);
    std::vector<GaussianParams> born;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(stats.mean(i) > cfg.grad_threshold)) continue;
        const GaussianParams& g = scene.gaussians[i];
        if (g.scale().maxCoeff() <= boundary) {
            if (budget < 1) continue;
            born.push_back(g);
            ++report.clones;
            budget -= 1;
        } else {
            if (budget < 1) continue;  // a split replaces one Gaussian with two
            split[i] = 1;
            ++report.splits;
            budget -= 1;
        }
    }
    // Children are generated after all clones so that clone order does not perturb the RNG stream.
    std::vector<GaussianParams> children;
    for (std::size_t i = 0; i < n; ++i) {
        if (!split[i]) continue;
        const GaussianParams& g = scene.gaussians[i];
        const Mat3 rot = quaternion_to_rotation(g.rotation);
        const Vec3 s = g.scale();
        for (int c = 0; c < 2; ++c) {
            const Vec3 z(normal(rng), normal(rng), normal(rng));
            GaussianParams child = g;
            child.position = g.position + rot * s.cwiseProduct(z);
            child.log_scale = g.log_scale - Vec3::Constant(std::log(kSplitScaleDivisor));
            children.push_back(child);
        }
    }

    GaussianScene next;
    next.background_color = scene.background_color;
    OptimizerState next_state;
    next_state.steps = state.steps;
    auto keep = [&](const GaussianParams& g, const GaussianParams* m, const GaussianParams* v) {
        if (g.opacity() < cfg.prune_opacity) {
            ++report.prunes;
            return;
        }
        next.gaussians.push_back(g);
        next_state.first_moment.push_back(m ? *m : zero_params());
        next_state.second_moment.push_back(v ? *v : zero_params());
    };
    for (std::size_t i = 0; i < n; ++i) {
        if (!split[i]) keep(scene.gaussians[i], &state.first_moment[i], &state.second_moment[i]);
    }
    for (const auto& g : born) keep(g, nullptr, nullptr);
    for (const auto& g : children) keep(g, nullptr, nullptr);

    scene = std::move(next);
    state = std::move(next_state);
    if (state.size() != scene.size()) {
        throw std::logic_error("densify_and_prune: optimizer state out of sync with the scene");
    }
    return report;
}

/// Caps every opacity at 0.01 and clears the opacity moments.
inline void reset_opacity(GaussianScene& scene, OptimizerState& state) {
    const double cap = logit(0.01);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        scene.gaussians[i].opacity_logit = std::min(scene.gaussians[i].opacity_logit, cap);
        state.first_moment[i].opacity_logit = 0.0;
        state.second_moment[i].opacity_logit = 0.0;
    }
}

/// 1.1 x the largest distance of a training camera centre from their centroid.
inline double scene_extent(const Dataset& data) {
    if (data.train_ids.empty()) return 1.0;
    Vec3 centroid = Vec3::Zero();
    for (int id : data.train_ids) centroid += data.views[id].camera.center();
    centroid /= static_cast<double>(data.train_ids.size());
    double radius = 0.0;
    for (int id : data.train_ids) radius = std::max(radius, (data.views[id].camera.center() - centroid).norm());
    return 1.1 * std::max(radius, 1e-6);
}

/// Axis-aligned box around the training camera centres' target region, used for random init.
inline AxisAlignedBox init_bounds(const Dataset& data, double extent) {
    (void)data;
    const double half = 0.3 * extent;
    return AxisAlignedBox{Vec3::Constant(-half), Vec3::Constant(half)};
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct LogRow {
    int iteration = 0;
    int view = 0;
    LossReport loss;
    std::size_t num_gaussians = 0;
    double lr_position = 0.0;
};

struct TrainOptions {
    Supervision supervision = Supervision::unified;
    std::optional<GaussianScene> initial_scene;  // warm start; random init otherwise
    std::optional<AxisAlignedBox> init_box;
    std::function<void(int, const GaussianScene&)> on_checkpoint;
};

struct TrainResult {
    GaussianScene scene;
    std::vector<LogRow> log;
    DensifyReport densify_totals;
};

namespace detail {

inline bool all_finite(const RenderGradients& g) {
    for (const auto& p : g.d_params) {
        if (!p.position.allFinite() || !p.log_scale.allFinite() || !p.rotation.allFinite() ||
            !std::isfinite(p.opacity_logit) || !p.color.allFinite())
            return false;
    }
    return true;
}

}  // namespace detail

/// Runs the optimization. Deterministic for a fixed config and seed.
inline TrainResult train(const Dataset& data, PriorProvider* prior, const ObjectiveConfig& objective,
                         const TrainConfig& cfg, const TrainOptions& options = {}) {
    objective.validate();
    cfg.validate();
    data.validate();
    if (data.train_ids.empty()) throw DataError("dataset has no training views");

    const bool uses_prior = options.supervision == Supervision::unified || options.supervision == Supervision::prior_only;
    const bool uses_reg = options.supervision == Supervision::unified || options.supervision == Supervision::reg_only;
    if (uses_prior) {
        if (prior == nullptr) throw ArgumentError("train: this supervision mode needs a prior provider");
        if (prior->factor() != data.factor) {
            throw DataError("prior factor " + std::to_string(prior->factor()) + " does not match dataset factor " +
                            std::to_string(data.factor));
        }
        for (int id : data.train_ids) prior->generate_prior(id, data.views[id].lr);
    }

    const double extent = scene_extent(data);
    TrainResult result;
    if (options.initial_scene) {
        result.scene = *options.initial_scene;
    } else {
        result.scene = init_scene_random(cfg.init_count, options.init_box.value_or(init_bounds(data, extent)), cfg.seed);
    }
    GaussianScene& scene = result.scene;
    OptimizerState state(scene.size());
    DensifyStats stats(scene.size());
    if (cfg.iterations == 0) return result;

    const Downsampler down(data.hr_width(), data.hr_height(), data.resample);
    const double lr_scale = 1.0 / data.factor;

    std::mt19937_64 view_rng(cfg.seed ^ 0x5DEECE66DULL);
    std::vector<int> order;
    std::size_t cursor = 0;
    const int densify_until = cfg.densify_until();
    result.log.reserve(static_cast<std::size_t>(cfg.iterations));

    for (int it = 1; it <= cfg.iterations; ++it) {
        if (cursor == order.size()) {
            order = data.train_ids;
            for (std::size_t i = order.size(); i > 1; --i) {
                const auto j = static_cast<std::size_t>(view_rng() % i);
                std::swap(order[i - 1], order[j]);
            }
            cursor = 0;
        }
        const int view_id = order[cursor++];
        const View& view = data.views[view_id];

        LogRow row;
        row.iteration = it;
        row.view = view_id;
        ImageBuffer upstream;
        Rasterization raster;

        if (options.supervision == Supervision::lr_only) {
            raster = rasterize(scene, view.camera, lr_scale);
            TermResult t = detail::photometric(raster.image, view.lr, objective.lambda_tex, objective.prior, nullptr);
            row.loss.prior_l1 = t.pixel;
            row.loss.prior_dssim = t.dssim;
            row.loss.prior_tv = t.tv;
            row.loss.total = t.value;
            upstream = std::move(t.grad);
        } else {
            raster = rasterize(scene, view.camera, 1.0);
            const ImageBuffer& rendered = raster.image;
            TermResult tp, tr;
            if (uses_prior) {
                const ImageBuffer& target = prior->cached(view_id);
                std::optional<PixelMap> mask;
                if (objective.modulation.prior_mask_mode != MaskMode::none) {
                    mask = build_mask(abs_error_map(rendered, target), objective.modulation.prior_mask_mode,
                                      objective.modulation.prior_mask_percentile);
                }
                tp = loss_prior(rendered, target, objective, mask ? &*mask : nullptr);
            }
            if (uses_reg) {
                std::optional<PixelMap> mask;
                if (objective.modulation.reg_mask_mode != MaskMode::none) {
                    mask = build_mask(abs_error_map(down.apply(rendered), view.lr), objective.modulation.reg_mask_mode,
                                      objective.modulation.reg_mask_percentile);
                }
                tr = loss_reg(rendered, view.lr, down, objective, mask ? &*mask : nullptr);
            }
            row.loss.prior_l1 = tp.pixel;
            row.loss.prior_dssim = tp.dssim;
            row.loss.prior_tv = tp.tv;
            row.loss.reg_l1 = tr.pixel;
            row.loss.reg_dssim = tr.dssim;
            row.loss.reg_tv = tr.tv;
            row.loss.masked_fraction_prior = tp.masked_fraction;
            row.loss.masked_fraction_reg = tr.masked_fraction;
            switch (options.supervision) {
                case Supervision::unified:
                    row.loss.total = total_loss(tp.value, tr.value, objective, it);
                    upstream = combine_gradients(tp.grad, tr.grad, objective, it);
                    break;
                case Supervision::prior_only:
                    row.loss.total = tp.value;
                    upstream = std::move(tp.grad);
                    break;
                case Supervision::reg_only:
                    row.loss.total = tr.value;
                    upstream = std::move(tr.grad);
                    break;
                case Supervision::lr_only:
                    break;
            }
        }
        if (!std::isfinite(row.loss.total)) {
            throw NumericalError("non-finite loss at iteration " + std::to_string(it) + " (view " +
                                 std::to_string(view_id) + ")");
        }

        RenderGradients grads = render_backward(raster, scene, upstream);
        if (!detail::all_finite(grads)) {
            throw NumericalError("non-finite gradient at iteration " + std::to_string(it) + " (view " +
                                 std::to_string(view_id) + ")");
        }
        if (cfg.densify && it < densify_until) stats.add(grads, raster.width(), raster.height());

        const LearningRates rates = learning_rates(cfg, it, extent);
        adam_step(scene, std::move(grads.d_params), state, cfg, rates);

        if (cfg.densify && it < densify_until) {
            if (it > cfg.densify_from && it % cfg.densify_interval == 0) {
                const DensifyReport rep = densify_and_prune(scene, state, stats, cfg, extent, cfg.seed, it);
                result.densify_totals.clones += rep.clones;
                result.densify_totals.splits += rep.splits;
                result.densify_totals.prunes += rep.prunes;
                stats = DensifyStats(scene.size());
            }
            if (it % cfg.opacity_reset_interval == 0) reset_opacity(scene, state);
        }

        row.num_gaussians = scene.size();
        row.lr_position = rates.lr[kPosition];
        result.log.push_back(row);

        if (options.on_checkpoint && cfg.checkpoint_interval > 0 && it % cfg.checkpoint_interval == 0) {
            options.on_checkpoint(it, scene);
        }
    }
    return result;
}

/// CSV rendering of the training log (17 significant digits, stable column order).
inline std::string format_train_log(const std::vector<LogRow>& log) {
    std::string out =
        "iteration,view,total,prior_l1,prior_dssim,reg_l1,reg_dssim,prior_tv,reg_tv,num_gaussians,lr_position,"
        "masked_fraction_prior,masked_fraction_reg\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out += buf;
    };
    for (const auto& r : log) {
        out += std::to_string(r.iteration) + ',' + std::to_string(r.view) + ',';
        for (double v : {r.loss.total, r.loss.prior_l1, r.loss.prior_dssim, r.loss.reg_l1, r.loss.reg_dssim,
                         r.loss.prior_tv, r.loss.reg_tv}) {
            num(v);
            out += ',';
        }
        out += std::to_string(r.num_gaussians) + ',';
        num(r.lr_position);
        out += ',';
        num(r.loss.masked_fraction_prior);
        out += ',';
        num(r.loss.masked_fraction_reg);
        out += '\n';
    }
    return out;
}

}  // namespace splatsr
