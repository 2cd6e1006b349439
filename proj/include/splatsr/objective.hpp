// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "splatsr/image_ops.hpp"

namespace splatsr {

enum class Penalty { l1, mse };
enum class MaskMode { none, error_percentile };

inline std::string_view to_string(Penalty p) { return p == Penalty::l1 ? "l1" : "mse"; }
inline std::string_view to_string(MaskMode m) { return m == MaskMode::none ? "none" : "error_percentile"; }

inline Penalty parse_penalty(std::string_view s) {
    if (s == "l1") return Penalty::l1;
    if (s == "mse" || s == "l2") return Penalty::mse;
    throw ArgumentError("unknown penalty '" + std::string(s) + "' (expected l1 or mse)");
}

inline MaskMode parse_mask_mode(std::string_view s) {
    if (s == "none") return MaskMode::none;
    if (s == "error_percentile" || s == "error-percentile") return MaskMode::error_percentile;
    throw ArgumentError("unknown mask mode '" + std::string(s) + "' (expected none or error_percentile)");
}

/// Piecewise-constant multiplier over iterations: the value of the last step whose start
/// iteration is <= the query, 1 before the first step.
struct Schedule {
    std::vector<std::pair<int, double>> steps;  // (start iteration, multiplier), sorted

    [[nodiscard]] double at(int iteration) const noexcept {
        double v = 1.0;
        for (const auto& [start, mult] : steps) {
            if (start > iteration) break;
            v = mult;
        }
        return v;
    }

    void validate(const char* what) const {
        for (std::size_t i = 0; i < steps.size(); ++i) {
            if (!(steps[i].second >= 0.0) || !std::isfinite(steps[i].second)) {
                throw ArgumentError(std::string(what) + ": multipliers must be finite and >= 0");
            }
            if (i > 0 && steps[i].first <= steps[i - 1].first) {
                throw ArgumentError(std::string(what) + ": step iterations must be strictly increasing");
            }
        }
    }

    friend bool operator==(const Schedule&, const Schedule&) = default;
};

struct ModulationConfig {
    Schedule prior_weight_schedule;
    Schedule reg_weight_schedule;
    MaskMode prior_mask_mode = MaskMode::none;
    double prior_mask_percentile = 100.0;
    MaskMode reg_mask_mode = MaskMode::none;
    double reg_mask_percentile = 100.0;
};

/// Per-term penalty choice: pixel penalty plus an optional total-variation term on the
/// image the term compares.
struct TermConfig {
    Penalty penalty = Penalty::l1;
    double tv_weight = 0.0;
};

struct ObjectiveConfig {
    double lambda_e = 0.5;
    double lambda_tex = 0.2;
    double lambda_cvc = 0.2;
    TermConfig prior;
    TermConfig reg;
    ModulationConfig modulation;

    void validate() const {
        auto unit = [](double v, const char* name) {
            if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError(std::string(name) + " must lie in [0,1]");
        };
        unit(lambda_e, "lambda_e");
        unit(lambda_tex, "lambda_tex");
        unit(lambda_cvc, "lambda_cvc");
        if (!(prior.tv_weight >= 0.0) || !(reg.tv_weight >= 0.0)) throw ArgumentError("tv_weight must be >= 0");
        modulation.prior_weight_schedule.validate("prior_weight_schedule");
        modulation.reg_weight_schedule.validate("reg_weight_schedule");
        for (double p : {modulation.prior_mask_percentile, modulation.reg_mask_percentile}) {
            if (!(p > 0.0 && p <= 100.0)) throw ArgumentError("mask percentile must lie in (0,100]");
        }
    }
};

/// Pixel weights for a term. `error_percentile` keeps the ceil(p/100 * n) pixels with the
/// smallest error (ties broken by pixel index) and zeroes the rest.
inline PixelMap build_mask(const PixelMap& error_map, MaskMode mode, double percentile) {
    if (!(percentile > 0.0 && percentile <= 100.0)) {
        throw ArgumentError("build_mask: percentile must lie in (0,100]");
    }
    PixelMap mask(error_map.width, error_map.height, 1.0);
    if (mode == MaskMode::none) return mask;
    if (mode != MaskMode::error_percentile) throw ArgumentError("build_mask: invalid mode");

    const std::size_t n = error_map.size();
    const auto keep = static_cast<std::size_t>(std::ceil(percentile / 100.0 * static_cast<double>(n)));
    if (keep >= n) return mask;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return error_map.values[a] < error_map.values[b]; });
    for (std::size_t k = keep; k < n; ++k) mask.values[idx[k]] = 0.0;
    return mask;
}

/// One evaluated loss term: its components, value and gradient w.r.t. the HR render.
struct TermResult {
    double pixel = 0.0;  // L1 (or MSE) component
    double dssim = 0.0;
    double tv = 0.0;
    double value = 0.0;
    double masked_fraction = 0.0;  // fraction of pixels with zero weight
    ImageBuffer grad;
};

namespace detail {

inline double masked_fraction(const PixelMap* mask) {
    if (mask == nullptr || mask->size() == 0) return 0.0;
    std::size_t zeros = 0;
    for (double v : mask->values) zeros += v == 0.0 ? 1 : 0;
    return static_cast<double>(zeros) / static_cast<double>(mask->size());
}

/// (1 - lambda) * penalty(a, b) + lambda * dssim(a, b) [+ tv_weight * TV(a)], gradient w.r.t. a.
inline TermResult photometric(const ImageBuffer& a, const ImageBuffer& b, double lambda, const TermConfig& cfg,
                              const PixelMap* mask) {
    require_same_shape(a, b, "photometric loss");
    TermResult r;
    LossWithGrad pix = cfg.penalty == Penalty::l1 ? l1_with_grad(a, b, mask) : mse_with_grad(a, b, mask);
    r.pixel = pix.value;
    r.grad = std::move(pix.grad);
    const double wpix = 1.0 - lambda;
    for (auto& v : r.grad.data()) v *= wpix;
    r.value = wpix * r.pixel;
    if (lambda > 0.0) {
        LossWithGrad d = dssim_with_grad(a, b, mask);
        r.dssim = d.value;
        r.value += lambda * r.dssim;
        auto g = r.grad.data();
        auto dg = d.grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += lambda * dg[i];
    }
    if (cfg.tv_weight > 0.0) {
        LossWithGrad tv = total_variation_with_grad(a);
        r.tv = tv.value;
        r.value += cfg.tv_weight * r.tv;
        auto g = r.grad.data();
        auto tg = tv.grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += cfg.tv_weight * tg[i];
    }
    r.masked_fraction = masked_fraction(mask);
    return r;
}

}  // namespace detail

/// Prior term: (1 - lambda_tex) L1 + lambda_tex D-SSIM between the HR render and the
/// pseudo-HR target, gradient w.r.t. the render.
inline TermResult loss_prior(const ImageBuffer& rendered_hr, const ImageBuffer& pseudo_hr, const ObjectiveConfig& cfg,
                             const PixelMap* mask = nullptr) {
    return detail::photometric(rendered_hr, pseudo_hr, cfg.lambda_tex, cfg.prior, mask);
}

/// Consistency term: (1 - lambda_cvc) L1 + lambda_cvc D-SSIM between the LR observation and
/// F(render); the gradient is pulled back through F^T. `mask` lives at LR resolution.
inline TermResult loss_reg(const ImageBuffer& rendered_hr, const ImageBuffer& lr_observation, const Downsampler& down,
                           const ObjectiveConfig& cfg, const PixelMap* mask = nullptr) {
    const ImageBuffer low = down.apply(rendered_hr);
    if (!low.same_shape(lr_observation)) {
        throw ArgumentError("loss_reg: downsampled render is " + std::to_string(low.width()) + "x" +
                            std::to_string(low.height()) + " but the LR observation is " +
                            std::to_string(lr_observation.width()) + "x" + std::to_string(lr_observation.height()));
    }
    TermResult r = detail::photometric(low, lr_observation, cfg.lambda_cvc, cfg.reg, mask);
    r.grad = down.adjoint(r.grad);
    return r;
}

inline TermResult loss_reg(const ImageBuffer& rendered_hr, const ImageBuffer& lr_observation, const ResampleSpec& spec,
                           const ObjectiveConfig& cfg, const PixelMap* mask = nullptr) {
    return loss_reg(rendered_hr, lr_observation, Downsampler(rendered_hr.width(), rendered_hr.height(), spec), cfg, mask);
}

struct TermWeights {
    double prior = 1.0;
    double reg = 0.0;
};

/// lambda_e * sched_p(it) and (1 - lambda_e) * sched_r(it).
inline TermWeights term_weights(const ObjectiveConfig& cfg, int iteration) {
    return {cfg.lambda_e * cfg.modulation.prior_weight_schedule.at(iteration),
            (1.0 - cfg.lambda_e) * cfg.modulation.reg_weight_schedule.at(iteration)};
}

inline double total_loss(double prior_loss, double reg_loss, const ObjectiveConfig& cfg, int iteration) {
    const TermWeights w = term_weights(cfg, iteration);
    return w.prior * prior_loss + w.reg * reg_loss;
}

/// Image-space gradient of total_loss: w_p * grad_prior + w_r * grad_reg.
inline ImageBuffer combine_gradients(const ImageBuffer& prior_grad, const ImageBuffer& reg_grad, const ObjectiveConfig& cfg,
                                     int iteration) {
    require_same_shape(prior_grad, reg_grad, "combine_gradients");
    const TermWeights w = term_weights(cfg, iteration);
    ImageBuffer out(prior_grad.width(), prior_grad.height());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = w.prior * prior_grad[i] + w.reg * reg_grad[i];
    return out;
}

/// Per-iteration loss breakdown as logged by the trainer.
struct LossReport {
    double total = 0.0;
    double prior_l1 = 0.0;
    double prior_dssim = 0.0;
    double prior_tv = 0.0;
    double reg_l1 = 0.0;
    double reg_dssim = 0.0;
    double reg_tv = 0.0;
    double masked_fraction_prior = 0.0;
    double masked_fraction_reg = 0.0;
};

}  // namespace splatsr
