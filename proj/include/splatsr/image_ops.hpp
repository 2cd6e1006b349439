// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "splatsr/image.hpp"

namespace splatsr {

// ---------------------------------------------------------------------------
// Bicubic resampling
// ---------------------------------------------------------------------------

inline constexpr double kBicubicA = -0.5;

/// Keys cubic convolution kernel with a = -0.5 (Catmull-Rom).
inline double bicubic_kernel(double t) noexcept {
    const double x = std::abs(t);
    if (x <= 1.0) {
        return ((kBicubicA + 2.0) * x - (kBicubicA + 3.0)) * x * x + 1.0;
    }
    if (x < 2.0) {
        return ((kBicubicA * x - 5.0 * kBicubicA) * x + 8.0 * kBicubicA) * x - 4.0 * kBicubicA;
    }
    return 0.0;
}

/// Downsampling operator F: separable bicubic, source coordinate (x + 0.5) * factor - 0.5,
/// clamp-to-edge borders, weights renormalized to sum to one. With `antialias` the kernel
/// support is stretched by the factor.
struct ResampleSpec {
    int factor = 4;
    bool antialias = true;
};

/// Sparse 1D resampling matrix: output i reads inputs index[offset[i] .. offset[i+1]).
struct AxisWeights {
    int in_size = 0;
    int out_size = 0;
    std::vector<int> offset;
    std::vector<int> index;
    std::vector<double> weight;
};

/// `ratio` = input pixels per output pixel; `kernel_scale` stretches the kernel (>= 1).
inline AxisWeights make_axis_weights(int in_size, int out_size, double ratio, double kernel_scale) {
    AxisWeights w;
    w.in_size = in_size;
    w.out_size = out_size;
    w.offset.reserve(static_cast<std::size_t>(out_size) + 1);
    w.offset.push_back(0);
    const double support = 2.0 * kernel_scale;
    for (int o = 0; o < out_size; ++o) {
        const double center = (o + 0.5) * ratio - 0.5;
        const int lo = static_cast<int>(std::floor(center - support));
        const int hi = static_cast<int>(std::ceil(center + support));
        const std::size_t first = w.weight.size();
        double sum = 0.0;
        for (int i = lo; i <= hi; ++i) {
            const double k = bicubic_kernel((i - center) / kernel_scale);
            if (k == 0.0) continue;
            w.index.push_back(std::clamp(i, 0, in_size - 1));
            w.weight.push_back(k);
            sum += k;
        }
        for (std::size_t j = first; j < w.weight.size(); ++j) w.weight[j] /= sum;
        w.offset.push_back(static_cast<int>(w.weight.size()));
    }
    return w;
}

inline int downsampled_size(int n, int factor) {
    return static_cast<int>(std::lround(static_cast<double>(n) / factor));
}

namespace detail {

inline void check_factor(int factor, const char* what) {
    if (factor < 1) {
        throw ArgumentError(std::string(what) + ": factor must be >= 1");
    }
}

inline ImageBuffer apply_separable(const ImageBuffer& in, const AxisWeights& wx, const AxisWeights& wy) {
    ImageBuffer tmp(wx.out_size, in.height());
    for (int y = 0; y < in.height(); ++y) {
        for (int o = 0; o < wx.out_size; ++o) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (int j = wx.offset[o]; j < wx.offset[o + 1]; ++j) {
                for (int c = 0; c < 3; ++c) acc[c] += wx.weight[j] * in.at(wx.index[j], y, c);
            }
            for (int c = 0; c < 3; ++c) tmp.at(o, y, c) = acc[c];
        }
    }
    ImageBuffer out(wx.out_size, wy.out_size);
    for (int o = 0; o < wy.out_size; ++o) {
        for (int x = 0; x < wx.out_size; ++x) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (int j = wy.offset[o]; j < wy.offset[o + 1]; ++j) {
                for (int c = 0; c < 3; ++c) acc[c] += wy.weight[j] * tmp.at(x, wy.index[j], c);
            }
            for (int c = 0; c < 3; ++c) out.at(x, o, c) = acc[c];
        }
    }
    return out;
}

/// Transpose of apply_separable.
inline ImageBuffer apply_separable_adjoint(const ImageBuffer& grad_out, const AxisWeights& wx, const AxisWeights& wy) {
    ImageBuffer tmp(wx.out_size, wy.in_size);
    for (int o = 0; o < wy.out_size; ++o) {
        for (int x = 0; x < wx.out_size; ++x) {
            for (int j = wy.offset[o]; j < wy.offset[o + 1]; ++j) {
                for (int c = 0; c < 3; ++c) tmp.at(x, wy.index[j], c) += wy.weight[j] * grad_out.at(x, o, c);
            }
        }
    }
    ImageBuffer out(wx.in_size, wy.in_size);
    for (int y = 0; y < wy.in_size; ++y) {
        for (int o = 0; o < wx.out_size; ++o) {
            for (int j = wx.offset[o]; j < wx.offset[o + 1]; ++j) {
                for (int c = 0; c < 3; ++c) out.at(wx.index[j], y, c) += wx.weight[j] * tmp.at(o, y, c);
            }
        }
    }
    return out;
}

}  // namespace detail

/// Precomputed downsampling operator for a fixed input size; cheap to apply repeatedly.
class Downsampler {
public:
    Downsampler(int in_width, int in_height, const ResampleSpec& spec) {
        detail::check_factor(spec.factor, "downsample");
        const double f = spec.factor;
        const double kscale = spec.antialias ? f : 1.0;
        wx_ = make_axis_weights(in_width, downsampled_size(in_width, spec.factor), f, kscale);
        wy_ = make_axis_weights(in_height, downsampled_size(in_height, spec.factor), f, kscale);
    }

    [[nodiscard]] int out_width() const noexcept { return wx_.out_size; }
    [[nodiscard]] int out_height() const noexcept { return wy_.out_size; }
    [[nodiscard]] const AxisWeights& x_weights() const noexcept { return wx_; }
    [[nodiscard]] const AxisWeights& y_weights() const noexcept { return wy_; }

    [[nodiscard]] ImageBuffer apply(const ImageBuffer& in) const {
        if (in.width() != wx_.in_size || in.height() != wy_.in_size) {
            throw ArgumentError("downsample: input size does not match the operator");
        }
        return detail::apply_separable(in, wx_, wy_);
    }

    /// F^T applied to an output-shaped gradient.
    [[nodiscard]] ImageBuffer adjoint(const ImageBuffer& grad_out) const {
        if (grad_out.width() != wx_.out_size || grad_out.height() != wy_.out_size) {
            throw ArgumentError("downsample adjoint: gradient size does not match the operator");
        }
        return detail::apply_separable_adjoint(grad_out, wx_, wy_);
    }

private:
    AxisWeights wx_;
    AxisWeights wy_;
};

inline ImageBuffer downsample(const ImageBuffer& image, const ResampleSpec& spec) {
    return Downsampler(image.width(), image.height(), spec).apply(image);
}

/// Plain (non-antialiased) bicubic interpolation to factor x the input size.
inline ImageBuffer upsample_bicubic(const ImageBuffer& image, int factor) {
    detail::check_factor(factor, "upsample_bicubic");
    const double ratio = 1.0 / factor;
    const auto wx = make_axis_weights(image.width(), image.width() * factor, ratio, 1.0);
    const auto wy = make_axis_weights(image.height(), image.height() * factor, ratio, 1.0);
    return detail::apply_separable(image, wx, wy);
}

// ---------------------------------------------------------------------------
// Pixel losses
// ---------------------------------------------------------------------------

/// A scalar loss and its gradient with respect to the first image argument.
struct LossWithGrad {
    double value = 0.0;
    ImageBuffer grad;
};

namespace detail {

inline void check_weights(const ImageBuffer& a, const PixelMap* weights, const char* what) {
    if (weights != nullptr && (weights->width != a.width() || weights->height != a.height())) {
        throw ArgumentError(std::string(what) + ": weight map size mismatch");
    }
}

/// 1 / (3 * sum of pixel weights), the normalizer of a weighted per-element mean.
inline double weighted_norm(const ImageBuffer& a, const PixelMap* weights) {
    double wsum = static_cast<double>(a.pixel_count());
    if (weights != nullptr) {
        wsum = 0.0;
        for (double w : weights->values) wsum += w;
    }
    return wsum > 0.0 ? 1.0 / (ImageBuffer::kChannels * wsum) : 0.0;
}

}  // namespace detail

/// Mean absolute difference over pixels and channels. With `weights` each pixel's terms are
/// weighted and the result renormalized by the total weight. d|x|/dx uses sign(0) = 0.
inline LossWithGrad l1_with_grad(const ImageBuffer& a, const ImageBuffer& b, const PixelMap* weights = nullptr) {
    require_same_shape(a, b, "l1");
    detail::check_weights(a, weights, "l1");
    const double norm = detail::weighted_norm(a, weights);
    LossWithGrad out{0.0, ImageBuffer(a.width(), a.height())};
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        const double w = weights ? weights->values[p] : 1.0;
        for (int c = 0; c < 3; ++c) {
            const std::size_t i = p * 3 + static_cast<std::size_t>(c);
            const double d = a[i] - b[i];
            out.value += w * std::abs(d);
            out.grad[i] = d > 0.0 ? w * norm : (d < 0.0 ? -w * norm : 0.0);
        }
    }
    out.value *= norm;
    return out;
}

inline double l1(const ImageBuffer& a, const ImageBuffer& b) { return l1_with_grad(a, b).value; }

inline LossWithGrad mse_with_grad(const ImageBuffer& a, const ImageBuffer& b, const PixelMap* weights = nullptr) {
    require_same_shape(a, b, "mse");
    detail::check_weights(a, weights, "mse");
    const double norm = detail::weighted_norm(a, weights);
    LossWithGrad out{0.0, ImageBuffer(a.width(), a.height())};
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        const double w = weights ? weights->values[p] : 1.0;
        for (int c = 0; c < 3; ++c) {
            const std::size_t i = p * 3 + static_cast<std::size_t>(c);
            const double d = a[i] - b[i];
            out.value += w * d * d;
            out.grad[i] = 2.0 * w * norm * d;
        }
    }
    out.value *= norm;
    return out;
}

inline double mse(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_shape(a, b, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}

/// Anisotropic total variation: sum of |horizontal| + |vertical| neighbour differences
/// divided by the element count.
inline LossWithGrad total_variation_with_grad(const ImageBuffer& a) {
    LossWithGrad out{0.0, ImageBuffer(a.width(), a.height())};
    if (a.empty()) return out;
    const double norm = 1.0 / static_cast<double>(a.size());
    auto term = [&](int x0, int y0, int x1, int y1) {
        for (int c = 0; c < 3; ++c) {
            const double d = a.at(x1, y1, c) - a.at(x0, y0, c);
            out.value += std::abs(d);
            const double s = d > 0.0 ? norm : (d < 0.0 ? -norm : 0.0);
            out.grad.at(x1, y1, c) += s;
            out.grad.at(x0, y0, c) -= s;
        }
    };
    for (int y = 0; y < a.height(); ++y) {
        for (int x = 0; x < a.width(); ++x) {
            if (x + 1 < a.width()) term(x, y, x + 1, y);
            if (y + 1 < a.height()) term(x, y, x, y + 1);
        }
    }
    out.value *= norm;
    return out;
}

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
inline constexpr double kSsimC2 = 0.03 * 0.03;  // (K2 * L)^2

inline std::array<double, kSsimWindow> ssim_window_1d() {
    std::array<double, kSsimWindow> g{};
    double sum = 0.0;
    for (int k = 0; k < kSsimWindow; ++k) {
        const double d = k - kSsimWindow / 2;
        g[k] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += g[k];
    }
    for (auto& v : g) v /= sum;
    return g;
}

namespace detail {

/// Single-channel plane used by the SSIM statistics.
struct Plane {
    int w = 0, h = 0;
    std::vector<double> v;
    Plane(int width, int height) : w(width), h(height), v(static_cast<std::size_t>(width) * height, 0.0) {}
    double& operator()(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
    double operator()(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

/// Same-size Gaussian blur with clamp-to-edge sampling.
inline Plane blur(const Plane& in, const std::array<double, kSsimWindow>& g) {
    constexpr int r = kSsimWindow / 2;
    Plane tmp(in.w, in.h), out(in.w, in.h);
    std::vector<double> pad(static_cast<std::size_t>(in.w) + 2 * r);
    for (int y = 0; y < in.h; ++y) {
        const double* row = &in.v[static_cast<std::size_t>(y) * in.w];
        for (int i = 0; i < in.w + 2 * r; ++i) pad[i] = row[std::clamp(i - r, 0, in.w - 1)];
        double* dst = &tmp.v[static_cast<std::size_t>(y) * in.w];
        for (int x = 0; x < in.w; ++x) {
            double s = 0.0;
            for (int k = 0; k < kSsimWindow; ++k) s += g[k] * pad[x + k];
            dst[x] = s;
        }
    }
    for (int y = 0; y < in.h; ++y) {
        double* dst = &out.v[static_cast<std::size_t>(y) * in.w];
        for (int k = 0; k < kSsimWindow; ++k) {
            const double* src = &tmp.v[static_cast<std::size_t>(std::clamp(y + k - r, 0, in.h - 1)) * in.w];
            const double gk = g[k];
            for (int x = 0; x < in.w; ++x) dst[x] += gk * src[x];
        }
    }
    return out;
}

/// Transpose of blur().
inline Plane blur_adjoint(const Plane& in, const std::array<double, kSsimWindow>& g) {
    constexpr int r = kSsimWindow / 2;
    Plane tmp(in.w, in.h), out(in.w, in.h);
    for (int y = 0; y < in.h; ++y) {
        const double* src = &in.v[static_cast<std::size_t>(y) * in.w];
        for (int k = 0; k < kSsimWindow; ++k) {
            double* dst = &tmp.v[static_cast<std::size_t>(std::clamp(y + k - r, 0, in.h - 1)) * in.w];
            const double gk = g[k];
            for (int x = 0; x < in.w; ++x) dst[x] += gk * src[x];
        }
    }
    std::vector<double> pad(static_cast<std::size_t>(in.w) + 2 * r);
    for (int y = 0; y < in.h; ++y) {
        const double* src = &tmp.v[static_cast<std::size_t>(y) * in.w];
        std::fill(pad.begin(), pad.end(), 0.0);
        for (int x = 0; x < in.w; ++x) {
            const double v = src[x];
            for (int k = 0; k < kSsimWindow; ++k) pad[x + k] += g[k] * v;
        }
        double* dst = &out.v[static_cast<std::size_t>(y) * in.w];
        for (int i = 0; i < in.w + 2 * r; ++i) dst[std::clamp(i - r, 0, in.w - 1)] += pad[i];
    }
    return out;
}

inline void check_ssim_inputs(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_shape(a, b, "ssim");
    if (a.width() < kSsimWindow || a.height() < kSsimWindow) {
        throw ArgumentError("ssim: image smaller than the " + std::to_string(kSsimWindow) + "x" +
                            std::to_string(kSsimWindow) + " window");
    }
}

inline LossWithGrad ssim_impl(const ImageBuffer& a, const ImageBuffer& b, const PixelMap* weights, bool want_grad) {
    check_ssim_inputs(a, b);
    check_weights(a, weights, "ssim");
    const auto g = ssim_window_1d();
    const int w = a.width(), h = a.height();
    const double norm = weighted_norm(a, weights);

    LossWithGrad out{0.0, want_grad ? ImageBuffer(w, h) : ImageBuffer()};
    for (int c = 0; c < 3; ++c) {
        Plane x(w, h), y(w, h), xx(w, h), yy(w, h), xy(w, h);
        for (int j = 0; j < h; ++j)
            for (int i = 0; i < w; ++i) {
                const double av = a.at(i, j, c), bv = b.at(i, j, c);
                x(i, j) = av;
                y(i, j) = bv;
                xx(i, j) = av * av;
                yy(i, j) = bv * bv;
                xy(i, j) = av * bv;
            }
        const Plane mx = blur(x, g), my = blur(y, g), exx = blur(xx, g), eyy = blur(yy, g), exy = blur(xy, g);

        Plane da(w, h), db(w, h), dc(w, h);  // coefficients of w(p,q), x(q) and y(q) in dS/dx(q)
        for (int j = 0; j < h; ++j)
            for (int i = 0; i < w; ++i) {
                const double ux = mx(i, j), uy = my(i, j);
                const double vx = exx(i, j) - ux * ux;
                const double vy = eyy(i, j) - uy * uy;
                const double cxy = exy(i, j) - ux * uy;
                const double n1 = 2.0 * ux * uy + kSsimC1, n2 = 2.0 * cxy + kSsimC2;
                const double d1 = ux * ux + uy * uy + kSsimC1, d2 = vx + vy + kSsimC2;
                const double s = (n1 * n2) / (d1 * d2);
                const double k = norm * (weights ? weights->values[static_cast<std::size_t>(j) * w + i] : 1.0);
                out.value += k * s;
                if (!want_grad) continue;
                const double ds_dux = 2.0 * uy * n2 / (d1 * d2) - s * 2.0 * ux / d1;
                const double ds_dvx = -s / d2;
                const double ds_dcxy = 2.0 * n1 / (d1 * d2);
                da(i, j) = k * (ds_dux - 2.0 * ux * ds_dvx - uy * ds_dcxy);
                db(i, j) = k * ds_dvx;
                dc(i, j) = k * ds_dcxy;
            }
        if (!want_grad) continue;
        const Plane ta = blur_adjoint(da, g), tb = blur_adjoint(db, g), tc = blur_adjoint(dc, g);
        for (int j = 0; j < h; ++j)
            for (int i = 0; i < w; ++i) {
                out.grad.at(i, j, c) = ta(i, j) + 2.0 * x(i, j) * tb(i, j) + y(i, j) * tc(i, j);
            }
    }
    return out;
}

}  // namespace detail

/// Mean SSIM (11x11 Gaussian window, sigma 1.5, K1 = 0.01, K2 = 0.03, range 1) over the
/// same-size map computed with clamp-to-edge window sampling, averaged over channels.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b) { return detail::ssim_impl(a, b, nullptr, false).value; }

/// SSIM and its gradient with respect to `a`; optional per-pixel weights on the SSIM map.
inline LossWithGrad ssim_with_grad(const ImageBuffer& a, const ImageBuffer& b, const PixelMap* weights = nullptr) {
    return detail::ssim_impl(a, b, weights, true);
}

inline double dssim(const ImageBuffer& a, const ImageBuffer& b) { return 0.5 * (1.0 - ssim(a, b)); }

/// D-SSIM = (1 - SSIM) / 2 and its gradient with respect to `a`.
inline LossWithGrad dssim_with_grad(const ImageBuffer& a, const ImageBuffer& b, const PixelMap* weights = nullptr) {
    LossWithGrad s = ssim_with_grad(a, b, weights);
    bool any_weight = true;
    if (weights) {
        any_weight = false;
        for (double v : weights->values) any_weight = any_weight || v > 0.0;
    }
    s.value = any_weight ? 0.5 * (1.0 - s.value) : 0.0;
    for (auto& v : s.grad.data()) v *= -0.5;
    return s;
}

// ---------------------------------------------------------------------------
// PSNR
// ---------------------------------------------------------------------------

/// Value reported in tables when two images are identical (PSNR is +inf).
inline constexpr double kPsnrSentinel = 99.99;

/// -10 log10(MSE) with peak 1; +inf for identical images.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b) {
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(m);
}

inline double reported_psnr(double value) noexcept { return std::isinf(value) && value > 0 ? kPsnrSentinel : value; }

/// Per-pixel absolute error averaged over channels.
inline PixelMap abs_error_map(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_shape(a, b, "abs_error_map");
    PixelMap m(a.width(), a.height());
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        double s = 0.0;
        for (int c = 0; c < 3; ++c) s += std::abs(a[p * 3 + c] - b[p * 3 + c]);
        m.values[p] = s / 3.0;
    }
    return m;
}

}  // namespace splatsr
