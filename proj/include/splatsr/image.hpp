// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "splatsr/error.hpp"

namespace splatsr {

/// H x W x 3 image of doubles, row-major with interleaved channels. Nominal range is
/// [0,1]; the same type also carries image-shaped gradients, which are unbounded.
class ImageBuffer {
public:
    static constexpr int kChannels = 3;

    ImageBuffer() = default;

    ImageBuffer(int width, int height, double fill = 0.0)
        : width_(width), height_(height) {
        if (width < 0 || height < 0) {
            throw ArgumentError("ImageBuffer: negative dimensions");
        }
        data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * kChannels, fill);
    }

    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * kChannels +
               static_cast<std::size_t>(c);
    }

    double& at(int x, int y, int c) noexcept { return data_[index(x, y, c)]; }
    [[nodiscard]] double at(int x, int y, int c) const noexcept { return data_[index(x, y, c)]; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

    [[nodiscard]] bool same_shape(const ImageBuffer& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

inline void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ArgumentError(std::string(what) + ": dimension mismatch (" + std::to_string(a.width()) + "x" +
                            std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                            std::to_string(b.height()) + ")");
    }
}

/// Per-pixel scalar map (masks, error maps), row-major.
struct PixelMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    PixelMap() = default;
    PixelMap(int w, int h, double fill = 0.0)
        : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
};

}  // namespace splatsr
