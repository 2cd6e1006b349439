// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "splatsr/image_ops.hpp"
#include "splatsr/scene.hpp"

namespace splatsr {

/// One captured view. Cameras are declared at HR resolution; `lr` is the training observation.
struct View {
    Camera camera;
    std::optional<ImageBuffer> hr;
    ImageBuffer lr;
};

struct Dataset {
    std::vector<View> views;
    std::vector<int> train_ids;
    std::vector<int> test_ids;
    int factor = 4;
    ResampleSpec resample{4, true};
    std::uint64_t seed = 0;
    std::string descriptor;

    [[nodiscard]] int hr_width() const { return views.empty() ? 0 : views.front().camera.width; }
    [[nodiscard]] int hr_height() const { return views.empty() ? 0 : views.front().camera.height; }

    /// Every `stride`-th view (starting at 0) is held out for testing.
    static void split_every(int num_views, int stride, std::vector<int>& train, std::vector<int>& test) {
        train.clear();
        test.clear();
        for (int i = 0; i < num_views; ++i) (i % stride == 0 ? test : train).push_back(i);
    }

    /// Checks dimension consistency across views; errors name the offending view.
    void validate() const {
        if (views.empty()) throw DataError("dataset has no views");
        if (factor < 1 || resample.factor != factor) throw DataError("dataset factor and resample factor disagree");
        const int w = hr_width(), h = hr_height();
        const int lw = downsampled_size(w, factor), lh = downsampled_size(h, factor);
        for (std::size_t i = 0; i < views.size(); ++i) {
            const View& v = views[i];
            const std::string id = "view " + std::to_string(i);
            if (v.camera.width != w || v.camera.height != h) throw DataError(id + ": camera size differs from view 0");
            if (v.lr.width() != lw || v.lr.height() != lh) {
                throw DataError(id + ": LR image is " + std::to_string(v.lr.width()) + "x" + std::to_string(v.lr.height()) +
                                ", expected " + std::to_string(lw) + "x" + std::to_string(lh));
            }
            if (v.hr && (v.hr->width() != w || v.hr->height() != h)) {
                throw DataError(id + ": HR image does not match the camera size");
            }
        }
        for (int t : test_ids) {
            for (int r : train_ids) {
                if (t == r) throw DataError("view " + std::to_string(t) + " is in both train and test splits");
            }
        }
        for (int id : train_ids) {
            if (id < 0 || static_cast<std::size_t>(id) >= views.size()) throw DataError("train id out of range");
        }
        for (int id : test_ids) {
            if (id < 0 || static_cast<std::size_t>(id) >= views.size()) throw DataError("test id out of range");
        }
    }
};

}  // namespace splatsr
