// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "splatsr/image_ops.hpp"
#include "splatsr/png_io.hpp"

namespace splatsr {

enum class PriorKind { bicubic, oracle, file };

inline std::string_view to_string(PriorKind k) {
    switch (k) {
        case PriorKind::bicubic: return "bicubic";
        case PriorKind::oracle: return "oracle";
        case PriorKind::file: return "file";
    }
    return "?";
}

inline PriorKind parse_prior_kind(std::string_view s) {
    if (s == "bicubic") return PriorKind::bicubic;
    if (s == "oracle") return PriorKind::oracle;
    if (s == "file") return PriorKind::file;
    throw ArgumentError("unknown prior kind '" + std::string(s) + "' (expected bicubic, oracle or file)");
}

/// `<dir>/<view_id zero-padded to 5>_x<factor>.png`; the contract shared with external
/// prior generators.
inline std::filesystem::path prior_file_path(const std::filesystem::path& dir, int view_id, int factor) {
    char name[64];
    std::snprintf(name, sizeof name, "%05d_x%d.png", view_id, factor);
    return dir / name;
}

/// Produces the pseudo-HR target for a view from its LR observation. Targets are computed
/// once per view and cached; training never sees them change.
class PriorProvider {
public:
    static PriorProvider bicubic(int factor) { return PriorProvider(PriorKind::bicubic, factor); }

    /// Ground-truth HR images indexed by view id (views without ground truth left empty).
    static PriorProvider oracle(int factor, std::vector<std::optional<ImageBuffer>> hr_views) {
        PriorProvider p(PriorKind::oracle, factor);
        p.oracle_ = std::move(hr_views);
        return p;
    }

    static PriorProvider from_files(int factor, std::filesystem::path dir) {
        PriorProvider p(PriorKind::file, factor);
        p.dir_ = std::move(dir);
        return p;
    }

    [[nodiscard]] PriorKind kind() const noexcept { return kind_; }
    [[nodiscard]] int factor() const noexcept { return factor_; }
    [[nodiscard]] const std::filesystem::path& directory() const noexcept { return dir_; }

    const ImageBuffer& generate_prior(int view_id, const ImageBuffer& lr_image) {
        if (auto it = cache_.find(view_id); it != cache_.end()) {
            return it->second;
        }
        ImageBuffer hr = make(view_id, lr_image);
        if (hr.width() != lr_image.width() * factor_ || hr.height() != lr_image.height() * factor_) {
            throw DataError("prior for view " + std::to_string(view_id) + " is " + std::to_string(hr.width()) + "x" +
                            std::to_string(hr.height()) + ", expected " + std::to_string(lr_image.width() * factor_) +
                            "x" + std::to_string(lr_image.height() * factor_));
        }
        return cache_.emplace(view_id, std::move(hr)).first->second;
    }

    /// Cached target for a view already passed through generate_prior.
    [[nodiscard]] const ImageBuffer& cached(int view_id) const {
        auto it = cache_.find(view_id);
        if (it == cache_.end()) {
            throw ArgumentError("no prior computed for view " + std::to_string(view_id));
        }
        return it->second;
    }

private:
    PriorProvider(PriorKind kind, int factor) : kind_(kind), factor_(factor) {
        if (factor < 1) throw ArgumentError("prior factor must be >= 1");
    }

    ImageBuffer make(int view_id, const ImageBuffer& lr) const {
        switch (kind_) {
            case PriorKind::bicubic:
                return upsample_bicubic(lr, factor_);
            case PriorKind::oracle: {
                if (view_id < 0 || static_cast<std::size_t>(view_id) >= oracle_.size() || !oracle_[view_id]) {
                    throw DataError("oracle prior: no ground-truth HR image for view " + std::to_string(view_id));
                }
                return *oracle_[view_id];
            }
            case PriorKind::file: {
                const auto path = prior_file_path(dir_, view_id, factor_);
                if (!std::filesystem::exists(path)) {
                    throw DataError("file prior: missing pseudo-HR image for view " + std::to_string(view_id) + ": " +
                                    path.string());
                }
                try {
                    return read_png(path);
                } catch (const DataError& e) {
                    throw DataError("file prior: view " + std::to_string(view_id) + ": " + e.what());
                }
            }
        }
        throw ArgumentError("unknown prior kind");
    }

    PriorKind kind_;
    int factor_;
    std::vector<std::optional<ImageBuffer>> oracle_;
    std::filesystem::path dir_;
    std::map<int, ImageBuffer> cache_;
};

}  // namespace splatsr
