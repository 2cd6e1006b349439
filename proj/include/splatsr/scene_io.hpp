// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "splatsr/scene.hpp"

namespace splatsr {

namespace detail {

/// 17 significant digits: enough for an exact double round trip.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

/// Line-oriented reader that remembers where it is for error messages.
class LineReader {
public:
    LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    /// Next non-empty, non-comment line split into tokens; false at end of input.
    bool next(std::vector<std::string_view>& tokens) {
        while (std::getline(in_, current_)) {
            ++line_;
            tokens = split_ws(current_);
            if (!tokens.empty() && tokens.front().front() != '#') {
                return true;
            }
        }
        return false;
    }

    std::vector<std::string_view> expect(const char* what) {
        std::vector<std::string_view> tokens;
        if (!next(tokens)) {
            throw ParseError(source_, line_ + 1, std::string("unexpected end of file, expected ") + what);
        }
        return tokens;
    }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, line_, what); }

    double to_double(std::string_view tok, const char* field) const {
        double v = 0.0;
        const auto* end = tok.data() + tok.size();
        const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
        if (ec != std::errc() || ptr != end) {
            fail(std::string("field '") + field + "': not a number: '" + std::string(tok) + "'");
        }
        return v;
    }

    long long to_int(std::string_view tok, const char* field) const {
        long long v = 0;
        const auto* end = tok.data() + tok.size();
        const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
        if (ec != std::errc() || ptr != end) {
            fail(std::string("field '") + field + "': not an integer: '" + std::string(tok) + "'");
        }
        return v;
    }

    void require_count(const std::vector<std::string_view>& tokens, std::size_t n, const char* what) const {
        if (tokens.size() != n) {
            fail(std::string(what) + ": expected " + std::to_string(n) + " tokens, got " +
                 std::to_string(tokens.size()));
        }
    }

private:
    std::istream& in_;
    std::string source_;
    std::string current_;
    std::size_t line_ = 0;
};

/// Writes to `path` through a temporary sibling and a rename so readers never see partial files.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot open for writing: " + tmp.string());
        }
        out << contents;
        if (!out) {
            throw DataError("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

inline std::ifstream open_for_read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open for reading: " + path.string());
    }
    return in;
}

}  // namespace detail

inline constexpr std::string_view kSceneMagic = "splatsr-scene";
inline constexpr int kSceneVersion = 1;
inline constexpr std::string_view kCameraMagic = "splatsr-cameras";
inline constexpr int kCameraVersion = 1;

// Scene text format:
//   splatsr-scene <version> <count> <bg_r> <bg_g> <bg_b>
//   px py pz  ls0 ls1 ls2  qw qx qy qz  opacity_logit  r g b      (one line per Gaussian)

inline std::string format_scene(const GaussianScene& scene) {
    using detail::format_double;
    std::string out;
    out.reserve(64 + scene.size() * 14 * 25);
    out += std::string(kSceneMagic) + " " + std::to_string(kSceneVersion) + " " + std::to_string(scene.size());
    for (int k = 0; k < 3; ++k) out += " " + format_double(scene.background_color[k]);
    out += '\n';
    for (const auto& g : scene.gaussians) {
        std::string line;
        for (int k = 0; k < 3; ++k) line += format_double(g.position[k]) + ' ';
        for (int k = 0; k < 3; ++k) line += format_double(g.log_scale[k]) + ' ';
        for (int k = 0; k < 4; ++k) line += format_double(g.rotation[k]) + ' ';
        line += format_double(g.opacity_logit);
        for (int k = 0; k < 3; ++k) line += ' ' + format_double(g.color[k]);
        out += line;
        out += '\n';
    }
    return out;
}

inline GaussianScene parse_scene(std::istream& in, const std::string& source = "<scene>") {
    detail::LineReader reader(in, source);
    auto header = reader.expect("scene header");
    if (header.size() != 6 || header[0] != kSceneMagic) {
        reader.fail("bad header: expected '" + std::string(kSceneMagic) + " <version> <count> <bg_r> <bg_g> <bg_b>'");
    }
    if (reader.to_int(header[1], "version") != kSceneVersion) {
        reader.fail("unsupported scene version " + std::string(header[1]));
    }
    const long long count = reader.to_int(header[2], "count");
    if (count < 0) {
        reader.fail("negative gaussian count");
    }
    GaussianScene scene;
    for (int k = 0; k < 3; ++k) scene.background_color[k] = reader.to_double(header[3 + k], "background");

    static constexpr const char* kFields[14] = {"position.x",  "position.y",  "position.z",  "log_scale.x",
                                                "log_scale.y", "log_scale.z", "rotation.w",  "rotation.x",
                                                "rotation.y",  "rotation.z",  "opacity_logit", "color.r",
                                                "color.g",     "color.b"};
    scene.gaussians.reserve(static_cast<std::size_t>(count));
    for (long long i = 0; i < count; ++i) {
        auto tok = reader.expect("gaussian record");
        reader.require_count(tok, 14, "gaussian record");
        double v[14];
        for (int k = 0; k < 14; ++k) v[k] = reader.to_double(tok[k], kFields[k]);
        GaussianParams g;
        g.position = Vec3(v[0], v[1], v[2]);
        g.log_scale = Vec3(v[3], v[4], v[5]);
        g.rotation = Vec4(v[6], v[7], v[8], v[9]);
        g.opacity_logit = v[10];
        g.color = Vec3(v[11], v[12], v[13]);
        scene.gaussians.push_back(g);
    }
    std::vector<std::string_view> extra;
    if (reader.next(extra)) {
        reader.fail("trailing data after " + std::to_string(count) + " gaussian records");
    }
    return scene;
}

inline void save_scene(const GaussianScene& scene, const std::filesystem::path& path) {
    detail::write_file_atomic(path, format_scene(scene));
}

inline GaussianScene load_scene(const std::filesystem::path& path) {
    auto in = detail::open_for_read(path);
    return parse_scene(in, path.string());
}

// Camera text format: one block per view.
//   splatsr-cameras <version> <count>
//   camera <index>
//   rotation_w2c r00 r01 r02 r10 r11 r12 r20 r21 r22
//   translation_w2c tx ty tz
//   focal fx fy
//   principal_point cx cy
//   width W
//   height H
//   near_plane n
//   end

inline std::string format_cameras(const std::vector<Camera>& cameras) {
    using detail::format_double;
    std::ostringstream out;
    out << kCameraMagic << ' ' << kCameraVersion << ' ' << cameras.size() << '\n';
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        const Camera& c = cameras[i];
        out << "camera " << i << '\n' << "rotation_w2c";
        for (int r = 0; r < 3; ++r)
            for (int k = 0; k < 3; ++k) out << ' ' << format_double(c.rotation_w2c(r, k));
        out << "\ntranslation_w2c";
        for (int k = 0; k < 3; ++k) out << ' ' << format_double(c.translation_w2c[k]);
        out << "\nfocal " << format_double(c.fx) << ' ' << format_double(c.fy) << '\n';
        out << "principal_point " << format_double(c.cx) << ' ' << format_double(c.cy) << '\n';
        out << "width " << c.width << "\nheight " << c.height << '\n';
        out << "near_plane " << format_double(c.near_plane) << "\nend\n";
    }
    return out.str();
}

inline std::vector<Camera> parse_cameras(std::istream& in, const std::string& source = "<cameras>") {
    detail::LineReader reader(in, source);
    auto header = reader.expect("camera header");
    if (header.size() != 3 || header[0] != kCameraMagic) {
        reader.fail("bad header: expected '" + std::string(kCameraMagic) + " <version> <count>'");
    }
    if (reader.to_int(header[1], "version") != kCameraVersion) {
        reader.fail("unsupported camera version " + std::string(header[1]));
    }
    const long long count = reader.to_int(header[2], "count");
    if (count < 0) reader.fail("negative camera count");

    std::vector<Camera> cameras;
    for (long long i = 0; i < count; ++i) {
        auto tok = reader.expect("camera record");
        if (tok.size() != 2 || tok[0] != "camera" || reader.to_int(tok[1], "camera") != i) {
            reader.fail("expected 'camera " + std::to_string(i) + "'");
        }
        Camera cam;
        bool seen[7] = {};
        for (;;) {
            tok = reader.expect("camera field or 'end'");
            const std::string_view key = tok[0];
            if (key == "end") {
                reader.require_count(tok, 1, "end");
                break;
            }
            if (key == "rotation_w2c") {
                reader.require_count(tok, 10, "rotation_w2c");
                for (int r = 0; r < 3; ++r)
                    for (int k = 0; k < 3; ++k) cam.rotation_w2c(r, k) = reader.to_double(tok[1 + 3 * r + k], "rotation_w2c");
                seen[0] = true;
            } else if (key == "translation_w2c") {
                reader.require_count(tok, 4, "translation_w2c");
                for (int k = 0; k < 3; ++k) cam.translation_w2c[k] = reader.to_double(tok[1 + k], "translation_w2c");
                seen[1] = true;
            } else if (key == "focal") {
                reader.require_count(tok, 3, "focal");
                cam.fx = reader.to_double(tok[1], "focal");
                cam.fy = reader.to_double(tok[2], "focal");
                seen[2] = true;
            } else if (key == "principal_point") {
                reader.require_count(tok, 3, "principal_point");
                cam.cx = reader.to_double(tok[1], "principal_point");
                cam.cy = reader.to_double(tok[2], "principal_point");
                seen[3] = true;
            } else if (key == "width") {
                reader.require_count(tok, 2, "width");
                cam.width = static_cast<int>(reader.to_int(tok[1], "width"));
                seen[4] = true;
            } else if (key == "height") {
                reader.require_count(tok, 2, "height");
                cam.height = static_cast<int>(reader.to_int(tok[1], "height"));
                seen[5] = true;
            } else if (key == "near_plane") {
                reader.require_count(tok, 2, "near_plane");
                cam.near_plane = reader.to_double(tok[1], "near_plane");
                seen[6] = true;
            } else {
                reader.fail("unknown camera field '" + std::string(key) + "'");
            }
        }
        for (bool s : seen) {
            if (!s) reader.fail("camera " + std::to_string(i) + " is missing a field");
        }
        try {
            cam.validate();
        } catch (const DataError& e) {
            reader.fail("camera " + std::to_string(i) + ": " + e.what());
        }
        cameras.push_back(cam);
    }
    return cameras;
}

inline void save_cameras(const std::vector<Camera>& cameras, const std::filesystem::path& path) {
    detail::write_file_atomic(path, format_cameras(cameras));
}

inline std::vector<Camera> load_cameras(const std::filesystem::path& path) {
    auto in = detail::open_for_read(path);
    return parse_cameras(in, path.string());
}

}  // namespace splatsr
