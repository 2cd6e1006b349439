// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "splatsr/image.hpp"

namespace splatsr {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void png_warning_silent(png_structp, png_const_charp) {}

}  // namespace detail

/// Quantizes [0,1] values to `bit_depth` (8 or 16) with round-half-to-even and writes an RGB PNG.
inline void write_png(const ImageBuffer& image, const std::filesystem::path& path, int bit_depth = 8) {
    if (bit_depth != 8 && bit_depth != 16) {
        throw ArgumentError("write_png: bit depth must be 8 or 16");
    }
    if (image.width() < 1 || image.height() < 1) {
        throw ArgumentError("write_png: empty image");
    }
    const double maxval = bit_depth == 8 ? 255.0 : 65535.0;
    const std::size_t bytes_per_sample = bit_depth == 8 ? 1 : 2;
    const std::size_t row_bytes = static_cast<std::size_t>(image.width()) * 3 * bytes_per_sample;
    std::vector<png_byte> buffer(row_bytes * static_cast<std::size_t>(image.height()));
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(image.at(x, y, c), 0.0, 1.0);
                const auto q = static_cast<unsigned>(std::nearbyint(v * maxval));
                const std::size_t o = static_cast<std::size_t>(y) * row_bytes + (static_cast<std::size_t>(x) * 3 + c) * bytes_per_sample;
                if (bit_depth == 8) {
                    buffer[o] = static_cast<png_byte>(q);
                } else {
                    buffer[o] = static_cast<png_byte>(q >> 8);
                    buffer[o + 1] = static_cast<png_byte>(q & 0xFF);
                }
            }
        }
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(image.height()));
    for (int y = 0; y < image.height(); ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * row_bytes;

    const std::filesystem::path tmp = path.string() + ".tmp";
    detail::FilePtr file(std::fopen(tmp.string().c_str(), "wb"));
    if (!file) {
        throw DataError("cannot open for writing: " + tmp.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, detail::png_warning_silent);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw DataError("libpng: out of memory");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("libpng: failed writing " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()), bit_depth,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    file.reset();
    std::filesystem::rename(tmp, path);
}

/// Reads an 8- or 16-bit PNG (gray, RGB, palette; alpha is dropped) into [0,1] doubles by
/// dividing by the bit-depth maximum.
inline ImageBuffer read_png(const std::filesystem::path& path) {
    detail::FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) {
        throw DataError("cannot open image: " + path.string());
    }
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw DataError("not a PNG file: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, detail::png_warning_silent);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("libpng: out of memory");
    }
    std::vector<png_byte> buffer;
    std::vector<png_bytep> rows;
    png_uint_32 width = 0, height = 0;
    int bit_depth = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("libpng: failed reading " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    bit_depth = png_get_bit_depth(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    buffer.resize(row_bytes * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageBuffer image(static_cast<int>(width), static_cast<int>(height));
    const double maxval = bit_depth == 16 ? 65535.0 : 255.0;
    for (png_uint_32 y = 0; y < height; ++y) {
        for (png_uint_32 x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                unsigned v;
                if (bit_depth == 16) {
                    const png_byte* p = rows[y] + (x * 3 + c) * 2;
                    v = (static_cast<unsigned>(p[0]) << 8) | p[1];
                } else {
                    v = rows[y][x * 3 + c];
                }
                image.at(static_cast<int>(x), static_cast<int>(y), c) = v / maxval;
            }
        }
    }
    return image;
}

}  // namespace splatsr
