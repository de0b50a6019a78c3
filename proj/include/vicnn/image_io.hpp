#pragma once

// PNG (libpng) and binary PPM/PGM I/O, plus bilinear resampling.
// Decoded images are 3 x H x W floats in [0,1]; grayscale files are
// replicated into all three channels.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "vicnn/error.hpp"
#include "vicnn/tensor.hpp"

namespace vicnn {

inline std::uint8_t to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw DataError("cannot open " + path.string());
    return f;
}

[[noreturn]] inline void png_error_fn(png_structp png, png_const_charp msg) {
    *static_cast<std::string*>(png_get_error_ptr(png)) = msg;
    png_longjmp(png, 1);
}
inline void png_warning_fn(png_structp, png_const_charp) {}

inline Tensor from_interleaved(const std::vector<std::uint8_t>& px, std::size_t h, std::size_t w, std::size_t ch) {
    Tensor t(3, h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                t(c, y, x) = static_cast<float>(px[(y * w + x) * ch + (ch == 1 ? 0 : c)]) / 255.0f;
    return t;
}

}  // namespace detail

inline Tensor read_png(const std::filesystem::path& path) {
    auto file = detail::open_file(path, "rb");
    std::uint8_t sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw DataError(path.string() + ": not a PNG file");

    std::string message;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, detail::png_error_fn,
                                             detail::png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("libpng initialisation failed");
    }
    std::vector<std::uint8_t> pixels;
    std::vector<png_bytep> rows;
    png_uint_32 w = 0, h = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError(path.string() + ": " + message);
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    w = png_get_image_width(png, info);
    h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_expand_gray_1_2_4_to_8(png);
        png_set_gray_to_rgb(png);
    }
    png_read_update_info(png, info);
    const std::size_t channels = png_get_channels(png, info);
    pixels.resize(std::size_t{h} * w * channels);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + std::size_t{y} * w * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return detail::from_interleaved(pixels, h, w, channels);
}

/// Writes 8-bit PNG, gray for 1-channel tensors and RGB for 3-channel ones.
inline void write_png(const std::filesystem::path& path, const Tensor& image) {
    if (image.channels() != 1 && image.channels() != 3)
        throw ShapeError("write_png needs 1 or 3 channels, got " + image.shape().str());
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::size_t h = image.height(), w = image.width(), ch = image.channels();
    std::vector<std::uint8_t> pixels(h * w * ch);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < ch; ++c) pixels[(y * w + x) * ch + c] = to_byte(image(c, y, x));

    auto file = detail::open_file(path, "wb");
    std::string message;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, detail::png_error_fn,
                                              detail::png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("libpng initialisation failed");
    }
    std::vector<png_bytep> rows(h);
    for (std::size_t y = 0; y < h; ++y) rows[y] = pixels.data() + y * w * ch;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError(path.string() + ": " + message);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 ch == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Binary PGM (P5) or PPM (P6), maxval <= 255.
inline Tensor read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    auto token = [&in]() {
        std::string t;
        while (in >> t) {
            if (t[0] != '#') return t;
            std::string rest;
            std::getline(in, rest);
        }
        return std::string{};
    };
    const std::string magic = token();
    if (magic != "P5" && magic != "P6") throw DataError(path.string() + ": unsupported PNM type '" + magic + "'");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(token());
        h = std::stoul(token());
        maxval = std::stoul(token());
    } catch (const std::exception&) {
        throw DataError(path.string() + ": malformed PNM header");
    }
    if (maxval == 0 || maxval > 255 || w == 0 || h == 0) throw DataError(path.string() + ": unsupported PNM header");
    in.get();
    const std::size_t ch = magic == "P5" ? 1 : 3;
    std::vector<std::uint8_t> px(w * h * ch);
    if (!in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size())))
        throw DataError(path.string() + ": truncated PNM data");
    Tensor t = detail::from_interleaved(px, h, w, ch);
    if (maxval != 255)
        for (auto& v : t.values()) v = v * 255.0f / static_cast<float>(maxval);
    return t;
}

inline bool is_image_file(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

inline Tensor read_image(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" ? read_png(path) : read_pnm(path);
}

/// Bilinear resampling with half-pixel centers and edge clamping.
template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& in, std::size_t out_h, std::size_t out_w) {
    if (in.height() == out_h && in.width() == out_w) return in;
    if (in.empty() || out_h == 0 || out_w == 0) throw ShapeError("resize_bilinear: empty extent");
    BasicTensor<T> out(in.channels(), out_h, out_w);
    auto taps = [](std::size_t n_out, std::size_t n_in) {
        struct Tap {
            std::size_t i0, i1;
            double f;
        };
        std::vector<Tap> t(n_out);
        const double ratio = static_cast<double>(n_in) / static_cast<double>(n_out);
        for (std::size_t o = 0; o < n_out; ++o) {
            const double src = std::clamp((static_cast<double>(o) + 0.5) * ratio - 0.5, 0.0,
                                          static_cast<double>(n_in - 1));
            const auto i0 = static_cast<std::size_t>(std::floor(src));
            t[o] = {i0, std::min(i0 + 1, n_in - 1), src - static_cast<double>(i0)};
        }
        return t;
    };
    const auto ty = taps(out_h, in.height());
    const auto tx = taps(out_w, in.width());
    for (std::size_t c = 0; c < in.channels(); ++c)
        for (std::size_t y = 0; y < out_h; ++y)
            for (std::size_t x = 0; x < out_w; ++x) {
                const auto& a = ty[y];
                const auto& b = tx[x];
                const double top = (1 - b.f) * in(c, a.i0, b.i0) + b.f * in(c, a.i0, b.i1);
                const double bot = (1 - b.f) * in(c, a.i1, b.i0) + b.f * in(c, a.i1, b.i1);
                out(c, y, x) = static_cast<T>((1 - a.f) * top + a.f * bot);
            }
    return out;
}

}  // namespace vicnn
