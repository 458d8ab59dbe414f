#include "twinsplat/image.hpp"

#include "binary_io.hpp"
#include "twinsplat/errors.hpp"
#include "twinsplat/splat_renderer.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

namespace twinsplat {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Part colors for viewing label PNGs; index 0 is background.
constexpr std::array<std::array<std::uint8_t, 3>, 9> kLabelPalette = {{{0, 0, 0},
                                                                       {230, 200, 160},
                                                                       {200, 60, 60},
                                                                       {60, 160, 60},
                                                                       {60, 60, 200},
                                                                       {220, 220, 60},
                                                                       {220, 60, 220},
                                                                       {60, 200, 200},
                                                                       {240, 140, 40}}};

std::uint8_t quantize(float x) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0f, 1.0f) * 255.0f));
}

/// Writes 8-bit rows; palette may be empty unless color_type is PNG_COLOR_TYPE_PALETTE.
void write_png_rows(const std::filesystem::path& path, int width, int height, int color_type,
                    const std::vector<std::uint8_t>& pixels, int bytes_per_pixel,
                    const std::vector<png_color>& palette) {
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("write_png: cannot open " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_png: libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_png: libpng error while writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    if (color_type == PNG_COLOR_TYPE_PALETTE)
        png_set_PLTE(png, info, const_cast<png_color*>(palette.data()), static_cast<int>(palette.size()));
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(width) * bytes_per_pixel;
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(pixels.data() + y * stride));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct RawPng {
    int width = 0, height = 0, channels = 0;
    bool palette = false;
    std::vector<std::uint8_t> pixels;
};

/// Reads 8-bit samples. With keep_indices, palette images return raw indices.
RawPng read_png_rows(const std::filesystem::path& path, bool keep_indices) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw IoError("read_png: cannot open " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw FormatError("read_png: " + path.string() + " is not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("read_png: libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("read_png: corrupt PNG " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    RawPng out;
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    const int color_type = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    out.palette = color_type == PNG_COLOR_TYPE_PALETTE;
    if (depth == 16) png_set_strip_16(png);
    if (depth < 8) png_set_packing(png);
    if (out.palette && !keep_indices) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8 && !keep_indices) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    out.channels = png_get_channels(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    out.pixels.resize(stride * out.height);
    std::vector<png_bytep> rows(out.height);
    for (int y = 0; y < out.height; ++y) rows[y] = out.pixels.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

} // namespace

Image color_image(const RenderOutput& r) {
    Image img(r.width, r.height, 3);
    for (std::size_t i = 0; i < r.color.size(); ++i) img.data[i] = static_cast<float>(r.color[i]);
    return img;
}

Image alpha_image(const RenderOutput& r) {
    Image img(r.width, r.height, 1);
    for (std::size_t i = 0; i < r.alpha.size(); ++i) img.data[i] = static_cast<float>(r.alpha[i]);
    return img;
}

void write_png(const Image& img, const std::filesystem::path& path) {
    int color_type = 0;
    switch (img.channels) {
        case 1: color_type = PNG_COLOR_TYPE_GRAY; break;
        case 3: color_type = PNG_COLOR_TYPE_RGB; break;
        case 4: color_type = PNG_COLOR_TYPE_RGBA; break;
        default: throw InputError("write_png: unsupported channel count " + std::to_string(img.channels));
    }
    std::vector<std::uint8_t> bytes(img.data.size());
    std::transform(img.data.begin(), img.data.end(), bytes.begin(), quantize);
    write_png_rows(path, img.width, img.height, color_type, bytes, img.channels, {});
}

Image read_png(const std::filesystem::path& path) {
    const RawPng raw = read_png_rows(path, false);
    Image img(raw.width, raw.height, raw.channels);
    for (std::size_t i = 0; i < raw.pixels.size(); ++i) img.data[i] = raw.pixels[i] / 255.0f;
    return img;
}

void write_label_png(const LabelMap& labels, const std::filesystem::path& path) {
    std::vector<png_color> palette;
    for (const auto& c : kLabelPalette) palette.push_back({c[0], c[1], c[2]});
    for (auto v : labels.labels)
        if (v >= palette.size()) throw InputError("write_label_png: label " + std::to_string(v) + " out of range");
    write_png_rows(path, labels.width, labels.height, PNG_COLOR_TYPE_PALETTE, labels.labels, 1, palette);
}

LabelMap read_label_png(const std::filesystem::path& path) {
    const RawPng raw = read_png_rows(path, true);
    if (raw.channels != 1)
        throw FormatError("read_label_png: expected a single-channel (palette or gray) PNG: " + path.string());
    LabelMap out(raw.width, raw.height);
    out.labels = raw.pixels;
    return out;
}

void write_depth_bin(const RenderOutput& r, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("write_depth_bin: cannot open " + path.string());
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.width));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.height));
    for (double d : r.depth) detail::write_le(out, static_cast<float>(d));
}

} // namespace twinsplat
