#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace twinsplat {

struct RenderOutput;

/// Row-major float image with interleaved channels, values nominally in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c, float fill = 0.0f)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    [[nodiscard]] float& at(int x, int y, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    [[nodiscard]] float at(int x, int y, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    [[nodiscard]] bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }

    bool operator==(const Image&) const = default;
};

/// Per-pixel part labels: 0 background, 1..8 body parts.
struct LabelMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> labels;

    LabelMap() = default;
    LabelMap(int w, int h) : width(w), height(h), labels(static_cast<std::size_t>(w) * h, 0) {}

    [[nodiscard]] std::uint8_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
    [[nodiscard]] std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const LabelMap&) const = default;
};

[[nodiscard]] Image color_image(const RenderOutput& r);
[[nodiscard]] Image alpha_image(const RenderOutput& r);

/// Quantizes with round(x * 255) after clamping to [0,1]; 1, 3 or 4 channels.
void write_png(const Image& img, const std::filesystem::path& path);
/// Reads 8-bit gray/RGB/RGBA (palette and 16-bit are expanded); values scaled by 1/255.
[[nodiscard]] Image read_png(const std::filesystem::path& path);

/// Writes an 8-bit palette PNG whose palette index equals the part id.
void write_label_png(const LabelMap& labels, const std::filesystem::path& path);
/// Accepts palette PNGs (index = id) and 8-bit grayscale PNGs (value = id).
[[nodiscard]] LabelMap read_label_png(const std::filesystem::path& path);

/// Raw float32 depth: u32 width, u32 height, then width*height little-endian floats.
void write_depth_bin(const RenderOutput& r, const std::filesystem::path& path);

} // namespace twinsplat
