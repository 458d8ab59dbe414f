#include "twinsplat/part_crops.hpp"

#include "twinsplat/errors.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <string>

namespace twinsplat {

namespace {

float sample_padded(const Image& img, int x, int y, int c) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return 0.0f;
    return img.at(x, y, c);
}

/// Bilinear read at continuous pixel coordinates (pixel centers at integer + 0.5).
float bilinear(const Image& img, double x, double y, int c) {
    const double fx = x - 0.5, fy = y - 0.5;
    const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
    const double tx = fx - x0, ty = fy - y0;
    const double v00 = sample_padded(img, x0, y0, c), v10 = sample_padded(img, x0 + 1, y0, c);
    const double v01 = sample_padded(img, x0, y0 + 1, c), v11 = sample_padded(img, x0 + 1, y0 + 1, c);
    return static_cast<float>((1 - ty) * ((1 - tx) * v00 + tx * v10) + ty * ((1 - tx) * v01 + tx * v11));
}

} // namespace

int PartCropSet::count_present() const {
    return static_cast<int>(std::count(present.begin(), present.end(), true));
}

Image crop_region(const Image& img, const std::array<int, 4>& region, int size) {
    const int w = region[2] - region[0], h = region[3] - region[1];
    if (w <= 0 || h <= 0 || size <= 0) throw InputError("crop_region: empty region or size");
    Image out(size, size, img.channels);
    const double sx = static_cast<double>(w) / size, sy = static_cast<double>(h) / size;
    const bool identity = w == size && h == size;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(x, y, c) = identity ? sample_padded(img, region[0] + x, region[1] + y, c)
                                           : bilinear(img, region[0] + (x + 0.5) * sx, region[1] + (y + 0.5) * sy, c);
    return out;
}

Image resize_bilinear(const Image& img, int width, int height) {
    if (width == img.width && height == img.height) return img;
    Image out(width, height, img.channels);
    const double sx = static_cast<double>(img.width) / width, sy = static_cast<double>(img.height) / height;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            // Clamp to the border so resizing never darkens edges.
            const double px = std::clamp((x + 0.5) * sx, 0.5, img.width - 0.5);
            const double py = std::clamp((y + 0.5) * sy, 0.5, img.height - 0.5);
            for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = bilinear(img, px, py, c);
        }
    return out;
}

PartCropSet crop_parts(const Image& image, const LabelMap& labels, int crop_size) {
    if (image.width != labels.width || image.height != labels.height)
        throw InputError("crop_parts: image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                         " but mask is " + std::to_string(labels.width) + "x" + std::to_string(labels.height));
    if (image.channels != 3) throw InputError("crop_parts: expected a 3-channel image");
    if (crop_size < 1) throw InputError("crop_parts: crop size must be positive");

    std::array<std::array<int, 4>, 8> box;
    box.fill({INT_MAX, INT_MAX, INT_MIN, INT_MIN});
    for (int y = 0; y < labels.height; ++y)
        for (int x = 0; x < labels.width; ++x) {
            const int id = labels.at(x, y);
            if (id == 0) continue;
            if (id > 8) throw InputError("crop_parts: label " + std::to_string(id) + " outside 0..8");
            auto& b = box[id - 1];
            b = {std::min(b[0], x), std::min(b[1], y), std::max(b[2], x + 1), std::max(b[3], y + 1)};
        }

    PartCropSet out;
    out.crop_size = crop_size;
    for (int p = 0; p < 8; ++p) {
        const auto& b = box[p];
        if (b[0] == INT_MAX) continue;
        const int bw = b[2] - b[0], bh = b[3] - b[1];
        const int side = std::max(bw, bh);
        // Grow the short side symmetrically; an odd surplus goes to the far side.
        const int x0 = b[0] - (side - bw) / 2, y0 = b[1] - (side - bh) / 2;
        out.regions[p] = {x0, y0, x0 + side, y0 + side};
        out.present[p] = true;
        out.crops.emplace_back(p + 1, crop_region(image, out.regions[p], crop_size));
    }
    return out;
}

} // namespace twinsplat
