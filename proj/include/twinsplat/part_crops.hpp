#pragma once

#include "twinsplat/image.hpp"

#include <array>
#include <utility>
#include <vector>

namespace twinsplat {

/// Square per-part crops cut from an image by a part-label mask.
struct PartCropSet {
    int crop_size = 0;
    std::array<bool, 8> present{};                 // indexed by part id - 1
    std::vector<std::pair<int, Image>> crops;      // (part id, crop) for present parts, ascending id
    std::array<std::array<int, 4>, 8> regions{};   // square source region x0, y0, x1, y1 per part (half-open)

    [[nodiscard]] int count_present() const;
};

/// Bilinear resampling with pixel-center alignment; a same-size resize is the identity.
[[nodiscard]] Image resize_bilinear(const Image& img, int width, int height);

/// Cuts `region` (half-open, may extend past the image; outside reads as 0) and resamples it to size x size.
[[nodiscard]] Image crop_region(const Image& img, const std::array<int, 4>& region, int size);

/// Bounding box of each part, squared around its center (side = max(box_w, box_h)), then resampled.
[[nodiscard]] PartCropSet crop_parts(const Image& image, const LabelMap& labels, int crop_size);

} // namespace twinsplat
