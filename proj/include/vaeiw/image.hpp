#pragma once

#include <vector>

#include "vaeiw/sim.hpp"

namespace vaeiw {

/// Single-channel float image, row-major, values in [0, 1].
struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    float at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    bool operator==(const GrayImage&) const = default;
};

/// Maps palette index c to c / (palette - 1), then box-filters to
/// out_height x out_width. Output pixel (y, x) is the mean over source rows
/// [y*H/out_h, (y+1)*H/out_h) and columns likewise (at least one pixel).
GrayImage preprocess(const Screen& screen, int out_height, int out_width);

}  // namespace vaeiw
