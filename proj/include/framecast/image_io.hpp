#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "framecast/error.hpp"

namespace framecast {

// Grayscale raster with pixels in [0,1].
struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;  // row-major, height*width

    float at(int y, int x) const { return pixels[static_cast<size_t>(y) * width + x]; }
};

// 8-bit grayscale PNG, round-to-nearest quantization. Deterministic output:
// fixed settings, no timestamp chunks.
void write_gray_png(const std::string& path, const GrayImage& img);

// Accepts 8/16-bit grayscale, gray+alpha, palette, RGB and RGBA; color is
// reduced to the channel mean. 16-bit inputs are stripped to 8.
GrayImage read_gray_png(const std::string& path);

}  // namespace framecast
