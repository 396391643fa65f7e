#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "opaseg/grid.hpp"

namespace opaseg {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

// Group palette for overlays: lung green, group 2 red, group 3 purple,
// group 4 brown; unlabelled blue; background untinted.
Rgb group_color(int group);

// Grayscale windowed CT slice with labels alpha-blended on top.
std::vector<Rgb> overlay_slice(const Image2<double>& hu_slice, const std::int8_t* labels,
                               double alpha = 0.45);

// 8-bit RGB PNG (atomic write).
void write_png_rgb(const std::filesystem::path& path, const std::vector<Rgb>& pixels, int h,
                   int w);

} // namespace opaseg
