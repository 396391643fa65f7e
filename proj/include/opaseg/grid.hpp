#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "opaseg/errors.hpp"

namespace opaseg {

// Contiguous 3D array, z-major layout: index = (z * height + y) * width + x.
template <typename T>
struct Grid3 {
    std::array<int, 3> shape{0, 0, 0}; // depth, height, width
    std::vector<T> data;

    Grid3() = default;
    Grid3(int depth, int height, int width, T fill = T{})
        : shape{depth, height, width} {
        if (depth < 1 || height < 1 || width < 1)
            throw ValidationError("grid shape components must be >= 1, got (" +
                                  std::to_string(depth) + "," + std::to_string(height) + "," +
                                  std::to_string(width) + ")");
        data.assign(static_cast<std::size_t>(depth) * height * width, fill);
    }

    int depth() const { return shape[0]; }
    int height() const { return shape[1]; }
    int width() const { return shape[2]; }
    std::size_t size() const { return data.size(); }
    std::size_t slice_size() const { return static_cast<std::size_t>(shape[1]) * shape[2]; }

    T& at(int z, int y, int x) {
        return data[(static_cast<std::size_t>(z) * shape[1] + y) * shape[2] + x];
    }
    const T& at(int z, int y, int x) const {
        return data[(static_cast<std::size_t>(z) * shape[1] + y) * shape[2] + x];
    }

    T* slice(int z) { return data.data() + static_cast<std::size_t>(z) * slice_size(); }
    const T* slice(int z) const { return data.data() + static_cast<std::size_t>(z) * slice_size(); }

    bool same_shape(const Grid3& other) const { return shape == other.shape; }

    bool operator==(const Grid3& other) const {
        return shape == other.shape && data == other.data;
    }
};

// Contiguous 2D array, row-major.
template <typename T>
struct Image2 {
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Image2() = default;
    Image2(int h, int w, T fill = T{}) : height(h), width(w) {
        if (h < 1 || w < 1)
            throw ValidationError("image shape components must be >= 1");
        data.assign(static_cast<std::size_t>(h) * w, fill);
    }

    std::size_t size() const { return data.size(); }
    T& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    const T& at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const Image2& other) const {
        return height == other.height && width == other.width && data == other.data;
    }
};

} // namespace opaseg
