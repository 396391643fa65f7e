#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "opaseg/volume.hpp"

namespace opaseg {

// Per-pixel categorical mean and population standard deviation over a set of
// annotator masks. Planes are stored per slice: mean[s][c][y][x], then
// std[s][c][y][x]. support[s][y][x] counts the annotators that labelled the
// pixel (support 0 marks "no target").
struct SoftLabel {
    std::array<int, 3> shape{0, 0, 0}; // slices, height, width
    std::vector<int> classes;          // label values the planes cover, ascending
    int n_annotators = 0;
    std::vector<double> mean;          // shape[0] * classes.size() * H * W
    std::vector<double> stddev;        // same layout
    std::vector<std::uint16_t> support; // shape[0] * H * W

    std::size_t plane_size() const {
        return static_cast<std::size_t>(shape[1]) * shape[2];
    }
    std::size_t idx(int s, int c_index, int y, int x) const {
        return ((static_cast<std::size_t>(s) * classes.size() + c_index) * shape[1] + y) *
                   shape[2] + x;
    }
    std::size_t pixel_idx(int s, int y, int x) const {
        return (static_cast<std::size_t>(s) * shape[1] + y) * shape[2] + x;
    }
};

// Treats each annotator's label as a one-hot sample over `classes` and
// computes the per-pixel first and second moments. Annotators that marked a
// pixel unlabelled (-1) are excluded from that pixel's support.
SoftLabel fuse(const std::vector<LabelMask>& masks, const std::vector<int>& classes);

// Mean opacity indicator across the annotators that labelled each pixel,
// thresholded at 0.5 (ties resolve to opacity). Output values are 0/1.
LabelMask average_annotation(const std::vector<LabelMask>& masks,
                             const std::vector<int>& opacity_groups);

struct GaussianTarget {
    // Target distribution per pixel: the fused mean (same layout as SoftLabel::mean).
    std::vector<double> target;
    // Per-pixel confidence weight: 1 / (mean class variance + epsilon),
    // rescaled so the mean over supported pixels is 1. Unsupported pixels get 0.
    std::vector<double> weight; // shape[0] * H * W
};

GaussianTarget gaussian_target(const SoftLabel& soft, double epsilon);

// .sfl payload: per slice, mean planes then std planes, float32 little-endian.
// Sidecar: {"classes": [...], "n_annotators": N, "shape": [S, H, W]}.
void save_soft_label(const SoftLabel& soft, const std::filesystem::path& path);
SoftLabel load_soft_label(const std::filesystem::path& path);

} // namespace opaseg
