#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "opaseg/grid.hpp"
#include "opaseg/taxonomy.hpp"

namespace opaseg {

// CT attenuation volume in Hounsfield units with voxel spacing metadata.
// Immutable after construction; operations return new volumes.
struct CtVolume {
    Grid3<std::int16_t> hu;
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0}; // z, y, x

    CtVolume() = default;
    CtVolume(Grid3<std::int16_t> voxels, std::array<double, 3> spacing)
        : hu(std::move(voxels)), spacing_mm(spacing) {
        validate();
    }

    void validate() const {
        if (hu.shape[0] < 1 || hu.shape[1] < 1 || hu.shape[2] < 1)
            throw ValidationError("volume shape components must be >= 1");
        if (hu.size() != static_cast<std::size_t>(hu.shape[0]) * hu.shape[1] * hu.shape[2])
            throw ValidationError("voxel count does not match shape");
        for (double s : spacing_mm)
            if (!(s > 0.0)) throw ValidationError("spacing_mm components must be > 0");
    }
};

// Per-voxel label volume. Values are class IDs (or group IDs, which occupy
// the same -1..10 range) from the taxonomy. Slices an annotator skipped are
// all -1 and excluded from labelled_slices.
struct LabelMask {
    Grid3<std::int8_t> labels;
    std::string annotator_id;
    std::vector<int> labelled_slices;

    LabelMask() = default;
    LabelMask(Grid3<std::int8_t> values, std::string annotator = "")
        : labels(std::move(values)), annotator_id(std::move(annotator)) {
        validate();
        recompute_labelled_slices();
    }

    void validate() const {
        for (std::size_t i = 0; i < labels.data.size(); ++i) {
            const int v = labels.data[i];
            if (v < -1 || v > 10)
                throw ValidationError("invalid class id " + std::to_string(v) +
                                      " at voxel index " + std::to_string(i));
        }
    }

    void recompute_labelled_slices() {
        labelled_slices.clear();
        for (int z = 0; z < labels.depth(); ++z) {
            const std::int8_t* s = labels.slice(z);
            const std::size_t n = labels.slice_size();
            bool any = false;
            for (std::size_t i = 0; i < n; ++i) {
                if (s[i] != kUnlabelled) {
                    any = true;
                    break;
                }
            }
            if (any) labelled_slices.push_back(z);
        }
    }
};

// One slice after windowing and normalization; the network's input unit.
struct NormalizedSlice {
    Image2<double> values;
    std::array<double, 2> window{-1000.0, 350.0}; // low_hu, high_hu
    double norm_mean_hu = 0.0;
    double norm_std_hu = 1.0;

    NormalizedSlice() = default;
    NormalizedSlice(Image2<double> v, std::array<double, 2> win, double mean, double stddev)
        : values(std::move(v)), window(win), norm_mean_hu(mean), norm_std_hu(stddev) {
        const double lo = (window[0] - norm_mean_hu) / norm_std_hu;
        const double hi = (window[1] - norm_mean_hu) / norm_std_hu;
        for (double x : values.data)
            if (x < lo - 1e-12 || x > hi + 1e-12)
                throw ValidationError("normalized value outside window range; "
                                      "input slice was not windowed");
    }
};

} // namespace opaseg
