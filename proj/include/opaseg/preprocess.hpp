#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "opaseg/volume.hpp"

namespace opaseg {

// Default preprocessing constants: lung window and the training-set
// intensity statistics used for normalization. The statistics are
// configuration; hu_statistics() recomputes them from a training set.
constexpr double kLungWindowLowHu = -1000.0;
constexpr double kLungWindowHighHu = 350.0;
constexpr double kNormMeanHu = -653.2;
constexpr double kNormStdHu = 628.5;

// Clamps every voxel into [low, high]. Shape and spacing are unchanged.
CtVolume apply_lung_window(const CtVolume& volume, double low_hu, double high_hu);

// (value - mean) / std elementwise. The slice must already be windowed.
NormalizedSlice normalize(const Image2<double>& slice_hu, double mean_hu, double std_hu,
                          std::array<double, 2> window = {kLungWindowLowHu, kLungWindowHighHu});

// Extracts slice z of a volume as doubles.
Image2<double> slice_to_image(const CtVolume& volume, int z);

// Inverse of normalize; recovers windowed HU.
Image2<double> denormalize(const NormalizedSlice& slice);

// Replaces every class ID with its group ID.
LabelMask class_to_group(const LabelMask& mask, const ClassTaxonomy& taxonomy);

struct HuStats {
    double mean_hu = 0.0;
    double std_hu = 0.0; // population
};

// Mean / std over all voxels of the given (already windowed) volumes.
HuStats hu_statistics(const std::vector<CtVolume>& volumes);

struct ScanSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

// Scan-level partition: the test set is fixed by test_ids; the remainder is
// shuffled by seed and split val/train by val_fraction. Validation gets
// round(val_fraction * remainder) scans, at least 1.
ScanSplit split_scans(const std::vector<std::string>& scan_ids,
                      const std::vector<std::string>& test_ids, double val_fraction,
                      std::uint64_t seed);

} // namespace opaseg
