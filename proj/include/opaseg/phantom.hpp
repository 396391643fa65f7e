#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "opaseg/volume.hpp"

namespace opaseg {

struct Ellipsoid {
    std::array<double, 3> center{0, 0, 0}; // z, y, x in voxels
    std::array<double, 3> radii{1, 1, 1};

    bool contains(double z, double y, double x) const {
        const double dz = (z - center[0]) / radii[0];
        const double dy = (y - center[1]) / radii[1];
        const double dx = (x - center[2]) / radii[2];
        return dz * dz + dy * dy + dx * dx <= 1.0;
    }
};

struct OpacityBlob {
    Ellipsoid shape;
    int group = 2;             // 2, 3 or 4
    double intensity_hu = -450.0;
};

// Synthetic chest slab: lung ellipsoids in a soft-tissue background, with
// opacity blobs of known group and geometry inside the lungs. Stands in for
// clinical data so every pipeline stage has exact ground truth.
struct PhantomSpec {
    std::array<int, 3> shape{16, 64, 64}; // slices, height, width
    int n_lung_ellipses = 2;
    std::vector<OpacityBlob> blobs;
    double background_hu = 40.0;
    std::array<double, 2> lung_hu_range{-850.0, -650.0};
    double noise_std_hu = 15.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// Simulated annotator: smooth boundary displacement, region-level group
// confusion, and whole-region omission. Lung and background labels pass
// through unchanged; only opacity region borders and identities vary.
struct AnnotatorModel {
    double boundary_jitter_px = 0.0;
    // Rows/columns ordered group 2, 3, 4; each row sums to 1.
    std::array<std::array<double, 3>, 3> class_confusion{
        {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
    double omission_rate = 0.0;
    std::uint64_t seed = 0;

    static AnnotatorModel identity(std::uint64_t seed) {
        AnnotatorModel m;
        m.seed = seed;
        return m;
    }

    void validate() const;
};

struct PhantomResult {
    CtVolume volume;
    LabelMask truth; // groups {0, 1, 2, 3, 4}, fully labelled
};

// Lung placement for a spec: n ellipsoids spread along x at mid-height.
std::vector<Ellipsoid> lung_ellipsoids(const PhantomSpec& spec);

// Rasterizes the phantom. Throws when any blob voxel falls outside every
// lung ellipsoid.
PhantomResult generate(const PhantomSpec& spec);

LabelMask simulate_annotator(const LabelMask& truth, const AnnotatorModel& model);

// Spec with n_blobs randomly placed blobs guaranteed inside the lungs.
PhantomSpec random_phantom_spec(std::array<int, 3> shape, int n_blobs, std::uint64_t seed);

// JSON round-trips for the CLI config files.
std::string phantom_spec_to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const std::string& text);
std::string annotator_model_to_json(const AnnotatorModel& model);
AnnotatorModel annotator_model_from_json(const std::string& text);

} // namespace opaseg
