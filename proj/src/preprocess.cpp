#include "opaseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "opaseg/parallel.hpp"
#include "opaseg/rng.hpp"

namespace opaseg {

CtVolume apply_lung_window(const CtVolume& volume, double low_hu, double high_hu) {
    if (!(low_hu < high_hu))
        throw ValidationError("window low must be < high, got [" + std::to_string(low_hu) +
                              ", " + std::to_string(high_hu) + "]");
    CtVolume out = volume;
    const auto lo = static_cast<std::int16_t>(std::lround(low_hu));
    const auto hi = static_cast<std::int16_t>(std::lround(high_hu));
    std::int16_t* d = out.hu.data.data();
    parallel::parallel_for_ranges(static_cast<std::int64_t>(out.hu.size()),
                                  [d, lo, hi](std::int64_t b, std::int64_t e) {
                                      for (std::int64_t i = b; i < e; ++i)
                                          d[i] = std::clamp(d[i], lo, hi);
                                  });
    return out;
}

NormalizedSlice normalize(const Image2<double>& slice_hu, double mean_hu, double std_hu,
                          std::array<double, 2> window) {
    if (!(std_hu > 0.0))
        throw ValidationError("normalization std must be > 0, got " + std::to_string(std_hu));
    Image2<double> out(slice_hu.height, slice_hu.width);
    for (std::size_t i = 0; i < slice_hu.data.size(); ++i)
        out.data[i] = (slice_hu.data[i] - mean_hu) / std_hu;
    return NormalizedSlice(std::move(out), window, mean_hu, std_hu);
}

Image2<double> slice_to_image(const CtVolume& volume, int z) {
    if (z < 0 || z >= volume.hu.depth())
        throw ValidationError("slice index out of range: " + std::to_string(z));
    Image2<double> img(volume.hu.height(), volume.hu.width());
    const std::int16_t* s = volume.hu.slice(z);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(s[i]);
    return img;
}

Image2<double> denormalize(const NormalizedSlice& slice) {
    Image2<double> out(slice.values.height, slice.values.width);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = slice.values.data[i] * slice.norm_std_hu + slice.norm_mean_hu;
    return out;
}

LabelMask class_to_group(const LabelMask& mask, const ClassTaxonomy& taxonomy) {
    Grid3<std::int8_t> out(mask.labels.shape[0], mask.labels.shape[1], mask.labels.shape[2]);
    for (std::size_t i = 0; i < mask.labels.data.size(); ++i) {
        const int v = mask.labels.data[i];
        if (v < -1 || v > 10)
            throw ValidationError("unknown class id " + std::to_string(v) +
                                  " at voxel index " + std::to_string(i));
        out.data[i] = static_cast<std::int8_t>(taxonomy.group_of(v));
    }
    return LabelMask(std::move(out), mask.annotator_id);
}

HuStats hu_statistics(const std::vector<CtVolume>& volumes) {
    if (volumes.empty()) throw ValidationError("hu_statistics needs at least one volume");
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : volumes) {
        for (std::int16_t x : v.hu.data) sum += x;
        n += v.hu.size();
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& v : volumes)
        for (std::int16_t x : v.hu.data) {
            const double d = x - mean;
            ss += d * d;
        }
    return {mean, std::sqrt(ss / static_cast<double>(n))};
}

ScanSplit split_scans(const std::vector<std::string>& scan_ids,
                      const std::vector<std::string>& test_ids, double val_fraction,
                      std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw ValidationError("val_fraction must be in (0,1), got " + std::to_string(val_fraction));
    const std::set<std::string> all(scan_ids.begin(), scan_ids.end());
    const std::set<std::string> test_set(test_ids.begin(), test_ids.end());
    for (const auto& id : test_ids)
        if (all.find(id) == all.end())
            throw ValidationError("unknown test scan id: " + id);

    ScanSplit split;
    std::vector<std::string> remainder;
    for (const auto& id : scan_ids) {
        if (test_set.count(id))
            split.test.push_back(id);
        else
            remainder.push_back(id);
    }
    if (remainder.empty())
        throw ValidationError("no scans left after removing the test set");

    Rng rng(seed);
    rng.shuffle(remainder);
    auto n_val = static_cast<std::size_t>(
        std::lround(val_fraction * static_cast<double>(remainder.size())));
    n_val = std::max<std::size_t>(1, std::min(n_val, remainder.size()));
    split.val.assign(remainder.begin(), remainder.begin() + static_cast<std::ptrdiff_t>(n_val));
    split.train.assign(remainder.begin() + static_cast<std::ptrdiff_t>(n_val), remainder.end());
    return split;
}

} // namespace opaseg
