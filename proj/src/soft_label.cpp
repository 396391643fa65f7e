#include "opaseg/soft_label.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "json.hpp"
#include "opaseg/parallel.hpp"
#include "opaseg/volume_io.hpp"

namespace opaseg {

namespace {

void check_same_geometry(const std::vector<LabelMask>& masks) {
    for (std::size_t i = 1; i < masks.size(); ++i)
        if (!masks[i].labels.same_shape(masks[0].labels))
            throw ValidationError("annotator masks have mismatched shapes (mask 0 vs mask " +
                                  std::to_string(i) + ")");
}

} // namespace

SoftLabel fuse(const std::vector<LabelMask>& masks, const std::vector<int>& classes) {
    if (masks.empty()) throw ValidationError("fuse needs at least one mask");
    if (classes.empty()) throw ValidationError("fuse needs a non-empty class list");
    check_same_geometry(masks);

    SoftLabel soft;
    soft.shape = masks[0].labels.shape;
    soft.classes = classes;
    soft.n_annotators = static_cast<int>(masks.size());

    const int n_classes = static_cast<int>(classes.size());
    // class value -> plane index, -1 for values not covered
    std::array<int, 12> plane_of{};
    plane_of.fill(-1);
    for (int ci = 0; ci < n_classes; ++ci) {
        const int v = classes[ci];
        if (v < 0 || v > 10)
            throw ValidationError("fuse class list entries must be in [0,10], got " +
                                  std::to_string(v));
        plane_of[static_cast<std::size_t>(v)] = ci;
    }

    const std::size_t n_pixels = masks[0].labels.size();
    soft.mean.assign(n_pixels * static_cast<std::size_t>(n_classes), 0.0);
    soft.stddev.assign(n_pixels * static_cast<std::size_t>(n_classes), 0.0);
    soft.support.assign(n_pixels, 0);

    const std::size_t plane = soft.plane_size();
    const int height = soft.shape[1];
    const int width = soft.shape[2];

    // Integer per-class counts make the moments exact and trivially
    // permutation-invariant in annotator order.
    parallel::parallel_for_ranges(soft.shape[0], [&](std::int64_t zb, std::int64_t ze) {
        std::vector<std::uint32_t> counts(static_cast<std::size_t>(n_classes));
        for (std::int64_t z = zb; z < ze; ++z) {
            for (int y = 0; y < height; ++y) {
                for (int x = 0; x < width; ++x) {
                    const std::size_t pix =
                        (static_cast<std::size_t>(z) * height + y) * width + x;
                    std::fill(counts.begin(), counts.end(), 0u);
                    std::uint32_t n = 0;
                    for (const auto& m : masks) {
                        const int v = m.labels.data[pix];
                        if (v == kUnlabelled) continue;
                        const int ci = (v >= 0 && v <= 10) ? plane_of[static_cast<std::size_t>(v)] : -1;
                        if (ci < 0)
                            throw ValidationError("mask value " + std::to_string(v) +
                                                  " is not in the fuse class list");
                        ++counts[static_cast<std::size_t>(ci)];
                        ++n;
                    }
                    soft.support[pix] = static_cast<std::uint16_t>(n);
                    if (n == 0) continue;
                    const std::size_t base =
                        static_cast<std::size_t>(z) * n_classes * plane +
                        static_cast<std::size_t>(y) * width + x;
                    for (int ci = 0; ci < n_classes; ++ci) {
                        const double mu =
                            static_cast<double>(counts[static_cast<std::size_t>(ci)]) /
                            static_cast<double>(n);
                        // second moment of a 0/1 sample equals its mean
                        const double var = std::max(0.0, mu - mu * mu);
                        soft.mean[base + static_cast<std::size_t>(ci) * plane] = mu;
                        soft.stddev[base + static_cast<std::size_t>(ci) * plane] = std::sqrt(var);
                    }
                }
            }
        }
    });
    return soft;
}

LabelMask average_annotation(const std::vector<LabelMask>& masks,
                             const std::vector<int>& opacity_groups) {
    if (masks.size() < 2) throw ValidationError("average_annotation needs at least 2 masks");
    check_same_geometry(masks);

    std::array<bool, 12> is_opacity{};
    for (int g : opacity_groups)
        if (g >= 0 && g <= 10) is_opacity[static_cast<std::size_t>(g)] = true;

    Grid3<std::int8_t> out(masks[0].labels.shape[0], masks[0].labels.shape[1],
                           masks[0].labels.shape[2]);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int n = 0;
        int op = 0;
        for (const auto& m : masks) {
            const int v = m.labels.data[i];
            if (v == kUnlabelled) continue;
            ++n;
            if (v >= 0 && is_opacity[static_cast<std::size_t>(v)]) ++op;
        }
        if (n == 0)
            out.data[i] = kUnlabelled; // no annotator saw this pixel
        else
            out.data[i] = static_cast<std::int8_t>(2 * op >= n ? 1 : 0);
    }
    return LabelMask(std::move(out), "average");
}

GaussianTarget gaussian_target(const SoftLabel& soft, double epsilon) {
    if (!(epsilon > 0.0))
        throw ValidationError("gaussian_target epsilon must be > 0, got " +
                              std::to_string(epsilon));
    GaussianTarget out;
    out.target = soft.mean;
    const std::size_t n_pixels = soft.support.size();
    const std::size_t plane = soft.plane_size();
    const auto n_classes = soft.classes.size();
    out.weight.assign(n_pixels, 0.0);

    double sum = 0.0;
    std::size_t supported = 0;
    for (int s = 0; s < soft.shape[0]; ++s) {
        const std::size_t slice_base = static_cast<std::size_t>(s) * n_classes * plane;
        for (std::size_t p = 0; p < plane; ++p) {
            const std::size_t pix = static_cast<std::size_t>(s) * plane + p;
            if (soft.support[pix] == 0) continue;
            double mean_var = 0.0;
            for (std::size_t c = 0; c < n_classes; ++c) {
                const double sd = soft.stddev[slice_base + c * plane + p];
                mean_var += sd * sd;
            }
            mean_var /= static_cast<double>(n_classes);
            const double w = 1.0 / (mean_var + epsilon);
            out.weight[pix] = w;
            sum += w;
            ++supported;
        }
    }
    if (supported > 0 && sum > 0.0) {
        const double scale = static_cast<double>(supported) / sum;
        for (double& w : out.weight) w *= scale;
    }
    return out;
}

namespace {

void append_f32(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    buf.push_back(static_cast<char>(bits & 0xff));
    buf.push_back(static_cast<char>((bits >> 8) & 0xff));
    buf.push_back(static_cast<char>((bits >> 16) & 0xff));
    buf.push_back(static_cast<char>((bits >> 24) & 0xff));
}

float read_f32(const std::string& buf, std::size_t offset) {
    std::uint32_t bits = static_cast<std::uint8_t>(buf[offset]) |
                         (static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[offset + 1])) << 8) |
                         (static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[offset + 2])) << 16) |
                         (static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[offset + 3])) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

} // namespace

void save_soft_label(const SoftLabel& soft, const std::filesystem::path& path) {
    const std::size_t plane = soft.plane_size();
    const std::size_t cplanes = soft.classes.size() * plane;
    std::string payload;
    payload.reserve(soft.mean.size() * 8);
    for (int s = 0; s < soft.shape[0]; ++s) {
        const std::size_t base = static_cast<std::size_t>(s) * cplanes;
        for (std::size_t i = 0; i < cplanes; ++i)
            append_f32(payload, static_cast<float>(soft.mean[base + i]));
        for (std::size_t i = 0; i < cplanes; ++i)
            append_f32(payload, static_cast<float>(soft.stddev[base + i]));
    }
    write_file_atomic(path, payload);

    nlohmann::json j;
    j["classes"] = soft.classes;
    j["n_annotators"] = soft.n_annotators;
    j["shape"] = soft.shape;
    write_file_atomic(path.string() + ".json", j.dump(2) + "\n");
}

SoftLabel load_soft_label(const std::filesystem::path& path) {
    const std::filesystem::path side = path.string() + ".json";
    if (!std::filesystem::exists(side))
        throw IoError("missing sidecar header: " + side.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(side));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("invalid sidecar JSON " + side.string() + ": " + e.what());
    }
    for (const char* key : {"classes", "n_annotators", "shape"})
        if (!j.contains(key))
            throw IoError("sidecar " + side.string() + " missing key \"" + key + "\"");

    SoftLabel soft;
    soft.classes = j["classes"].get<std::vector<int>>();
    soft.n_annotators = j["n_annotators"].get<int>();
    const auto shape = j["shape"].get<std::vector<int>>();
    if (shape.size() != 3 || soft.classes.empty())
        throw IoError("sidecar " + side.string() + ": bad shape or classes");
    soft.shape = {shape[0], shape[1], shape[2]};

    const std::string payload = read_file(path);
    const std::size_t plane = soft.plane_size();
    const std::size_t cplanes = soft.classes.size() * plane;
    const std::size_t expected = static_cast<std::size_t>(soft.shape[0]) * cplanes * 2 * 4;
    if (payload.size() != expected)
        throw IoError("soft label " + path.string() + ": payload is " +
                      std::to_string(payload.size()) + " bytes, header implies " +
                      std::to_string(expected));

    soft.mean.resize(static_cast<std::size_t>(soft.shape[0]) * cplanes);
    soft.stddev.resize(soft.mean.size());
    soft.support.assign(static_cast<std::size_t>(soft.shape[0]) * plane, 0);
    std::size_t off = 0;
    for (int s = 0; s < soft.shape[0]; ++s) {
        const std::size_t base = static_cast<std::size_t>(s) * cplanes;
        for (std::size_t i = 0; i < cplanes; ++i, off += 4)
            soft.mean[base + i] = read_f32(payload, off);
        for (std::size_t i = 0; i < cplanes; ++i, off += 4)
            soft.stddev[base + i] = read_f32(payload, off);
    }
    // The file stores moments only; per-pixel counts are recovered as
    // "all annotators" wherever any probability mass is present.
    for (int s = 0; s < soft.shape[0]; ++s)
        for (std::size_t p = 0; p < plane; ++p) {
            double mass = 0.0;
            for (std::size_t c = 0; c < soft.classes.size(); ++c)
                mass += soft.mean[(static_cast<std::size_t>(s) * soft.classes.size() + c) * plane + p];
            if (mass > 0.5)
                soft.support[static_cast<std::size_t>(s) * plane + p] =
                    static_cast<std::uint16_t>(soft.n_annotators);
        }
    return soft;
}

} // namespace opaseg
