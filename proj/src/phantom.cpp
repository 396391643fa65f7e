#include "opaseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "json.hpp"

#include "opaseg/errors.hpp"
#include "opaseg/parallel.hpp"
#include "opaseg/rng.hpp"

using nlohmann::json;

namespace opaseg {

namespace {

constexpr double kHuFloor = -1024.0;
constexpr double kHuCeil = 3071.0;

bool is_opacity_group(int g) { return g >= 2 && g <= 4; }

} // namespace

void PhantomSpec::validate() const {
    for (int s : shape)
        if (s < 1) throw ValidationError("phantom shape components must be >= 1");
    if (n_lung_ellipses < 1 || n_lung_ellipses > 4)
        throw ValidationError("n_lung_ellipses must be in [1, 4]");
    if (background_hu < kHuFloor || background_hu > kHuCeil)
        throw ValidationError("background_hu outside the CT range");
    if (!(lung_hu_range[0] < lung_hu_range[1]))
        throw ValidationError("lung_hu_range must be (low, high) with low < high");
    if (lung_hu_range[0] < kHuFloor || lung_hu_range[1] > kHuCeil)
        throw ValidationError("lung_hu_range outside the CT range");
    if (noise_std_hu < 0.0) throw ValidationError("noise_std_hu must be >= 0");
    for (std::size_t i = 0; i < blobs.size(); ++i) {
        const auto& b = blobs[i];
        if (!is_opacity_group(b.group))
            throw ValidationError("blob " + std::to_string(i) + " group must be 2, 3 or 4");
        if (b.intensity_hu < kHuFloor || b.intensity_hu > kHuCeil)
            throw ValidationError("blob " + std::to_string(i) + " intensity outside CT range");
        for (double r : b.shape.radii)
            if (!(r > 0.0))
                throw ValidationError("blob " + std::to_string(i) + " radii must be > 0");
    }
}

void AnnotatorModel::validate() const {
    if (boundary_jitter_px < 0.0) throw ValidationError("boundary_jitter_px must be >= 0");
    if (omission_rate < 0.0 || omission_rate > 1.0)
        throw ValidationError("omission_rate must be in [0, 1]");
    for (int r = 0; r < 3; ++r) {
        double sum = 0.0;
        for (int c = 0; c < 3; ++c) {
            if (class_confusion[r][c] < 0.0)
                throw ValidationError("confusion probabilities must be >= 0");
            sum += class_confusion[r][c];
        }
        if (std::fabs(sum - 1.0) > 1e-9)
            throw ValidationError("confusion row " + std::to_string(r + 2) +
                                  " sums to " + std::to_string(sum) + ", expected 1");
    }
}

std::vector<Ellipsoid> lung_ellipsoids(const PhantomSpec& spec) {
    const double d = spec.shape[0], h = spec.shape[1], w = spec.shape[2];
    const int n = spec.n_lung_ellipses;
    std::vector<Ellipsoid> lungs;
    for (int i = 0; i < n; ++i) {
        Ellipsoid e;
        e.center = {d / 2.0, h / 2.0, (i + 0.5) * w / n};
        e.radii = {0.45 * d, 0.35 * h, std::min(0.2 * w, 0.4 * w / n)};
        lungs.push_back(e);
    }
    return lungs;
}

PhantomResult generate(const PhantomSpec& spec) {
    spec.validate();
    const auto lungs = lung_ellipsoids(spec);
    const int d = spec.shape[0], h = spec.shape[1], w = spec.shape[2];

    Grid3<std::int16_t> hu(d, h, w);
    Grid3<std::int8_t> labels(d, h, w);
    const Rng master(spec.seed);

    parallel::parallel_for(d, [&](std::int64_t z64) {
        const int z = static_cast<int>(z64);
        Rng rng = master.fork(static_cast<std::uint64_t>(z));
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double zc = z, yc = y, xc = x;
                bool in_lung = false;
                for (const auto& lung : lungs)
                    if (lung.contains(zc, yc, xc)) {
                        in_lung = true;
                        break;
                    }
                double base = spec.background_hu;
                int group = 0;
                if (in_lung) {
                    base = rng.uniform(spec.lung_hu_range[0], spec.lung_hu_range[1]);
                    group = 1;
                }
                for (std::size_t bi = 0; bi < spec.blobs.size(); ++bi) {
                    const auto& blob = spec.blobs[bi];
                    if (!blob.shape.contains(zc, yc, xc)) continue;
                    if (!in_lung)
                        throw ValidationError("blob " + std::to_string(bi) +
                                              " extends outside the lungs at voxel (" +
                                              std::to_string(z) + "," + std::to_string(y) +
                                              "," + std::to_string(x) + ")");
                    base = blob.intensity_hu;
                    group = blob.group; // later blobs override earlier ones
                }
                const double noisy = base + rng.normal(0.0, spec.noise_std_hu);
                const double clamped = std::clamp(noisy, kHuFloor, kHuCeil);
                hu.at(z, y, x) = static_cast<std::int16_t>(std::lround(clamped));
                labels.at(z, y, x) = static_cast<std::int8_t>(group);
            }
        }
    });

    PhantomResult out;
    out.volume = CtVolume(std::move(hu), {5.0, 1.0, 1.0});
    out.truth = LabelMask(std::move(labels), "truth");
    return out;
}

namespace {

// 6-connected components over opacity voxels, numbered in scan order of
// their first voxel so downstream randomness is reproducible.
std::vector<std::vector<std::size_t>> opacity_regions(const Grid3<std::int8_t>& labels) {
    const int d = labels.shape[0], h = labels.shape[1], w = labels.shape[2];
    const std::size_t n = labels.size();
    std::vector<std::int32_t> comp(n, -1);
    std::vector<std::vector<std::size_t>> regions;
    std::deque<std::size_t> queue;
    for (std::size_t start = 0; start < n; ++start) {
        if (comp[start] != -1 || !is_opacity_group(labels.data[start])) continue;
        const auto id = static_cast<std::int32_t>(regions.size());
        regions.emplace_back();
        comp[start] = id;
        queue.push_back(start);
        while (!queue.empty()) {
            const std::size_t at = queue.front();
            queue.pop_front();
            regions.back().push_back(at);
            const int z = static_cast<int>(at / (static_cast<std::size_t>(h) * w));
            const int y = static_cast<int>((at / w) % static_cast<std::size_t>(h));
            const int x = static_cast<int>(at % static_cast<std::size_t>(w));
            const int dz[6] = {-1, 1, 0, 0, 0, 0};
            const int dy[6] = {0, 0, -1, 1, 0, 0};
            const int dx[6] = {0, 0, 0, 0, -1, 1};
            for (int k = 0; k < 6; ++k) {
                const int nz = z + dz[k], ny = y + dy[k], nx = x + dx[k];
                if (nz < 0 || nz >= d || ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                const std::size_t ni =
                    (static_cast<std::size_t>(nz) * h + ny) * w + nx;
                if (comp[ni] != -1 || !is_opacity_group(labels.data[ni])) continue;
                comp[ni] = id;
                queue.push_back(ni);
            }
        }
    }
    return regions;
}

int region_majority_group(const Grid3<std::int8_t>& labels,
                          const std::vector<std::size_t>& region) {
    std::array<std::size_t, 3> count{0, 0, 0};
    for (std::size_t i : region) count[static_cast<std::size_t>(labels.data[i] - 2)]++;
    int best = 2;
    for (int g = 3; g <= 4; ++g)
        if (count[static_cast<std::size_t>(g - 2)] > count[static_cast<std::size_t>(best - 2)])
            best = g;
    return best;
}

// Smooth per-slice displacement field: unit normals on a coarse stride-8
// grid, bilinear upsampling, then RMS-normalized to the jitter amplitude.
void smooth_field(Rng& rng, int h, int w, double jitter, std::vector<double>& dy,
                  std::vector<double>& dx) {
    constexpr int kStride = 8;
    const int gh = (h - 1) / kStride + 2;
    const int gw = (w - 1) / kStride + 2;
    std::vector<double> ny(static_cast<std::size_t>(gh) * gw);
    std::vector<double> nx(static_cast<std::size_t>(gh) * gw);
    for (std::size_t i = 0; i < ny.size(); ++i) {
        ny[i] = rng.normal();
        nx[i] = rng.normal();
    }
    dy.resize(static_cast<std::size_t>(h) * w);
    dx.resize(dy.size());
    double sq_sum = 0.0;
    for (int y = 0; y < h; ++y) {
        const int gy = y / kStride;
        const double fy = static_cast<double>(y % kStride) / kStride;
        for (int x = 0; x < w; ++x) {
            const int gx = x / kStride;
            const double fx = static_cast<double>(x % kStride) / kStride;
            const std::size_t i00 = static_cast<std::size_t>(gy) * gw + gx;
            const std::size_t i01 = i00 + 1;
            const std::size_t i10 = i00 + static_cast<std::size_t>(gw);
            const std::size_t i11 = i10 + 1;
            const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
            const double w10 = fy * (1 - fx), w11 = fy * fx;
            const std::size_t at = static_cast<std::size_t>(y) * w + x;
            dy[at] = w00 * ny[i00] + w01 * ny[i01] + w10 * ny[i10] + w11 * ny[i11];
            dx[at] = w00 * nx[i00] + w01 * nx[i01] + w10 * nx[i10] + w11 * nx[i11];
            sq_sum += dy[at] * dy[at] + dx[at] * dx[at];
        }
    }
    const double rms = std::sqrt(sq_sum / static_cast<double>(dy.size()));
    const double scale = rms > 0.0 ? jitter / rms : 0.0;
    for (std::size_t i = 0; i < dy.size(); ++i) {
        dy[i] *= scale;
        dx[i] *= scale;
    }
}

} // namespace

LabelMask simulate_annotator(const LabelMask& truth, const AnnotatorModel& model) {
    model.validate();
    for (std::int8_t v : truth.labels.data)
        if (v > 4)
            throw ValidationError("simulate_annotator expects group labels (0..4), found " +
                                  std::to_string(static_cast<int>(v)));

    const Rng master(model.seed);
    Rng region_rng = master.fork(0);

    // Region-level identity decisions: omission, then group confusion.
    const auto regions = opacity_regions(truth.labels);
    Grid3<std::int8_t> relabeled(truth.labels);
    for (const auto& region : regions) {
        const bool omit = region_rng.uniform() < model.omission_rate;
        const int group = region_majority_group(truth.labels, region);
        const double u = region_rng.uniform();
        int new_group = 1; // omitted regions read as aerated lung
        if (!omit) {
            double cum = 0.0;
            new_group = 4;
            for (int c = 0; c < 3; ++c) {
                cum += model.class_confusion[static_cast<std::size_t>(group - 2)]
                                            [static_cast<std::size_t>(c)];
                if (u < cum) {
                    new_group = 2 + c;
                    break;
                }
            }
        }
        for (std::size_t i : region)
            relabeled.data[i] = static_cast<std::int8_t>(new_group);
    }

    if (model.boundary_jitter_px <= 0.0)
        return LabelMask(std::move(relabeled), truth.annotator_id);

    // Smooth boundary displacement, per slice. The annotator's view of pixel
    // p is the relabeled truth at p + d(p); pixels outside the lung region
    // and samples that escape it stay lung/background, so the lung outline
    // never moves — only opacity borders do.
    const int d = truth.labels.shape[0], h = truth.labels.shape[1], w = truth.labels.shape[2];
    Grid3<std::int8_t> out(relabeled);
    parallel::parallel_for(d, [&](std::int64_t z64) {
        const int z = static_cast<int>(z64);
        Rng rng = master.fork(1 + static_cast<std::uint64_t>(z));
        std::vector<double> dy, dx;
        smooth_field(rng, h, w, model.boundary_jitter_px, dy, dx);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::int8_t here = relabeled.at(z, y, x);
                if (here < 1) continue; // background / unlabelled untouched
                const std::size_t at = static_cast<std::size_t>(y) * w + x;
                const int sy = std::clamp(
                    static_cast<int>(std::lround(y + dy[at])), 0, h - 1);
                const int sx = std::clamp(
                    static_cast<int>(std::lround(x + dx[at])), 0, w - 1);
                const std::int8_t sampled = relabeled.at(z, sy, sx);
                out.at(z, y, x) =
                    is_opacity_group(sampled) ? sampled : static_cast<std::int8_t>(1);
            }
        }
    });
    return LabelMask(std::move(out), truth.annotator_id);
}

PhantomSpec random_phantom_spec(std::array<int, 3> shape, int n_blobs, std::uint64_t seed) {
    if (n_blobs < 0) throw ValidationError("n_blobs must be >= 0");
    PhantomSpec spec;
    spec.shape = shape;
    spec.seed = seed;
    const auto lungs = lung_ellipsoids(spec);
    Rng rng = Rng(seed).fork(1);
    for (int i = 0; i < n_blobs; ++i) {
        const auto& lung = lungs[rng.index(lungs.size())];
        const double ratio = rng.uniform(0.18, 0.35);
        const double t_max = 0.95 - ratio;
        double tz, ty, tx;
        do {
            tz = rng.uniform(-1.0, 1.0);
            ty = rng.uniform(-1.0, 1.0);
            tx = rng.uniform(-1.0, 1.0);
        } while (tz * tz + ty * ty + tx * tx > 1.0);
        OpacityBlob blob;
        blob.shape.center = {lung.center[0] + tz * t_max * lung.radii[0],
                             lung.center[1] + ty * t_max * lung.radii[1],
                             lung.center[2] + tx * t_max * lung.radii[2]};
        blob.shape.radii = {std::max(1.0, ratio * lung.radii[0]), ratio * lung.radii[1],
                            ratio * lung.radii[2]};
        blob.group = 2 + static_cast<int>(rng.index(3));
        if (blob.group == 2)
            blob.intensity_hu = rng.uniform(-500.0, -400.0);
        else if (blob.group == 3)
            blob.intensity_hu = rng.uniform(-380.0, -280.0);
        else
            blob.intensity_hu = rng.uniform(20.0, 90.0);
        spec.blobs.push_back(blob);
    }
    return spec;
}

namespace {

json ellipsoid_to_json(const Ellipsoid& e) {
    return json{{"center", e.center}, {"radii", e.radii}};
}

Ellipsoid ellipsoid_from_json(const json& j) {
    Ellipsoid e;
    e.center = j.at("center").get<std::array<double, 3>>();
    e.radii = j.at("radii").get<std::array<double, 3>>();
    return e;
}

} // namespace

std::string phantom_spec_to_json(const PhantomSpec& spec) {
    json j;
    j["shape"] = spec.shape;
    j["n_lung_ellipses"] = spec.n_lung_ellipses;
    j["blobs"] = json::array();
    for (const auto& b : spec.blobs) {
        json jb = ellipsoid_to_json(b.shape);
        jb["group"] = b.group;
        jb["intensity_hu"] = b.intensity_hu;
        j["blobs"].push_back(jb);
    }
    j["background_hu"] = spec.background_hu;
    j["lung_hu_range"] = spec.lung_hu_range;
    j["noise_std_hu"] = spec.noise_std_hu;
    j["seed"] = spec.seed;
    return j.dump(2) + "\n";
}

PhantomSpec phantom_spec_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError("phantom spec is not valid JSON: " + std::string(e.what()));
    }
    PhantomSpec spec;
    try {
        if (j.contains("shape")) spec.shape = j.at("shape").get<std::array<int, 3>>();
        if (j.contains("n_lung_ellipses"))
            spec.n_lung_ellipses = j.at("n_lung_ellipses").get<int>();
        if (j.contains("blobs")) {
            for (const auto& jb : j.at("blobs")) {
                OpacityBlob b;
                b.shape = ellipsoid_from_json(jb);
                b.group = jb.at("group").get<int>();
                b.intensity_hu = jb.at("intensity_hu").get<double>();
                spec.blobs.push_back(b);
            }
        }
        if (j.contains("background_hu"))
            spec.background_hu = j.at("background_hu").get<double>();
        if (j.contains("lung_hu_range"))
            spec.lung_hu_range = j.at("lung_hu_range").get<std::array<double, 2>>();
        if (j.contains("noise_std_hu")) spec.noise_std_hu = j.at("noise_std_hu").get<double>();
        if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ValidationError("phantom spec field has the wrong type: " +
                              std::string(e.what()));
    }
    spec.validate();
    return spec;
}

std::string annotator_model_to_json(const AnnotatorModel& model) {
    json j;
    j["boundary_jitter_px"] = model.boundary_jitter_px;
    j["class_confusion"] = model.class_confusion;
    j["omission_rate"] = model.omission_rate;
    j["seed"] = model.seed;
    return j.dump(2) + "\n";
}

AnnotatorModel annotator_model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError("annotator model is not valid JSON: " + std::string(e.what()));
    }
    AnnotatorModel m;
    try {
        if (j.contains("boundary_jitter_px"))
            m.boundary_jitter_px = j.at("boundary_jitter_px").get<double>();
        if (j.contains("class_confusion"))
            m.class_confusion =
                j.at("class_confusion").get<std::array<std::array<double, 3>, 3>>();
        if (j.contains("omission_rate")) m.omission_rate = j.at("omission_rate").get<double>();
        if (j.contains("seed")) m.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ValidationError("annotator model field has the wrong type: " +
                              std::string(e.what()));
    }
    m.validate();
    return m;
}

} // namespace opaseg
