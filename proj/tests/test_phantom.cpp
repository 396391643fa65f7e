#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <vector>

#include "opaseg/errors.hpp"
#include "opaseg/metrics.hpp"
#include "opaseg/phantom.hpp"
#include "opaseg/rng.hpp"
#include "opaseg/soft_label.hpp"

using namespace opaseg;

namespace {

const std::vector<int> kOpacity{2, 3, 4};

// One lung, one well-resolved blob centered in it. The blob's in-plane
// radius of 8 px keeps boundary effects small relative to its area.
PhantomSpec centered_spec(int group = 2) {
    PhantomSpec spec;
    spec.shape = {9, 64, 64};
    spec.n_lung_ellipses = 1;
    OpacityBlob blob;
    blob.shape.center = {4.5, 32.0, 32.0};
    blob.shape.radii = {3.5, 8.0, 8.0};
    blob.group = group;
    spec.blobs.push_back(blob);
    spec.seed = 1234;
    return spec;
}

// Intersection-over-union of two boolean vectors; the reference oracle for
// every agreement-style check below.
double binary_iou(const std::vector<bool>& a, const std::vector<bool>& b) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] && b[i]) ++inter;
        if (a[i] || b[i]) ++uni;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<bool> opacity_indicator(const LabelMask& mask) {
    std::vector<bool> out(mask.labels.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const int v = mask.labels.data[i];
        out[i] = v >= 2 && v <= 4;
    }
    return out;
}

AnnotatorModel jitter_model(double px, std::uint64_t seed) {
    AnnotatorModel m = AnnotatorModel::identity(seed);
    m.boundary_jitter_px = px;
    return m;
}

} // namespace

TEST_SUITE("phantom geometry") {
    TEST_CASE("lung placement is deterministic in the spec") {
        PhantomSpec spec;
        spec.shape = {10, 40, 60};
        spec.n_lung_ellipses = 2;
        const std::vector<Ellipsoid> lungs = lung_ellipsoids(spec);
        REQUIRE(lungs.size() == 2);
        CHECK(lungs[0].center == std::array<double, 3>{5.0, 20.0, 15.0});
        CHECK(lungs[1].center == std::array<double, 3>{5.0, 20.0, 45.0});
        CHECK(lungs[0].radii[0] == doctest::Approx(4.5));
        CHECK(lungs[0].radii[1] == doctest::Approx(14.0));
        CHECK(lungs[0].radii[2] == doctest::Approx(12.0));
    }

    TEST_CASE("a blob-free phantom is pure lung and background") {
        PhantomSpec spec = centered_spec();
        spec.blobs.clear();
        const PhantomResult r = generate(spec);
        std::size_t lung = 0, background = 0;
        for (std::int8_t v : r.truth.labels.data) {
            REQUIRE((v == 0 || v == 1));
            if (v == 1) ++lung;
            else ++background;
        }
        CHECK(lung > 0);
        CHECK(background > 0);
        CHECK(percent_wal(r.truth, kOpacity) == 1.0);
    }

    TEST_CASE("blob cross-section area matches the ellipse") {
        const PhantomSpec spec = centered_spec();
        const PhantomResult r = generate(spec);
        // Central slice: radius 8 in both directions, slightly reduced by
        // the half-voxel offset from the ellipsoid center.
        std::size_t area = 0;
        const std::int8_t* slice = r.truth.labels.slice(4);
        for (std::size_t i = 0; i < r.truth.labels.slice_size(); ++i)
            if (slice[i] == 2) ++area;
        const double expected = 3.14159265358979 * 8.0 * 8.0;
        CHECK(static_cast<double>(area) > 0.9 * expected);
        CHECK(static_cast<double>(area) < 1.1 * expected);
    }

    TEST_CASE("intensities land in their configured bands") {
        const PhantomSpec spec = centered_spec();
        const PhantomResult r = generate(spec);
        double blob_sum = 0.0, back_sum = 0.0, lung_sum = 0.0;
        std::size_t blob_n = 0, back_n = 0, lung_n = 0;
        for (std::size_t i = 0; i < r.truth.labels.size(); ++i) {
            const double hu = r.volume.hu.data[i];
            CHECK(hu >= -1024.0);
            CHECK(hu <= 3071.0);
            switch (r.truth.labels.data[i]) {
                case 0: back_sum += hu; ++back_n; break;
                case 1: lung_sum += hu; ++lung_n; break;
                case 2: blob_sum += hu; ++blob_n; break;
                default: break;
            }
        }
        REQUIRE(blob_n > 0);
        CHECK(back_sum / static_cast<double>(back_n) == doctest::Approx(40.0).epsilon(0.1));
        CHECK(lung_sum / static_cast<double>(lung_n) ==
              doctest::Approx(-750.0).epsilon(0.05)); // mid of [-850, -650]
        CHECK(blob_sum / static_cast<double>(blob_n) == doctest::Approx(-450.0).epsilon(0.05));
        CHECK(r.volume.spacing_mm == std::array<double, 3>{5.0, 1.0, 1.0});
    }

    TEST_CASE("generation is bit-identical per seed and varies across seeds") {
        PhantomSpec spec = centered_spec();
        const PhantomResult a = generate(spec);
        const PhantomResult b = generate(spec);
        CHECK(a.volume.hu == b.volume.hu);
        CHECK(a.truth.labels == b.truth.labels);
        spec.seed = 4321;
        const PhantomResult c = generate(spec);
        CHECK_FALSE(a.volume.hu == c.volume.hu);
    }

    TEST_CASE("a blob reaching outside every lung is rejected") {
        PhantomSpec spec = centered_spec();
        spec.blobs[0].shape.center = {4.5, 5.0, 5.0}; // background corner
        spec.blobs[0].shape.radii = {1.0, 2.0, 2.0};
        CHECK_THROWS_AS(generate(spec), ValidationError);
    }

    TEST_CASE("spec validation rejects out-of-range settings") {
        PhantomSpec spec = centered_spec();
        spec.n_lung_ellipses = 0;
        CHECK_THROWS_AS(spec.validate(), ValidationError);
        spec = centered_spec();
        spec.n_lung_ellipses = 5;
        CHECK_THROWS_AS(spec.validate(), ValidationError);
        spec = centered_spec();
        spec.blobs[0].group = 5;
        CHECK_THROWS_AS(spec.validate(), ValidationError);
        spec = centered_spec();
        spec.blobs[0].shape.radii = {0.0, 2.0, 2.0};
        CHECK_THROWS_AS(spec.validate(), ValidationError);
        spec = centered_spec();
        spec.background_hu = 5000.0;
        CHECK_THROWS_AS(spec.validate(), ValidationError);
        spec = centered_spec();
        spec.lung_hu_range = {-650.0, -850.0}; // inverted
        CHECK_THROWS_AS(spec.validate(), ValidationError);
    }

    TEST_CASE("randomized specs always rasterize") {
        for (std::uint64_t seed = 0; seed < 6; ++seed) {
            const PhantomSpec spec = random_phantom_spec({8, 32, 32}, 2, seed);
            CHECK(spec.blobs.size() == 2);
            for (const OpacityBlob& b : spec.blobs) {
                CHECK(b.group >= 2);
                CHECK(b.group <= 4);
            }
            const PhantomResult r = generate(spec);
            std::size_t opa = 0;
            for (std::int8_t v : r.truth.labels.data)
                if (v >= 2) ++opa;
            CHECK(opa > 0);
        }
    }

    TEST_CASE("spec JSON round-trips") {
        const PhantomSpec spec = random_phantom_spec({8, 32, 32}, 3, 77);
        const PhantomSpec back = phantom_spec_from_json(phantom_spec_to_json(spec));
        CHECK(back.shape == spec.shape);
        CHECK(back.n_lung_ellipses == spec.n_lung_ellipses);
        CHECK(back.background_hu == spec.background_hu);
        CHECK(back.lung_hu_range == spec.lung_hu_range);
        CHECK(back.noise_std_hu == spec.noise_std_hu);
        CHECK(back.seed == spec.seed);
        REQUIRE(back.blobs.size() == spec.blobs.size());
        for (std::size_t i = 0; i < spec.blobs.size(); ++i) {
            CHECK(back.blobs[i].shape.center == spec.blobs[i].shape.center);
            CHECK(back.blobs[i].shape.radii == spec.blobs[i].shape.radii);
            CHECK(back.blobs[i].group == spec.blobs[i].group);
            CHECK(back.blobs[i].intensity_hu == spec.blobs[i].intensity_hu);
        }
        CHECK_THROWS_AS(phantom_spec_from_json("nope"), ValidationError);
    }
}

TEST_SUITE("annotator simulation") {
    TEST_CASE("the identity annotator reproduces the truth") {
        const PhantomResult r = generate(centered_spec());
        const LabelMask ann = simulate_annotator(r.truth, AnnotatorModel::identity(5));
        CHECK(ann.labels == r.truth.labels);
    }

    TEST_CASE("simulation is deterministic per model seed") {
        const PhantomResult r = generate(centered_spec());
        const AnnotatorModel m = jitter_model(2.0, 9);
        const LabelMask a = simulate_annotator(r.truth, m);
        const LabelMask b = simulate_annotator(r.truth, m);
        CHECK(a.labels == b.labels);
        const LabelMask c = simulate_annotator(r.truth, jitter_model(2.0, 10));
        CHECK_FALSE(a.labels == c.labels);
    }

    TEST_CASE("jitter moves boundaries but keeps most of the blob") {
        const PhantomResult r = generate(centered_spec());
        const LabelMask ann = simulate_annotator(r.truth, jitter_model(2.0, 3));
        const double iou = binary_iou(opacity_indicator(ann), opacity_indicator(r.truth));
        CHECK(iou < 1.0);
        CHECK(iou > 0.5);
        // Background and unlabelled voxels never move.
        for (std::size_t i = 0; i < ann.labels.size(); ++i) {
            if (r.truth.labels.data[i] == 0) CHECK(ann.labels.data[i] == 0);
            const int v = ann.labels.data[i];
            CHECK(v >= 0);
            CHECK(v <= 4);
        }
    }

    TEST_CASE("overlap decays as jitter grows") {
        const PhantomResult r = generate(centered_spec());
        const std::vector<bool> truth_ind = opacity_indicator(r.truth);
        const double levels[] = {0.0, 1.0, 2.0, 4.0};
        double mean_iou[4] = {};
        for (int li = 0; li < 4; ++li) {
            for (std::uint64_t seed = 0; seed < 20; ++seed) {
                const LabelMask ann =
                    simulate_annotator(r.truth, jitter_model(levels[li], 100 + seed));
                mean_iou[li] += binary_iou(opacity_indicator(ann), truth_ind);
            }
            mean_iou[li] /= 20.0;
        }
        CHECK(mean_iou[0] == 1.0);
        CHECK(mean_iou[0] > mean_iou[1]);
        CHECK(mean_iou[1] > mean_iou[2]);
        CHECK(mean_iou[2] > mean_iou[3]);
    }

    TEST_CASE("a certain confusion relabels whole regions") {
        const PhantomResult r = generate(centered_spec(2));
        AnnotatorModel m = AnnotatorModel::identity(11);
        m.class_confusion = {{{0.0, 1.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
        const LabelMask ann = simulate_annotator(r.truth, m);
        std::size_t relabelled = 0;
        for (std::size_t i = 0; i < ann.labels.size(); ++i) {
            if (r.truth.labels.data[i] == 2) {
                CHECK(ann.labels.data[i] == 3);
                ++relabelled;
            } else {
                CHECK(ann.labels.data[i] == r.truth.labels.data[i]);
            }
        }
        CHECK(relabelled > 0);
        // Opacity extent still agrees perfectly; the group does not.
        CHECK(binary_iou(opacity_indicator(ann), opacity_indicator(r.truth)) == 1.0);
        ConfusionAccumulator acc({2, 3});
        acc.accumulate(ann, r.truth);
        CHECK(iou(acc, 2).value() == 0.0);
        CHECK(iou(acc, 3).value() == 0.0);
    }

    TEST_CASE("certain omission erases every region into lung") {
        const PhantomResult r = generate(centered_spec());
        AnnotatorModel m = AnnotatorModel::identity(13);
        m.omission_rate = 1.0;
        const LabelMask ann = simulate_annotator(r.truth, m);
        for (std::size_t i = 0; i < ann.labels.size(); ++i) {
            const int t = r.truth.labels.data[i];
            CHECK(ann.labels.data[i] == (t >= 2 ? 1 : t));
        }
        CHECK(percent_wal(ann, kOpacity) == 1.0);
    }

    TEST_CASE("model validation rejects malformed settings") {
        AnnotatorModel m = AnnotatorModel::identity(1);
        m.omission_rate = 1.5;
        CHECK_THROWS_AS(m.validate(), ValidationError);
        m = AnnotatorModel::identity(1);
        m.boundary_jitter_px = -1.0;
        CHECK_THROWS_AS(m.validate(), ValidationError);
        m = AnnotatorModel::identity(1);
        m.class_confusion[0] = {0.5, 0.2, 0.2}; // row sums to 0.9
        CHECK_THROWS_AS(m.validate(), ValidationError);
        m = AnnotatorModel::identity(1);
        m.class_confusion[1] = {1.5, -0.5, 0.0}; // negative entry
        CHECK_THROWS_AS(m.validate(), ValidationError);
    }

    TEST_CASE("model JSON round-trips") {
        AnnotatorModel m = jitter_model(1.5, 42);
        m.omission_rate = 0.125;
        m.class_confusion = {{{0.8, 0.1, 0.1}, {0.2, 0.7, 0.1}, {0.0, 0.25, 0.75}}};
        const AnnotatorModel back = annotator_model_from_json(annotator_model_to_json(m));
        CHECK(back.boundary_jitter_px == m.boundary_jitter_px);
        CHECK(back.omission_rate == m.omission_rate);
        CHECK(back.seed == m.seed);
        CHECK(back.class_confusion == m.class_confusion);
    }

    TEST_CASE("averaging many noisy annotators tracks the truth") {
        const PhantomResult r = generate(centered_spec());
        std::vector<LabelMask> anns;
        double individual_sum = 0.0;
        const std::vector<bool> truth_ind = opacity_indicator(r.truth);
        for (int k = 0; k < 24; ++k) {
            anns.push_back(simulate_annotator(r.truth, jitter_model(2.0, 500 + k)));
            individual_sum += binary_iou(opacity_indicator(anns.back()), truth_ind);
        }
        const double individual_mean = individual_sum / 24.0;

        const LabelMask avg = average_annotation(anns, kOpacity);
        std::vector<bool> avg_ind(avg.labels.size());
        for (std::size_t i = 0; i < avg_ind.size(); ++i) avg_ind[i] = avg.labels.data[i] == 1;
        const double avg_iou = binary_iou(avg_ind, truth_ind);
        CHECK(avg_iou > individual_mean);
        CHECK(avg_iou > 0.8);
    }
}
