#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <optional>
#include <vector>

#include "opaseg/metrics.hpp"
#include "opaseg/rng.hpp"
#include "opaseg/soft_label.hpp"

using namespace opaseg;

namespace {

// Independent oracle: walk every pixel and count. Shares no code with
// the accumulator implementation.
struct BruteCounts {
    long long tp = 0, fp = 0, fn = 0, tn = 0;
};

BruteCounts brute_force_binary(const std::vector<int>& pred, const std::vector<int>& gt) {
    BruteCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (gt[i] == -1) continue;
        const bool p = pred[i] == 1;
        const bool g = gt[i] == 1;
        if (p && g) ++c.tp;
        else if (p && !g) ++c.fp;
        else if (!p && g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

std::optional<double> brute_force_iou(const BruteCounts& c) {
    const long long denom = c.tp + c.fp + c.fn;
    if (denom == 0) return std::nullopt;
    return static_cast<double>(c.tp) / static_cast<double>(denom);
}

std::vector<std::int8_t> to_i8(const std::vector<int>& v) {
    std::vector<std::int8_t> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<std::int8_t>(v[i]);
    return out;
}

LabelMask mask_from(const std::vector<int>& values, int h, int w,
                    std::string annotator = "") {
    Grid3<std::int8_t> g(1, h, w);
    for (std::size_t i = 0; i < values.size(); ++i) g.data[i] = static_cast<std::int8_t>(values[i]);
    return LabelMask(std::move(g), std::move(annotator));
}

void accumulate_pairs(ConfusionAccumulator& acc, const std::vector<int>& pred,
                      const std::vector<int>& gt) {
    const auto p = to_i8(pred);
    const auto g = to_i8(gt);
    acc.accumulate_slice(p.data(), g.data(), p.size());
}

} // namespace

TEST_CASE("binary iou matches a hand example") {
    // pred: 1 1 0 0   gt: 1 0 1 0  -> tp=1 fp=1 fn=1 -> iou = 1/3
    auto acc = make_binary_accumulator();
    accumulate_pairs(acc, {1, 1, 0, 0}, {1, 0, 1, 0});
    const auto v = iou(acc, 1);
    REQUIRE(v.has_value());
    CHECK(*v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(acc.counts(1).tp == 1);
    CHECK(acc.counts(1).fp == 1);
    CHECK(acc.counts(1).fn == 1);
    CHECK(acc.counts(1).tn == 1);
}

TEST_CASE("iou is undefined when a class never appears") {
    auto acc = make_binary_accumulator();
    accumulate_pairs(acc, {0, 0}, {0, 0});
    CHECK_FALSE(iou(acc, 1).has_value());
    CHECK(iou(acc, 0).has_value());
    CHECK(*iou(acc, 0) == 1.0);
}

TEST_CASE("unlabelled ground truth never enters the counts") {
    auto acc = make_binary_accumulator();
    accumulate_pairs(acc, {1, 0}, {-1, -1});
    CHECK(acc.evaluated_pixels() == 0);
    CHECK_FALSE(iou(acc, 1).has_value());
    CHECK_FALSE(iou(acc, 0).has_value());
}

TEST_CASE("accumulator matches brute force on random masks") {
    Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        const int h = 1 + static_cast<int>(rng.index(32));
        const int w = 1 + static_cast<int>(rng.index(32));
        std::vector<int> pred(static_cast<std::size_t>(h * w));
        std::vector<int> gt(pred.size());
        for (auto& v : pred) v = static_cast<int>(rng.index(2));
        for (auto& v : gt) v = static_cast<int>(rng.index(3)) - 1; // -1, 0, 1
        auto acc = make_binary_accumulator();
        accumulate_pairs(acc, pred, gt);
        const auto truth = brute_force_iou(brute_force_binary(pred, gt));
        const auto got = iou(acc, 1);
        REQUIRE(truth.has_value() == got.has_value());
        if (truth) CHECK(*got == *truth); // integer-count ratio, exact
    }
}

TEST_CASE("merge equals accumulating everything in one pass") {
    Rng rng(7);
    std::vector<int> pred(500), gt(500);
    for (auto& v : pred) v = static_cast<int>(rng.index(2));
    for (auto& v : gt) v = static_cast<int>(rng.index(3)) - 1;
    auto whole = make_binary_accumulator();
    auto left = make_binary_accumulator();
    auto right = make_binary_accumulator();
    accumulate_pairs(whole, pred, gt);
    accumulate_pairs(left, {pred.begin(), pred.begin() + 250}, {gt.begin(), gt.begin() + 250});
    accumulate_pairs(right, {pred.begin() + 250, pred.end()}, {gt.begin() + 250, gt.end()});
    left.merge(right);
    CHECK(iou(left, 1) == iou(whole, 1));
    CHECK(iou(left, 0) == iou(whole, 0));
    CHECK(left.evaluated_pixels() == whole.evaluated_pixels());

    ConfusionAccumulator other({0, 1, 2});
    CHECK_THROWS_AS(left.merge(other), ValidationError);
}

TEST_CASE("mask accumulate requires matching shapes") {
    auto acc = make_binary_accumulator();
    const auto a = mask_from({1, 0}, 1, 2);
    const auto b = mask_from({1, 0, 1}, 1, 3);
    CHECK_THROWS_AS(acc.accumulate(a, b), ValidationError);
}

TEST_CASE("opacity decision integrates probability mass") {
    // 5-group probabilities with opacity groups {2,3,4}
    const std::vector<int> groups{0, 1, 2, 3, 4};
    const std::vector<int> opacity{2, 3, 4};
    // plane layout: [group][pixel], 2 pixels
    // pixel 0 opacity mass 0.30+0.15+0.10 = 0.55 -> opaque
    // pixel 1 opacity mass 0.20+0.15+0.10 = 0.45 -> not
    const std::vector<double> probs{
        0.25, 0.30, // group 0
        0.20, 0.25, // group 1
        0.30, 0.20, // group 2
        0.15, 0.15, // group 3
        0.10, 0.10, // group 4
    };
    auto acc = make_binary_accumulator();
    const std::vector<std::int8_t> gt{2, 2}; // both actually opaque
    accumulate_opacity_probs(acc, probs.data(), groups, gt.data(), 2, opacity);
    const auto v = iou(acc, 1);
    REQUIRE(v.has_value());
    CHECK(*v == doctest::Approx(0.5).epsilon(1e-15)); // tp=1, fn=1
}

TEST_CASE("opacity decision rejects unnormalized probabilities") {
    const std::vector<int> groups{0, 1, 2, 3, 4};
    const std::vector<double> probs{0.5, 0.4, 0.3, 0.2, 0.1}; // sums to 1.5
    auto acc = make_binary_accumulator();
    const std::vector<std::int8_t> gt{1};
    CHECK_THROWS_AS(
        accumulate_opacity_probs(acc, probs.data(), groups, gt.data(), 1, {2, 3, 4}),
        ValidationError);
}

TEST_CASE("opacity iou from masks matches brute force") {
    Rng rng(211);
    const std::vector<int> opacity{2, 3, 4};
    for (int trial = 0; trial < 50; ++trial) {
        const int h = 1 + static_cast<int>(rng.index(16));
        const int w = 1 + static_cast<int>(rng.index(16));
        std::vector<int> pred(static_cast<std::size_t>(h * w));
        std::vector<int> gt(pred.size());
        for (auto& v : pred) v = static_cast<int>(rng.index(5));
        for (auto& v : gt) v = static_cast<int>(rng.index(6)) - 1;
        std::vector<int> pb(pred.size()), gb(gt.size());
        for (std::size_t i = 0; i < pred.size(); ++i) {
            pb[i] = (pred[i] >= 2) ? 1 : 0;
            gb[i] = gt[i] == -1 ? -1 : (gt[i] >= 2 ? 1 : 0);
        }
        const auto truth = brute_force_iou(brute_force_binary(pb, gb));
        const auto got = opacity_iou(mask_from(pred, h, w), mask_from(gt, h, w), opacity);
        REQUIRE(truth.has_value() == got.has_value());
        if (truth) CHECK(*got == *truth);
    }
}

TEST_CASE("relative volume follows the confusion identity") {
    // tp=4 fp=2 fn=1 -> rv = (4+2)/(4+1) = 1.2
    auto acc = make_binary_accumulator();
    accumulate_pairs(acc, {1, 1, 1, 1, 1, 1, 0, 0}, {1, 1, 1, 1, 0, 0, 1, 0});
    CHECK(relative_volume(acc) == doctest::Approx(1.2).epsilon(1e-15));
}

TEST_CASE("relative volume of one means matched totals not perfection") {
    // tp=3 fp=1 fn=1 -> rv = 4/4 = 1 even though iou < 1
    auto acc = make_binary_accumulator();
    accumulate_pairs(acc, {1, 1, 1, 1, 0}, {1, 1, 1, 0, 1});
    CHECK(relative_volume(acc) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(*iou(acc, 1) < 1.0);
}

TEST_CASE("relative volume throws without positive ground truth") {
    auto acc = make_binary_accumulator();
    accumulate_pairs(acc, {0, 1}, {0, 0});
    CHECK_THROWS_AS(relative_volume(acc), ValidationError);
}

TEST_CASE("percent wal is the aerated fraction of involved lung") {
    // 3 lung pixels (group 1), 1 opacity pixel (group 3), rest ignored
    const auto m = mask_from({1, 1, 1, 3, 0, -1}, 2, 3);
    CHECK(percent_wal(m, {2, 3, 4}) == doctest::Approx(0.75).epsilon(1e-15));

    // no opacity at all -> all lung is aerated
    const auto healthy = mask_from({1, 1, 0, 0}, 2, 2);
    CHECK(percent_wal(healthy, {2, 3, 4}) == doctest::Approx(1.0).epsilon(1e-15));

    // neither lung nor opacity -> undefined
    const auto empty = mask_from({0, 0, -1, -1}, 2, 2);
    CHECK_THROWS_AS(percent_wal(empty, {2, 3, 4}), ValidationError);
}

TEST_CASE("percent wal complements the opacity fraction exactly") {
    Rng rng(303);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> vals(64);
        long long lung = 0, opacity = 0;
        for (auto& v : vals) {
            v = static_cast<int>(rng.index(6)) - 1;
            if (v == 1) ++lung;
            if (v >= 2) ++opacity;
        }
        if (lung + opacity == 0) continue;
        const auto m = mask_from(vals, 8, 8);
        const double wal = percent_wal(m, {2, 3, 4});
        const double opaque_frac =
            static_cast<double>(opacity) / static_cast<double>(lung + opacity);
        CHECK(wal + opaque_frac == 1.0); // exact: same integer denominator
    }
}

TEST_CASE("mean iou averages defined classes only") {
    ConfusionAccumulator acc({0, 1});
    accumulate_pairs(acc, {0}, {0}); // class 0: tp=1 -> iou 1; class 1 undefined
    const auto m = mean_iou(acc);
    REQUIRE(m.has_value());
    CHECK(*m == doctest::Approx(1.0).epsilon(1e-15));

    ConfusionAccumulator empty({0, 1});
    CHECK_FALSE(mean_iou(empty).has_value());
}

TEST_CASE("agreement matrix is symmetric with unit diagonal") {
    Rng rng(77);
    std::vector<LabelMask> masks;
    for (int i = 0; i < 4; ++i) {
        Grid3<std::int8_t> g(1, 8, 8);
        for (auto& v : g.data) v = static_cast<std::int8_t>(rng.uniform_int(-1, 4));
        masks.emplace_back(std::move(g), "ann" + std::to_string(i));
    }
    const auto mat = agreement(masks, {2, 3, 4});
    REQUIRE(mat.annotator_ids.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(mat.pair(i, i) == doctest::Approx(1.0).epsilon(1e-15));
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(mat.pair(i, j) == doctest::Approx(mat.pair(j, i)).epsilon(1e-15));
    }
}

TEST_CASE("pairwise agreement restricts to mutually labelled pixels") {
    // ann0 labels pixels {0,1}, ann1 labels {1,2}; only pixel 1 is shared.
    // Both call pixel 1 opaque -> agreement 1.0 despite disagreeing elsewhere.
    std::vector<LabelMask> masks;
    masks.push_back(mask_from({2, 3, -1}, 1, 3, "a"));
    masks.push_back(mask_from({-1, 4, 0}, 1, 3, "b"));
    const auto mat = agreement(masks, {2, 3, 4});
    CHECK(mat.pair(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("agreement with no shared opacity defaults to one") {
    // Both annotators label pixels but never opacity -> empty union -> 1.0.
    std::vector<LabelMask> masks;
    masks.push_back(mask_from({0, 1}, 1, 2, "a"));
    masks.push_back(mask_from({1, 0}, 1, 2, "b"));
    const auto mat = agreement(masks, {2, 3, 4});
    CHECK(mat.pair(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("vs average beats the worst pair for a cohesive panel") {
    // Three annotators agree on a core region, each adds a private fringe.
    // The majority vote keeps the core, so each annotator matches the
    // average at least as well as the most divergent colleague.
    Rng rng(5150);
    const int h = 16, w = 16;
    Grid3<std::int8_t> base(1, h, w, 0);
    for (int y = 4; y < 12; ++y)
        for (int x = 4; x < 12; ++x) base.at(0, y, x) = 2; // core opacity
    std::vector<LabelMask> masks;
    for (int i = 0; i < 3; ++i) {
        Grid3<std::int8_t> g(base);
        for (int k = 0; k < 10; ++k) { // private fringe pixels
            const int y = static_cast<int>(rng.index(h));
            const int x = static_cast<int>(rng.index(w));
            g.at(0, y, x) = 2;
        }
        masks.emplace_back(std::move(g), "a" + std::to_string(i));
    }
    const auto mat = agreement(masks, {2, 3, 4});
    for (std::size_t i = 0; i < masks.size(); ++i) {
        double worst = 1.0;
        for (std::size_t j = 0; j < masks.size(); ++j)
            if (j != i) worst = std::min(worst, mat.pair(i, j));
        CHECK(mat.vs_average[i] >= worst - 1e-12);
    }
}

TEST_CASE("agreement requires at least two masks") {
    std::vector<LabelMask> one;
    one.push_back(mask_from({0, 1}, 1, 2, "solo"));
    CHECK_THROWS_AS(agreement(one, {2, 3, 4}), ValidationError);
}
