#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "opaseg/soft_label.hpp"
#include "opaseg/volume.hpp"

namespace opaseg {

// Streaming per-class TP/FP/FN/TN counts. Pixels whose ground truth is
// unlabelled (-1) are excluded uniformly; all other evaluated pixels
// contribute one count to every class. Accumulators merge exactly, so
// parallel accumulation with a final merge cannot change any metric.
class ConfusionAccumulator {
public:
    struct Counts {
        std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    };

    explicit ConfusionAccumulator(std::vector<int> classes);

    const std::vector<int>& classes() const { return classes_; }
    const Counts& counts(int class_id) const;
    std::uint64_t evaluated_pixels() const { return evaluated_; }

    // Hard prediction vs ground truth over any equal-length label spans.
    void accumulate(const LabelMask& pred, const LabelMask& gt);
    void accumulate_slice(const std::int8_t* pred, const std::int8_t* gt, std::size_t n);

    void merge(const ConfusionAccumulator& other);

private:
    std::vector<int> classes_;
    std::vector<Counts> counts_;
    std::uint64_t evaluated_ = 0;
    int plane_of_[12]; // class value + 1 -> index, -1 if absent
};

// TP / (TP + FP + FN); empty when the union is empty (excluded from means).
std::optional<double> iou(const ConfusionAccumulator& acc, int class_id);

// Mean over classes with defined IOU.
std::optional<double> mean_iou(const ConfusionAccumulator& acc);

// Binary opacity accumulation from per-pixel group probabilities: a pixel is
// predicted opaque when the summed opacity-group mass exceeds the mass of
// all remaining groups. probs is laid out [group_plane][y][x] for one slice.
void accumulate_opacity_probs(ConfusionAccumulator& binary_acc, const double* probs,
                              const std::vector<int>& prob_groups, const std::int8_t* gt,
                              std::size_t plane_pixels, const std::vector<int>& opacity_groups);

// Same with a hard group mask as the prediction.
void accumulate_opacity_mask(ConfusionAccumulator& binary_acc, const std::int8_t* pred,
                             const std::int8_t* gt, std::size_t n,
                             const std::vector<int>& opacity_groups);

ConfusionAccumulator make_binary_accumulator();

// One-shot binary opacity IOU between probability maps and a group mask.
std::optional<double> opacity_iou(const std::vector<double>& probs,
                                  const std::vector<int>& prob_groups, const LabelMask& gt,
                                  const std::vector<int>& opacity_groups);
std::optional<double> opacity_iou(const LabelMask& pred, const LabelMask& gt,
                                  const std::vector<int>& opacity_groups);

// (TP + FP) / (TP + FN) on a binary opacity accumulator integrated over the
// whole evaluation set. Throws when the ground truth has no opacity.
double relative_volume(const ConfusionAccumulator& binary_acc);

// lung / (lung + opacity) voxels of a group-labelled prediction.
double percent_wal(const LabelMask& pred_groups, const std::vector<int>& opacity_groups);

struct AgreementMatrix {
    std::vector<std::string> annotator_ids;
    std::vector<double> pairwise;   // row-major n x n, unit diagonal
    std::vector<double> vs_average; // opacity IOU against the average annotation

    double pair(std::size_t i, std::size_t j) const {
        return pairwise[i * annotator_ids.size() + j];
    }
};

// Pairwise binary-opacity IOU between annotators (restricted to pixels both
// labelled) plus each annotator against the average annotation. Pairs with
// an empty opacity union score 1 (perfect agreement on absence).
AgreementMatrix agreement(const std::vector<LabelMask>& masks,
                          const std::vector<int>& opacity_groups);

} // namespace opaseg
