#include "opaseg/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace opaseg {

ConfusionAccumulator::ConfusionAccumulator(std::vector<int> classes)
    : classes_(std::move(classes)), counts_(classes_.size()) {
    if (classes_.empty()) throw ValidationError("accumulator needs at least one class");
    std::fill(std::begin(plane_of_), std::end(plane_of_), -1);
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        const int c = classes_[i];
        if (c < 0 || c > 10)
            throw ValidationError("accumulator class ids must be in [0,10], got " +
                                  std::to_string(c));
        plane_of_[c + 1] = static_cast<int>(i);
    }
}

const ConfusionAccumulator::Counts& ConfusionAccumulator::counts(int class_id) const {
    if (class_id < 0 || class_id > 10 || plane_of_[class_id + 1] < 0)
        throw ValidationError("unknown class id " + std::to_string(class_id));
    return counts_[static_cast<std::size_t>(plane_of_[class_id + 1])];
}

void ConfusionAccumulator::accumulate(const LabelMask& pred, const LabelMask& gt) {
    if (!pred.labels.same_shape(gt.labels))
        throw ValidationError("prediction and ground truth shapes differ");
    accumulate_slice(pred.labels.data.data(), gt.labels.data.data(), pred.labels.size());
}

void ConfusionAccumulator::accumulate_slice(const std::int8_t* pred, const std::int8_t* gt,
                                            std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const int g = gt[i];
        if (g == kUnlabelled) continue;
        const int p = pred[i];
        ++evaluated_;
        for (std::size_t ci = 0; ci < classes_.size(); ++ci) {
            const int c = classes_[ci];
            const bool in_gt = (g == c);
            const bool in_pred = (p == c);
            Counts& k = counts_[ci];
            if (in_pred && in_gt)
                ++k.tp;
            else if (in_pred)
                ++k.fp;
            else if (in_gt)
                ++k.fn;
            else
                ++k.tn;
        }
    }
}

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
    if (other.classes_ != classes_)
        throw ValidationError("cannot merge accumulators with different class lists");
    for (std::size_t i = 0; i < counts_.size(); ++i) {
        counts_[i].tp += other.counts_[i].tp;
        counts_[i].fp += other.counts_[i].fp;
        counts_[i].fn += other.counts_[i].fn;
        counts_[i].tn += other.counts_[i].tn;
    }
    evaluated_ += other.evaluated_;
}

std::optional<double> iou(const ConfusionAccumulator& acc, int class_id) {
    const auto& k = acc.counts(class_id);
    const std::uint64_t denom = k.tp + k.fp + k.fn;
    if (denom == 0) return std::nullopt;
    return static_cast<double>(k.tp) / static_cast<double>(denom);
}

std::optional<double> mean_iou(const ConfusionAccumulator& acc) {
    double sum = 0.0;
    int n = 0;
    for (int c : acc.classes()) {
        const auto v = iou(acc, c);
        if (v) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

ConfusionAccumulator make_binary_accumulator() { return ConfusionAccumulator({0, 1}); }

namespace {

bool group_is_opacity(int g, const std::vector<int>& opacity_groups) {
    return std::find(opacity_groups.begin(), opacity_groups.end(), g) != opacity_groups.end();
}

} // namespace

void accumulate_opacity_probs(ConfusionAccumulator& binary_acc, const double* probs,
                              const std::vector<int>& prob_groups, const std::int8_t* gt,
                              std::size_t plane_pixels, const std::vector<int>& opacity_groups) {
    const std::size_t n_groups = prob_groups.size();
    std::vector<bool> opacity_plane(n_groups);
    for (std::size_t gi = 0; gi < n_groups; ++gi)
        opacity_plane[gi] = group_is_opacity(prob_groups[gi], opacity_groups);

    for (std::size_t p = 0; p < plane_pixels; ++p) {
        const int g = gt[p];
        if (g == kUnlabelled) continue;
        double opacity_mass = 0.0;
        double other_mass = 0.0;
        for (std::size_t gi = 0; gi < n_groups; ++gi) {
            const double v = probs[gi * plane_pixels + p];
            if (opacity_plane[gi])
                opacity_mass += v;
            else
                other_mass += v;
        }
        if (std::fabs(opacity_mass + other_mass - 1.0) > 1e-6)
            throw ValidationError("per-pixel distribution not normalized (sum = " +
                                  std::to_string(opacity_mass + other_mass) + ")");
        const std::int8_t pred_op = opacity_mass > other_mass ? 1 : 0;
        const std::int8_t gt_op = group_is_opacity(g, opacity_groups) ? 1 : 0;
        binary_acc.accumulate_slice(&pred_op, &gt_op, 1);
    }
}

void accumulate_opacity_mask(ConfusionAccumulator& binary_acc, const std::int8_t* pred,
                             const std::int8_t* gt, std::size_t n,
                             const std::vector<int>& opacity_groups) {
    std::array<std::int8_t, 12> op{};
    for (int g : opacity_groups)
        if (g >= -1 && g <= 10) op[static_cast<std::size_t>(g + 1)] = 1;
    for (std::size_t i = 0; i < n; ++i) {
        const int g = gt[i];
        if (g == kUnlabelled) continue;
        const std::int8_t pred_op = op[static_cast<std::size_t>(pred[i] + 1)];
        const std::int8_t gt_op = op[static_cast<std::size_t>(g + 1)];
        binary_acc.accumulate_slice(&pred_op, &gt_op, 1);
    }
}

std::optional<double> opacity_iou(const std::vector<double>& probs,
                                  const std::vector<int>& prob_groups, const LabelMask& gt,
                                  const std::vector<int>& opacity_groups) {
    auto acc = make_binary_accumulator();
    const std::size_t plane = gt.labels.slice_size();
    if (probs.size() != prob_groups.size() * gt.labels.size())
        throw ValidationError("probability maps do not match ground-truth shape");
    for (int z = 0; z < gt.labels.depth(); ++z) {
        const double* slice_probs = probs.data() + static_cast<std::size_t>(z) * prob_groups.size() * plane;
        accumulate_opacity_probs(acc, slice_probs, prob_groups, gt.labels.slice(z), plane,
                                 opacity_groups);
    }
    return iou(acc, 1);
}

std::optional<double> opacity_iou(const LabelMask& pred, const LabelMask& gt,
                                  const std::vector<int>& opacity_groups) {
    if (!pred.labels.same_shape(gt.labels))
        throw ValidationError("prediction and ground truth shapes differ");
    auto acc = make_binary_accumulator();
    accumulate_opacity_mask(acc, pred.labels.data.data(), gt.labels.data.data(),
                            pred.labels.size(), opacity_groups);
    return iou(acc, 1);
}

double relative_volume(const ConfusionAccumulator& binary_acc) {
    const auto& k = binary_acc.counts(1);
    const std::uint64_t gt_volume = k.tp + k.fn;
    if (gt_volume == 0)
        throw ValidationError("relative volume undefined: ground truth has no opacity");
    return static_cast<double>(k.tp + k.fp) / static_cast<double>(gt_volume);
}

double percent_wal(const LabelMask& pred_groups, const std::vector<int>& opacity_groups) {
    std::uint64_t lung = 0, opacity = 0;
    for (std::int8_t v : pred_groups.labels.data) {
        if (v == 1)
            ++lung;
        else if (group_is_opacity(v, opacity_groups))
            ++opacity;
    }
    if (lung + opacity == 0)
        throw ValidationError("percent WAL undefined: no lung or opacity voxels predicted");
    return static_cast<double>(lung) / static_cast<double>(lung + opacity);
}

namespace {

// 0/1 opacity indicator; unlabelled pixels stay -1.
Grid3<std::int8_t> binarize_opacity(const LabelMask& m, const std::vector<int>& opacity_groups) {
    std::array<std::int8_t, 12> op{};
    for (int g : opacity_groups)
        if (g >= 0 && g <= 10) op[static_cast<std::size_t>(g)] = 1;
    Grid3<std::int8_t> out(m.labels.shape[0], m.labels.shape[1], m.labels.shape[2]);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const int v = m.labels.data[i];
        out.data[i] = v == kUnlabelled ? static_cast<std::int8_t>(kUnlabelled)
                                       : op[static_cast<std::size_t>(v)];
    }
    return out;
}

// Binary IOU on pixels labelled by both; empty union counts as perfect
// agreement.
double pair_binary_iou(const Grid3<std::int8_t>& a, const Grid3<std::int8_t>& b) {
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const int va = a.data[i];
        const int vb = b.data[i];
        if (va == kUnlabelled || vb == kUnlabelled) continue;
        if (va == 1 && vb == 1) ++inter;
        if (va == 1 || vb == 1) ++uni;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace

AgreementMatrix agreement(const std::vector<LabelMask>& masks,
                          const std::vector<int>& opacity_groups) {
    if (masks.size() < 2) throw ValidationError("agreement needs at least 2 masks");
    for (std::size_t i = 1; i < masks.size(); ++i)
        if (!masks[i].labels.same_shape(masks[0].labels))
            throw ValidationError("annotator masks have mismatched shapes");

    const std::size_t n = masks.size();
    std::vector<Grid3<std::int8_t>> binary;
    binary.reserve(n);
    for (const auto& m : masks) binary.push_back(binarize_opacity(m, opacity_groups));

    AgreementMatrix out;
    out.annotator_ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.annotator_ids.push_back(masks[i].annotator_id.empty()
                                        ? "annotator_" + std::to_string(i)
                                        : masks[i].annotator_id);
    out.pairwise.assign(n * n, 1.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = pair_binary_iou(binary[i], binary[j]);
            out.pairwise[i * n + j] = v;
            out.pairwise[j * n + i] = v;
        }

    const LabelMask avg = average_annotation(masks, opacity_groups);
    out.vs_average.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.vs_average.push_back(pair_binary_iou(binary[i], avg.labels));
    return out;
}

} // namespace opaseg
