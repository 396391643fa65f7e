#pragma once

#include <vector>

#include "opaseg/volume.hpp"

namespace opaseg {

// Per-group loss weights: the complement of each group's pixel probability
// in the training set.
struct ClassWeights {
    std::vector<int> groups;    // group id per entry, aligned with prob planes
    std::vector<double> weight; // w_g = 1 - p_g
};

// Counts group pixels over the masks (unlabelled excluded) and returns
// 1 - count/total per group. Groups with no pixels get weight 1; a group
// holding every pixel gets weight 0. Both degenerate cases warn on stderr.
ClassWeights compute_class_weights(const std::vector<LabelMask>& group_masks,
                                   const std::vector<int>& groups);

struct LossGrad {
    double loss = 0.0;
    std::vector<double> dlogits; // [class][y][x], gradient w.r.t. pre-softmax
};

// Weighted KL divergence from the soft target to the prediction, averaged
// over supported pixels (pixel_weight > 0):
//
//   loss = (1/M) Σ_x pw(x) Σ_c w_c t_c(x) log( t_c(x) / (p_c(x) + ε) )
//
// with 0·log(0/·) = 0. epsilon keeps the log finite as p → 0; it also means
// a perfect prediction scores ~-(n_classes·ε) rather than exactly 0. The
// returned gradient is taken w.r.t. the pre-softmax activations, so the
// softmax backward is already folded in.
//
// probs and target are plane layout [class][y][x]; pixel_weight is [y][x]
// with 0 marking pixels no annotator labelled. Throws when either
// distribution is off-normalized by more than 1e-4 on a supported pixel.
LossGrad kl_loss(const std::vector<double>& probs, const std::vector<double>& target,
                 const std::vector<double>& pixel_weight, const ClassWeights& weights,
                 double epsilon);

} // namespace opaseg
