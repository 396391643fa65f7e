#include "opaseg/loss.hpp"

#include <cmath>
#include <cstdint>
#include <iostream>

#include "opaseg/errors.hpp"

namespace opaseg {

ClassWeights compute_class_weights(const std::vector<LabelMask>& group_masks,
                                   const std::vector<int>& groups) {
    if (group_masks.empty()) throw ValidationError("class weights need at least one mask");
    if (groups.empty()) throw ValidationError("class weights need a non-empty group list");

    std::vector<std::uint64_t> count(groups.size(), 0);
    std::uint64_t total = 0;
    for (const auto& mask : group_masks) {
        for (std::int8_t v : mask.labels.data) {
            if (v == kUnlabelled) continue;
            ++total;
            for (std::size_t g = 0; g < groups.size(); ++g)
                if (v == groups[g]) {
                    ++count[g];
                    break;
                }
        }
    }
    if (total == 0) throw ValidationError("class weights: masks contain no labelled pixels");

    ClassWeights out;
    out.groups = groups;
    out.weight.resize(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double p = static_cast<double>(count[g]) / static_cast<double>(total);
        out.weight[g] = 1.0 - p;
        if (count[g] == 0)
            std::cerr << "warning: group " << groups[g]
                      << " has no training pixels; weight defaults to 1\n";
        else if (out.weight[g] == 0.0)
            std::cerr << "warning: group " << groups[g]
                      << " covers every labelled pixel; weight is 0\n";
    }
    return out;
}

LossGrad kl_loss(const std::vector<double>& probs, const std::vector<double>& target,
                 const std::vector<double>& pixel_weight, const ClassWeights& weights,
                 double epsilon) {
    if (!(epsilon > 0.0)) throw ValidationError("kl_loss epsilon must be > 0");
    const std::size_t classes = weights.weight.size();
    const std::size_t pixels = pixel_weight.size();
    if (classes == 0 || pixels == 0)
        throw ValidationError("kl_loss needs non-empty weights and pixels");
    if (probs.size() != classes * pixels || target.size() != classes * pixels)
        throw ValidationError("kl_loss plane sizes do not match weights x pixels");

    LossGrad out;
    out.dlogits.assign(classes * pixels, 0.0);

    std::size_t supported = 0;
    for (std::size_t i = 0; i < pixels; ++i)
        if (pixel_weight[i] > 0.0) ++supported;
    if (supported == 0) return out; // nothing labelled: zero loss, zero gradient

    const double inv_m = 1.0 / static_cast<double>(supported);
    double loss = 0.0;
    std::vector<double> a(classes);
    for (std::size_t i = 0; i < pixels; ++i) {
        const double pw = pixel_weight[i];
        if (!(pw > 0.0)) continue;

        double psum = 0.0, tsum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            psum += probs[c * pixels + i];
            tsum += target[c * pixels + i];
        }
        if (!std::isfinite(psum))
            throw NumericalError("kl_loss: prediction probabilities are non-finite");
        if (std::fabs(psum - 1.0) > 1e-4)
            throw ValidationError("kl_loss: prediction is not normalized (sum " +
                                  std::to_string(psum) + ")");
        if (std::fabs(tsum - 1.0) > 1e-4)
            throw ValidationError("kl_loss: target is not normalized (sum " +
                                  std::to_string(tsum) + ")");

        double pixel_kl = 0.0;
        double a_sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            const double t = target[c * pixels + i];
            const double p = probs[c * pixels + i];
            if (t > 0.0) pixel_kl += weights.weight[c] * t * std::log(t / (p + epsilon));
            a[c] = weights.weight[c] * t * p / (p + epsilon);
            a_sum += a[c];
        }
        loss += pw * pixel_kl;
        const double scale = pw * inv_m;
        for (std::size_t c = 0; c < classes; ++c)
            out.dlogits[c * pixels + i] =
                scale * (probs[c * pixels + i] * a_sum - a[c]);
    }
    out.loss = loss * inv_m;
    return out;
}

} // namespace opaseg
