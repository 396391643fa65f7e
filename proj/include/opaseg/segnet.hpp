#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "opaseg/grid.hpp"
#include "opaseg/rng.hpp"

namespace opaseg {

// One convolution layer's slot in the flat parameter vector.
struct ConvSpec {
    std::string name;
    int in_ch = 0;
    int out_ch = 0;
    int ksize = 0; // 1 or 3, stride 1, zero padding ksize/2
    std::size_t w_offset = 0;
    std::size_t b_offset = 0;

    std::size_t weight_count() const {
        return static_cast<std::size_t>(out_ch) * in_ch * ksize * ksize;
    }
};

// Miniature 2D encoder–decoder for per-pixel group probabilities.
//
// Three resolution levels (full, 1/2, 1/4), two 3x3 convolutions per level,
// 2x2 max pooling down and nearest-neighbour upsampling back, additive skip
// connections at matching resolutions, and a final 1x1 projection to one
// logit plane per group. All parameters live in a single flat vector so the
// optimizer and checkpoints never need to know the layer structure.
class SegNet {
public:
    static constexpr int kDepth = 3;

    explicit SegNet(int base_channels = 8, int n_classes = 5, int in_channels = 1);

    // Fan-in-scaled uniform weights, zero biases. Deterministic per rng state.
    void init_params(Rng& rng);

    int base_channels() const { return base_channels_; }
    int n_classes() const { return n_classes_; }
    int in_channels() const { return in_channels_; }
    int depth() const { return kDepth; }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }

    const std::vector<ConvSpec>& layers() const { return layers_; }
    const ConvSpec& layer(const std::string& name) const;

    // Offset and length of the final 1x1 projection (weights + bias) within
    // the flat vector.
    std::pair<std::size_t, std::size_t> final_layer_span() const;

private:
    int base_channels_;
    int n_classes_;
    int in_channels_;
    std::vector<ConvSpec> layers_;
    std::vector<double> params_;
};

// Preallocated activations, pooling argmax indices, and gradient buffers for
// one input size. Reused across samples; forward() fills it, backward()
// consumes it. Keeping the buffers out of SegNet keeps the network itself a
// pure parameter container.
class Workspace {
public:
    void resize(const SegNet& net, int h, int w); // h, w divisible by 4

    int height() const { return h_; }
    int width() const { return w_; }
    bool ready() const { return forward_done_; }

    // Per-pixel class probabilities, plane layout [class][y][x].
    const std::vector<double>& probs() const { return probs_; }
    const std::vector<double>& logits() const { return logits_; }

    friend void forward(const SegNet& net, const Image2<double>& input, Workspace& ws);
    friend void backward(const SegNet& net, Workspace& ws, const std::vector<double>& dlogits,
                         std::vector<double>& grad);

private:
    int h_ = 0, w_ = 0;
    int base_ = 0, classes_ = 0, in_ch_ = 0;
    bool forward_done_ = false;

    // Encoder / decoder activations (post-activation values; the ReLU mask
    // is recovered from value > 0).
    std::vector<double> x0_, e1a_, e1b_, p1_, e2a_, e2b_, p2_, ba_, bb_;
    std::vector<double> u2_, d2r_, d2b_, u1_, d1a_, d1b_, logits_, probs_;
    std::vector<std::int32_t> idx1_, idx2_;

    // Gradient twins for backward.
    std::vector<double> g_e1a_, g_e1b_, g_p1_, g_e2a_, g_e2b_, g_p2_, g_ba_, g_bb_;
    std::vector<double> g_u2_, g_d2r_, g_d2b_, g_u1_, g_d1a_, g_d1b_;
};

// Runs the network on one normalized slice. Output spatial shape equals the
// input shape; per-pixel outputs are softmax distributions.
void forward(const SegNet& net, const Image2<double>& input, Workspace& ws);

// Reverse-mode pass from the logit gradient, accumulating (+=) into grad,
// which must have param_count() entries. Requires a prior forward on ws.
void backward(const SegNet& net, Workspace& ws, const std::vector<double>& dlogits,
              std::vector<double>& grad);

// Convenience one-shot forward; returns probabilities [class][y][x].
std::vector<double> predict_probs(const SegNet& net, const Image2<double>& input);

// Numerically stable per-pixel softmax over plane-layout logits.
void softmax_planes(const double* logits, double* probs, int classes, std::size_t pixels);

} // namespace opaseg
