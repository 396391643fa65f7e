#include "opaseg/segnet.hpp"

#include <algorithm>
#include <cmath>

#include "opaseg/errors.hpp"
#include "opaseg/parallel.hpp"

namespace opaseg {

namespace {

// Layer order fixed at construction; indices into SegNet::layers().
enum LayerIndex {
    kEnc1a, kEnc1b, kEnc2a, kEnc2b, kBotA, kBotB,
    kDec2a, kDec2b, kDec1a, kDec1b, kHead, kLayerCount
};

// All kernels parallelize over disjoint output rows (or channels) and keep a
// fixed sequential accumulation order per output element, so results are
// bit-identical for any thread count.

void conv_forward(const ConvSpec& s, const double* params, const double* X, int h, int w,
                  double* Y) {
    const int k = s.ksize, p = k / 2;
    const double* W = params + s.w_offset;
    const double* B = params + s.b_offset;
    parallel::parallel_for(h, [&](std::int64_t yo64) {
        const int yo = static_cast<int>(yo64);
        for (int oc = 0; oc < s.out_ch; ++oc) {
            double* out = Y + (static_cast<std::size_t>(oc) * h + yo) * w;
            std::fill(out, out + w, B[oc]);
            const double* wc = W + static_cast<std::size_t>(oc) * s.in_ch * k * k;
            for (int ic = 0; ic < s.in_ch; ++ic) {
                for (int ky = 0; ky < k; ++ky) {
                    const int yi = yo + ky - p;
                    if (yi < 0 || yi >= h) continue;
                    const double* xrow = X + (static_cast<std::size_t>(ic) * h + yi) * w;
                    const double* wrow = wc + (static_cast<std::size_t>(ic) * k + ky) * k;
                    for (int kx = 0; kx < k; ++kx) {
                        const double wv = wrow[kx];
                        const int dx = kx - p;
                        const int x0 = std::max(0, -dx);
                        const int x1 = std::min(w, w - dx);
                        for (int x = x0; x < x1; ++x) out[x] += wv * xrow[x + dx];
                    }
                }
            }
        }
    });
}

void conv_backward_input(const ConvSpec& s, const double* params, const double* dY, int h,
                         int w, double* dX) {
    const int k = s.ksize, p = k / 2;
    const double* W = params + s.w_offset;
    parallel::parallel_for(h, [&](std::int64_t yi64) {
        const int yi = static_cast<int>(yi64);
        for (int ic = 0; ic < s.in_ch; ++ic) {
            double* out = dX + (static_cast<std::size_t>(ic) * h + yi) * w;
            std::fill(out, out + w, 0.0);
            for (int oc = 0; oc < s.out_ch; ++oc) {
                const double* wc =
                    W + (static_cast<std::size_t>(oc) * s.in_ch + ic) * k * k;
                for (int ky = 0; ky < k; ++ky) {
                    const int yo = yi - ky + p;
                    if (yo < 0 || yo >= h) continue;
                    const double* gy = dY + (static_cast<std::size_t>(oc) * h + yo) * w;
                    const double* wrow = wc + static_cast<std::size_t>(ky) * k;
                    for (int kx = 0; kx < k; ++kx) {
                        const double wv = wrow[kx];
                        const int off = p - kx; // xo = xi + off
                        const int x0 = std::max(0, -off);
                        const int x1 = std::min(w, w - off);
                        for (int xi = x0; xi < x1; ++xi) out[xi] += wv * gy[xi + off];
                    }
                }
            }
        }
    });
}

void conv_backward_params(const ConvSpec& s, const double* X, const double* dY, int h, int w,
                          double* grad) {
    const int k = s.ksize, p = k / 2;
    double* dW = grad + s.w_offset;
    double* dB = grad + s.b_offset;
    parallel::parallel_for(s.out_ch, [&](std::int64_t oc64) {
        const int oc = static_cast<int>(oc64);
        const double* gc = dY + static_cast<std::size_t>(oc) * h * w;
        double bsum = 0.0;
        const std::size_t plane = static_cast<std::size_t>(h) * w;
        for (std::size_t i = 0; i < plane; ++i) bsum += gc[i];
        dB[oc] += bsum;
        double* wc = dW + static_cast<std::size_t>(oc) * s.in_ch * k * k;
        for (int ic = 0; ic < s.in_ch; ++ic) {
            const double* xc = X + static_cast<std::size_t>(ic) * plane;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const int dy = ky - p, dx = kx - p;
                    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    double acc = 0.0;
                    for (int yo = y0; yo < y1; ++yo) {
                        const double* gy = gc + static_cast<std::size_t>(yo) * w;
                        const double* xr = xc + static_cast<std::size_t>(yo + dy) * w;
                        for (int xo = x0; xo < x1; ++xo) acc += gy[xo] * xr[xo + dx];
                    }
                    wc[(static_cast<std::size_t>(ic) * k + ky) * k + kx] += acc;
                }
            }
        }
    });
}

void relu_inplace(std::vector<double>& v) {
    parallel::parallel_for_ranges(static_cast<std::int64_t>(v.size()),
                                  [&](std::int64_t b, std::int64_t e) {
                                      for (std::int64_t i = b; i < e; ++i)
                                          if (v[static_cast<std::size_t>(i)] < 0.0)
                                              v[static_cast<std::size_t>(i)] = 0.0;
                                  });
}

// Masks the downstream gradient by the stored post-activation values.
void relu_backward(const std::vector<double>& act, std::vector<double>& g) {
    parallel::parallel_for_ranges(static_cast<std::int64_t>(g.size()),
                                  [&](std::int64_t b, std::int64_t e) {
                                      for (std::int64_t i = b; i < e; ++i)
                                          if (!(act[static_cast<std::size_t>(i)] > 0.0))
                                              g[static_cast<std::size_t>(i)] = 0.0;
                                  });
}

void add_inplace(std::vector<double>& dst, const std::vector<double>& src) {
    parallel::parallel_for_ranges(static_cast<std::int64_t>(dst.size()),
                                  [&](std::int64_t b, std::int64_t e) {
                                      for (std::int64_t i = b; i < e; ++i)
                                          dst[static_cast<std::size_t>(i)] +=
                                              src[static_cast<std::size_t>(i)];
                                  });
}

// 2x2 stride-2 max pooling; the first maximum in scan order wins ties. The
// stored index is global into the input buffer so backward is a pure scatter.
void maxpool_forward(int ch, int h, int w, const double* X, double* Y, std::int32_t* idx) {
    const int ho = h / 2, wo = w / 2;
    parallel::parallel_for(static_cast<std::int64_t>(ch) * ho, [&](std::int64_t row) {
        const int c = static_cast<int>(row / ho);
        const int yo = static_cast<int>(row % ho);
        const double* xc = X + static_cast<std::size_t>(c) * h * w;
        double* out = Y + (static_cast<std::size_t>(c) * ho + yo) * wo;
        std::int32_t* ib = idx + (static_cast<std::size_t>(c) * ho + yo) * wo;
        for (int xo = 0; xo < wo; ++xo) {
            std::size_t best = (static_cast<std::size_t>(2 * yo)) * w + 2 * xo;
            double bv = xc[best];
            const std::size_t cands[3] = {best + 1, best + static_cast<std::size_t>(w),
                                          best + static_cast<std::size_t>(w) + 1};
            for (std::size_t cand : cands)
                if (xc[cand] > bv) {
                    bv = xc[cand];
                    best = cand;
                }
            out[xo] = bv;
            ib[xo] = static_cast<std::int32_t>(static_cast<std::size_t>(c) * h * w + best);
        }
    });
}

// dX must be pre-filled (zero, or an already-accumulated skip gradient);
// pooling windows are disjoint so each input cell is written at most once.
void maxpool_backward(const std::int32_t* idx, const double* dY, std::size_t out_elems,
                      double* dX) {
    parallel::parallel_for_ranges(static_cast<std::int64_t>(out_elems),
                                  [&](std::int64_t b, std::int64_t e) {
                                      for (std::int64_t i = b; i < e; ++i)
                                          dX[idx[i]] += dY[i];
                                  });
}

void upsample_forward(int ch, int hin, int win, const double* X, double* Y) {
    const int ho = hin * 2, wo = win * 2;
    parallel::parallel_for(static_cast<std::int64_t>(ch) * ho, [&](std::int64_t row) {
        const int c = static_cast<int>(row / ho);
        const int yo = static_cast<int>(row % ho);
        const double* xr = X + (static_cast<std::size_t>(c) * hin + yo / 2) * win;
        double* out = Y + (static_cast<std::size_t>(c) * ho + yo) * wo;
        for (int xo = 0; xo < wo; ++xo) out[xo] = xr[xo / 2];
    });
}

void upsample_backward(int ch, int hin, int win, const double* dY, double* dX) {
    const int wo = win * 2;
    parallel::parallel_for(static_cast<std::int64_t>(ch) * hin, [&](std::int64_t row) {
        const int c = static_cast<int>(row / hin);
        const int yi = static_cast<int>(row % hin);
        double* out = dX + (static_cast<std::size_t>(c) * hin + yi) * win;
        const double* g0 =
            dY + (static_cast<std::size_t>(c) * 2 * hin + 2 * yi) * wo;
        const double* g1 = g0 + wo;
        for (int xi = 0; xi < win; ++xi)
            out[xi] = g0[2 * xi] + g0[2 * xi + 1] + g1[2 * xi] + g1[2 * xi + 1];
    });
}

void ensure_size(std::vector<double>& v, std::size_t n) {
    if (v.size() != n) v.assign(n, 0.0);
}

} // namespace

SegNet::SegNet(int base_channels, int n_classes, int in_channels)
    : base_channels_(base_channels), n_classes_(n_classes), in_channels_(in_channels) {
    if (base_channels < 1 || n_classes < 2 || in_channels < 1)
        throw ValidationError("segnet needs base_channels >= 1, n_classes >= 2, in_channels >= 1");
    const int c1 = base_channels, c2 = 2 * base_channels, c3 = 4 * base_channels;
    std::size_t off = 0;
    auto add = [&](const char* name, int in, int out, int k) {
        ConvSpec s;
        s.name = name;
        s.in_ch = in;
        s.out_ch = out;
        s.ksize = k;
        s.w_offset = off;
        off += s.weight_count();
        s.b_offset = off;
        off += static_cast<std::size_t>(out);
        layers_.push_back(std::move(s));
    };
    add("enc1a", in_channels_, c1, 3);
    add("enc1b", c1, c1, 3);
    add("enc2a", c1, c2, 3);
    add("enc2b", c2, c2, 3);
    add("bot_a", c2, c3, 3);
    add("bot_b", c3, c3, 3);
    add("dec2a", c3, c2, 3);
    add("dec2b", c2, c2, 3);
    add("dec1a", c2, c1, 3);
    add("dec1b", c1, c1, 3);
    add("head", c1, n_classes_, 1);
    params_.assign(off, 0.0);
}

void SegNet::init_params(Rng& rng) {
    for (const auto& s : layers_) {
        const double fan_in = static_cast<double>(s.in_ch) * s.ksize * s.ksize;
        const double limit = std::sqrt(6.0 / fan_in);
        for (std::size_t i = 0; i < s.weight_count(); ++i)
            params_[s.w_offset + i] = rng.uniform(-limit, limit);
        for (int i = 0; i < s.out_ch; ++i) params_[s.b_offset + i] = 0.0;
    }
}

const ConvSpec& SegNet::layer(const std::string& name) const {
    for (const auto& s : layers_)
        if (s.name == name) return s;
    throw ValidationError("unknown layer: " + name);
}

std::pair<std::size_t, std::size_t> SegNet::final_layer_span() const {
    const auto& head = layers_.back();
    return {head.w_offset, head.weight_count() + static_cast<std::size_t>(head.out_ch)};
}

void Workspace::resize(const SegNet& net, int h, int w) {
    if (h < 4 || w < 4 || h % 4 != 0 || w % 4 != 0)
        throw ValidationError("input height and width must be divisible by 4 "
                              "(three resolution levels), got " +
                              std::to_string(h) + "x" + std::to_string(w));
    const int c1 = net.base_channels(), c2 = 2 * c1, c3 = 4 * c1;
    if (h == h_ && w == w_ && base_ == c1 && classes_ == net.n_classes() &&
        in_ch_ == net.in_channels())
        return;
    h_ = h;
    w_ = w;
    base_ = c1;
    classes_ = net.n_classes();
    in_ch_ = net.in_channels();
    forward_done_ = false;

    const std::size_t full = static_cast<std::size_t>(h) * w;
    const std::size_t half = full / 4;
    const std::size_t quarter = full / 16;

    ensure_size(x0_, in_ch_ * full);
    ensure_size(e1a_, c1 * full);
    ensure_size(e1b_, c1 * full);
    ensure_size(p1_, c1 * half);
    ensure_size(e2a_, c2 * half);
    ensure_size(e2b_, c2 * half);
    ensure_size(p2_, c2 * quarter);
    ensure_size(ba_, c3 * quarter);
    ensure_size(bb_, c3 * quarter);
    ensure_size(u2_, c3 * half);
    ensure_size(d2r_, c2 * half);
    ensure_size(d2b_, c2 * half);
    ensure_size(u1_, c2 * full);
    ensure_size(d1a_, c1 * full);
    ensure_size(d1b_, c1 * full);
    ensure_size(logits_, static_cast<std::size_t>(classes_) * full);
    ensure_size(probs_, static_cast<std::size_t>(classes_) * full);
    idx1_.assign(c1 * half, 0);
    idx2_.assign(c2 * quarter, 0);

    ensure_size(g_e1a_, e1a_.size());
    ensure_size(g_e1b_, e1b_.size());
    ensure_size(g_p1_, p1_.size());
    ensure_size(g_e2a_, e2a_.size());
    ensure_size(g_e2b_, e2b_.size());
    ensure_size(g_p2_, p2_.size());
    ensure_size(g_ba_, ba_.size());
    ensure_size(g_bb_, bb_.size());
    ensure_size(g_u2_, u2_.size());
    ensure_size(g_d2r_, d2r_.size());
    ensure_size(g_d2b_, d2b_.size());
    ensure_size(g_u1_, u1_.size());
    ensure_size(g_d1a_, d1a_.size());
    ensure_size(g_d1b_, d1b_.size());
}

void softmax_planes(const double* logits, double* probs, int classes, std::size_t pixels) {
    parallel::parallel_for_ranges(
        static_cast<std::int64_t>(pixels), [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t i = b; i < e; ++i) {
                const std::size_t px = static_cast<std::size_t>(i);
                double m = logits[px];
                for (int c = 1; c < classes; ++c)
                    m = std::max(m, logits[static_cast<std::size_t>(c) * pixels + px]);
                double sum = 0.0;
                for (int c = 0; c < classes; ++c) {
                    const std::size_t at = static_cast<std::size_t>(c) * pixels + px;
                    const double ev = std::exp(logits[at] - m);
                    probs[at] = ev;
                    sum += ev;
                }
                const double inv = 1.0 / sum;
                for (int c = 0; c < classes; ++c)
                    probs[static_cast<std::size_t>(c) * pixels + px] *= inv;
            }
        });
}

void forward(const SegNet& net, const Image2<double>& input, Workspace& ws) {
    if (net.in_channels() != 1)
        throw ValidationError("forward expects a single-channel input image");
    ws.resize(net, input.height, input.width);
    const int h = ws.h_, w = ws.w_;
    const int h2 = h / 2, w2 = w / 2, h4 = h / 4, w4 = w / 4;
    const int c1 = ws.base_, c2 = 2 * c1, c3 = 4 * c1;
    const double* P = net.params().data();
    const auto& L = net.layers();

    std::copy(input.data.begin(), input.data.end(), ws.x0_.begin());

    conv_forward(L[kEnc1a], P, ws.x0_.data(), h, w, ws.e1a_.data());
    relu_inplace(ws.e1a_);
    conv_forward(L[kEnc1b], P, ws.e1a_.data(), h, w, ws.e1b_.data());
    relu_inplace(ws.e1b_);
    maxpool_forward(c1, h, w, ws.e1b_.data(), ws.p1_.data(), ws.idx1_.data());

    conv_forward(L[kEnc2a], P, ws.p1_.data(), h2, w2, ws.e2a_.data());
    relu_inplace(ws.e2a_);
    conv_forward(L[kEnc2b], P, ws.e2a_.data(), h2, w2, ws.e2b_.data());
    relu_inplace(ws.e2b_);
    maxpool_forward(c2, h2, w2, ws.e2b_.data(), ws.p2_.data(), ws.idx2_.data());

    conv_forward(L[kBotA], P, ws.p2_.data(), h4, w4, ws.ba_.data());
    relu_inplace(ws.ba_);
    conv_forward(L[kBotB], P, ws.ba_.data(), h4, w4, ws.bb_.data());
    relu_inplace(ws.bb_);

    upsample_forward(c3, h4, w4, ws.bb_.data(), ws.u2_.data());
    conv_forward(L[kDec2a], P, ws.u2_.data(), h2, w2, ws.d2r_.data());
    add_inplace(ws.d2r_, ws.e2b_); // skip connection
    relu_inplace(ws.d2r_);
    conv_forward(L[kDec2b], P, ws.d2r_.data(), h2, w2, ws.d2b_.data());
    relu_inplace(ws.d2b_);

    upsample_forward(c2, h2, w2, ws.d2b_.data(), ws.u1_.data());
    conv_forward(L[kDec1a], P, ws.u1_.data(), h, w, ws.d1a_.data());
    add_inplace(ws.d1a_, ws.e1b_); // skip connection
    relu_inplace(ws.d1a_);
    conv_forward(L[kDec1b], P, ws.d1a_.data(), h, w, ws.d1b_.data());
    relu_inplace(ws.d1b_);

    conv_forward(L[kHead], P, ws.d1b_.data(), h, w, ws.logits_.data());
    softmax_planes(ws.logits_.data(), ws.probs_.data(), ws.classes_,
                   static_cast<std::size_t>(h) * w);
    ws.forward_done_ = true;
}

void backward(const SegNet& net, Workspace& ws, const std::vector<double>& dlogits,
              std::vector<double>& grad) {
    if (!ws.forward_done_)
        throw ValidationError("backward called before forward");
    if (dlogits.size() != ws.logits_.size())
        throw ValidationError("dlogits size does not match the forward logits");
    if (grad.size() != net.param_count())
        throw ValidationError("gradient vector size does not match the parameter count");
    const int h = ws.h_, w = ws.w_;
    const int h2 = h / 2, w2 = w / 2, h4 = h / 4, w4 = w / 4;
    const int c1 = ws.base_, c2 = 2 * c1, c3 = 4 * c1;
    const double* P = net.params().data();
    double* G = grad.data();
    const auto& L = net.layers();

    conv_backward_params(L[kHead], ws.d1b_.data(), dlogits.data(), h, w, G);
    conv_backward_input(L[kHead], P, dlogits.data(), h, w, ws.g_d1b_.data());
    relu_backward(ws.d1b_, ws.g_d1b_);

    conv_backward_params(L[kDec1b], ws.d1a_.data(), ws.g_d1b_.data(), h, w, G);
    conv_backward_input(L[kDec1b], P, ws.g_d1b_.data(), h, w, ws.g_d1a_.data());
    relu_backward(ws.d1a_, ws.g_d1a_);

    // d1a = relu(conv(u1) + e1b): the masked gradient feeds both branches.
    std::copy(ws.g_d1a_.begin(), ws.g_d1a_.end(), ws.g_e1b_.begin());
    conv_backward_params(L[kDec1a], ws.u1_.data(), ws.g_d1a_.data(), h, w, G);
    conv_backward_input(L[kDec1a], P, ws.g_d1a_.data(), h, w, ws.g_u1_.data());
    upsample_backward(c2, h2, w2, ws.g_u1_.data(), ws.g_d2b_.data());
    relu_backward(ws.d2b_, ws.g_d2b_);

    conv_backward_params(L[kDec2b], ws.d2r_.data(), ws.g_d2b_.data(), h2, w2, G);
    conv_backward_input(L[kDec2b], P, ws.g_d2b_.data(), h2, w2, ws.g_d2r_.data());
    relu_backward(ws.d2r_, ws.g_d2r_);

    std::copy(ws.g_d2r_.begin(), ws.g_d2r_.end(), ws.g_e2b_.begin());
    conv_backward_params(L[kDec2a], ws.u2_.data(), ws.g_d2r_.data(), h2, w2, G);
    conv_backward_input(L[kDec2a], P, ws.g_d2r_.data(), h2, w2, ws.g_u2_.data());
    upsample_backward(c3, h4, w4, ws.g_u2_.data(), ws.g_bb_.data());
    relu_backward(ws.bb_, ws.g_bb_);

    conv_backward_params(L[kBotB], ws.ba_.data(), ws.g_bb_.data(), h4, w4, G);
    conv_backward_input(L[kBotB], P, ws.g_bb_.data(), h4, w4, ws.g_ba_.data());
    relu_backward(ws.ba_, ws.g_ba_);

    conv_backward_params(L[kBotA], ws.p2_.data(), ws.g_ba_.data(), h4, w4, G);
    conv_backward_input(L[kBotA], P, ws.g_ba_.data(), h4, w4, ws.g_p2_.data());

    // Pool gradients scatter onto the skip gradient already in g_e2b_.
    maxpool_backward(ws.idx2_.data(), ws.g_p2_.data(), ws.g_p2_.size(), ws.g_e2b_.data());
    relu_backward(ws.e2b_, ws.g_e2b_);

    conv_backward_params(L[kEnc2b], ws.e2a_.data(), ws.g_e2b_.data(), h2, w2, G);
    conv_backward_input(L[kEnc2b], P, ws.g_e2b_.data(), h2, w2, ws.g_e2a_.data());
    relu_backward(ws.e2a_, ws.g_e2a_);

    conv_backward_params(L[kEnc2a], ws.p1_.data(), ws.g_e2a_.data(), h2, w2, G);
    conv_backward_input(L[kEnc2a], P, ws.g_e2a_.data(), h2, w2, ws.g_p1_.data());

    maxpool_backward(ws.idx1_.data(), ws.g_p1_.data(), ws.g_p1_.size(), ws.g_e1b_.data());
    relu_backward(ws.e1b_, ws.g_e1b_);

    conv_backward_params(L[kEnc1b], ws.e1a_.data(), ws.g_e1b_.data(), h, w, G);
    conv_backward_input(L[kEnc1b], P, ws.g_e1b_.data(), h, w, ws.g_e1a_.data());
    relu_backward(ws.e1a_, ws.g_e1a_);

    // Input gradient of the first layer is never needed.
    conv_backward_params(L[kEnc1a], ws.x0_.data(), ws.g_e1a_.data(), h, w, G);
}

std::vector<double> predict_probs(const SegNet& net, const Image2<double>& input) {
    Workspace ws;
    forward(net, input, ws);
    return ws.probs();
}

} // namespace opaseg
