#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cinesync/errors.hpp"
#include "cinesync/matrix.hpp"
#include "cinesync/rng.hpp"

namespace cinesync {

/// Two-stage frame encoder: a per-frame affine+ReLU feature layer, then a
/// temporal-context aggregator that stacks the k hidden vectors centered on
/// each frame (edges clamped) and maps them to a d-dimensional embedding.
/// The order-verification classifier head lives in the same parameter set so
/// the whole model updates as one vector.
struct EncoderConfig {
    int input_dim = 0;   // F
    int hidden_dim = 32; // h
    int context = 5;     // k, odd
    int agg_hidden = 32;
    int embed_dim = 16;  // d
    int cls_hidden1 = 32;
    int cls_hidden2 = 16;

    void validate() const {
        if (input_dim < 1 || hidden_dim < 1 || agg_hidden < 1 || embed_dim < 1 || cls_hidden1 < 1 ||
            cls_hidden2 < 1)
            throw std::invalid_argument("EncoderConfig: all dimensions must be >= 1");
        if (context < 1 || context % 2 == 0)
            throw std::invalid_argument("EncoderConfig: context must be odd and >= 1");
    }

    bool operator==(const EncoderConfig&) const = default;
};

using EmbeddingSequence = Matrix; // T x d

struct EncoderParams {
    EncoderConfig cfg;
    Matrix w1; // h x F
    std::vector<double> b1;
    Matrix w2; // agg x (k*h)
    std::vector<double> b2;
    Matrix w3; // d x agg
    std::vector<double> b3;
    Matrix wc1; // c1 x 3d
    std::vector<double> bc1;
    Matrix wc2; // c2 x c1
    std::vector<double> bc2;
    Matrix wc3; // 2 x c2
    std::vector<double> bc3;

    static EncoderParams zeros(const EncoderConfig& cfg) {
        cfg.validate();
        EncoderParams p;
        p.cfg = cfg;
        p.w1 = Matrix(cfg.hidden_dim, cfg.input_dim);
        p.b1.assign(cfg.hidden_dim, 0.0);
        p.w2 = Matrix(cfg.agg_hidden, cfg.context * cfg.hidden_dim);
        p.b2.assign(cfg.agg_hidden, 0.0);
        p.w3 = Matrix(cfg.embed_dim, cfg.agg_hidden);
        p.b3.assign(cfg.embed_dim, 0.0);
        p.wc1 = Matrix(cfg.cls_hidden1, 3 * cfg.embed_dim);
        p.bc1.assign(cfg.cls_hidden1, 0.0);
        p.wc2 = Matrix(cfg.cls_hidden2, cfg.cls_hidden1);
        p.bc2.assign(cfg.cls_hidden2, 0.0);
        p.wc3 = Matrix(2, cfg.cls_hidden2);
        p.bc3.assign(2, 0.0);
        return p;
    }

    static size_t count(const EncoderConfig& cfg) {
        const size_t kh = static_cast<size_t>(cfg.context) * cfg.hidden_dim;
        return static_cast<size_t>(cfg.hidden_dim) * cfg.input_dim + cfg.hidden_dim +
               static_cast<size_t>(cfg.agg_hidden) * kh + cfg.agg_hidden +
               static_cast<size_t>(cfg.embed_dim) * cfg.agg_hidden + cfg.embed_dim +
               static_cast<size_t>(cfg.cls_hidden1) * 3 * cfg.embed_dim + cfg.cls_hidden1 +
               static_cast<size_t>(cfg.cls_hidden2) * cfg.cls_hidden1 + cfg.cls_hidden2 +
               static_cast<size_t>(2) * cfg.cls_hidden2 + 2;
    }

    /// Flatten order: w1, b1, w2, b2, w3, b3, wc1, bc1, wc2, bc2, wc3, bc3,
    /// matrices row-major. unflatten() inverts this exactly.
    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(count(cfg));
        auto push_m = [&out](const Matrix& m) { out.insert(out.end(), m.data(), m.data() + m.size()); };
        auto push_v = [&out](const std::vector<double>& v) { out.insert(out.end(), v.begin(), v.end()); };
        push_m(w1), push_v(b1);
        push_m(w2), push_v(b2);
        push_m(w3), push_v(b3);
        push_m(wc1), push_v(bc1);
        push_m(wc2), push_v(bc2);
        push_m(wc3), push_v(bc3);
        return out;
    }

    static EncoderParams unflatten(const EncoderConfig& cfg, std::span<const double> flat) {
        if (flat.size() != count(cfg)) throw ShapeError("EncoderParams::unflatten: wrong parameter count");
        EncoderParams p = zeros(cfg);
        size_t pos = 0;
        auto pull_m = [&](Matrix& m) {
            std::copy(flat.begin() + static_cast<ptrdiff_t>(pos),
                      flat.begin() + static_cast<ptrdiff_t>(pos + m.size()), m.data());
            pos += m.size();
        };
        auto pull_v = [&](std::vector<double>& v) {
            std::copy(flat.begin() + static_cast<ptrdiff_t>(pos),
                      flat.begin() + static_cast<ptrdiff_t>(pos + v.size()), v.data());
            pos += v.size();
        };
        pull_m(p.w1), pull_v(p.b1);
        pull_m(p.w2), pull_v(p.b2);
        pull_m(p.w3), pull_v(p.b3);
        pull_m(p.wc1), pull_v(p.bc1);
        pull_m(p.wc2), pull_v(p.bc2);
        pull_m(p.wc3), pull_v(p.bc3);
        return p;
    }
};

/// Gradients use the same layout as the parameters they belong to.
using EncoderGrads = EncoderParams;

/// Zero-mean weights scaled by 1/sqrt(fan_in), zero biases; draws happen in
/// flatten order from a single stream so results are seed-deterministic.
inline EncoderParams init_params(const EncoderConfig& cfg, uint64_t seed) {
    EncoderParams p = EncoderParams::zeros(cfg);
    Rng rng(mix_seed(seed, hash64("encoder-init")));
    auto fill = [&rng](Matrix& m, int fan_in) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    };
    fill(p.w1, cfg.input_dim);
    fill(p.w2, cfg.context * cfg.hidden_dim);
    fill(p.w3, cfg.agg_hidden);
    fill(p.wc1, 3 * cfg.embed_dim);
    fill(p.wc2, cfg.cls_hidden1);
    fill(p.wc3, cfg.cls_hidden2);
    return p;
}

namespace detail {

inline void affine(const Matrix& w, const std::vector<double>& b, std::span<const double> in,
                   std::span<double> out) {
    for (int r = 0; r < w.rows(); ++r) {
        double s = b[r];
        const double* wr = w.data() + static_cast<size_t>(r) * w.cols();
        for (int c = 0; c < w.cols(); ++c) s += wr[c] * in[c];
        out[r] = s;
    }
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double relu_gate(double x) { return x > 0.0 ? 1.0 : 0.0; } // subgradient at 0 is 0

} // namespace detail

struct ForwardTrace {
    Matrix z1;         // T x h, pre-activation
    Matrix u;          // T x h
    Matrix z2;         // T x agg, pre-activation
    Matrix v;          // T x agg
    Matrix embeddings; // T x d
};

inline ForwardTrace forward_trace(const EncoderParams& p, const Matrix& frames) {
    const auto& cfg = p.cfg;
    if (frames.cols() != cfg.input_dim)
        throw ShapeError("forward: frame feature width does not match encoder input_dim");
    if (frames.rows() < 1) throw std::invalid_argument("forward: empty frame sequence");
    const int t_count = frames.rows();
    const int half = cfg.context / 2;

    ForwardTrace tr;
    tr.z1 = Matrix(t_count, cfg.hidden_dim);
    tr.u = Matrix(t_count, cfg.hidden_dim);
    tr.z2 = Matrix(t_count, cfg.agg_hidden);
    tr.v = Matrix(t_count, cfg.agg_hidden);
    tr.embeddings = Matrix(t_count, cfg.embed_dim);

    for (int t = 0; t < t_count; ++t) {
        detail::affine(p.w1, p.b1, frames.row(t), tr.z1.row(t));
        for (int j = 0; j < cfg.hidden_dim; ++j) tr.u(t, j) = detail::relu(tr.z1(t, j));
    }

    std::vector<double> ctx(static_cast<size_t>(cfg.context) * cfg.hidden_dim);
    for (int i = 0; i < t_count; ++i) {
        for (int w = 0; w < cfg.context; ++w) {
            const int src = std::clamp(i + w - half, 0, t_count - 1);
            std::copy_n(tr.u.row(src).data(), cfg.hidden_dim, ctx.data() + static_cast<size_t>(w) * cfg.hidden_dim);
        }
        detail::affine(p.w2, p.b2, ctx, tr.z2.row(i));
        for (int j = 0; j < cfg.agg_hidden; ++j) tr.v(i, j) = detail::relu(tr.z2(i, j));
        detail::affine(p.w3, p.b3, tr.v.row(i), tr.embeddings.row(i));
    }
    return tr;
}

inline EmbeddingSequence forward(const EncoderParams& p, const Matrix& frames) {
    return forward_trace(p, frames).embeddings;
}

/// Accumulates d<embeddings, upstream>/dtheta into `grads` (which must share
/// the parameter shapes). Recomputes the forward trace internally.
inline void backward_accumulate(const EncoderParams& p, const Matrix& frames, const Matrix& upstream,
                                EncoderGrads& grads) {
    const auto& cfg = p.cfg;
    if (upstream.rows() != frames.rows() || upstream.cols() != cfg.embed_dim)
        throw ShapeError("backward: upstream gradient shape mismatch");
    const ForwardTrace tr = forward_trace(p, frames);
    const int t_count = frames.rows();
    const int half = cfg.context / 2;

    Matrix du(t_count, cfg.hidden_dim);
    std::vector<double> gv(cfg.agg_hidden), gz2(cfg.agg_hidden);

    for (int i = 0; i < t_count; ++i) {
        const auto ge = upstream.row(i);
        for (int r = 0; r < cfg.embed_dim; ++r) {
            grads.b3[r] += ge[r];
            double* gw3r = grads.w3.data() + static_cast<size_t>(r) * cfg.agg_hidden;
            const double* vr = tr.v.row(i).data();
            for (int c = 0; c < cfg.agg_hidden; ++c) gw3r[c] += ge[r] * vr[c];
        }
        for (int c = 0; c < cfg.agg_hidden; ++c) {
            double s = 0.0;
            for (int r = 0; r < cfg.embed_dim; ++r) s += p.w3(r, c) * ge[r];
            gv[c] = s;
            gz2[c] = s * detail::relu_gate(tr.z2(i, c));
        }
        for (int r = 0; r < cfg.agg_hidden; ++r) {
            grads.b2[r] += gz2[r];
            double* gw2r = grads.w2.data() + static_cast<size_t>(r) * (cfg.context * cfg.hidden_dim);
            for (int w = 0; w < cfg.context; ++w) {
                const int src = std::clamp(i + w - half, 0, t_count - 1);
                const double* us = tr.u.row(src).data();
                double* slot = gw2r + static_cast<size_t>(w) * cfg.hidden_dim;
                for (int l = 0; l < cfg.hidden_dim; ++l) slot[l] += gz2[r] * us[l];
            }
        }
        for (int w = 0; w < cfg.context; ++w) {
            const int src = std::clamp(i + w - half, 0, t_count - 1);
            double* dur = du.row(src).data();
            for (int l = 0; l < cfg.hidden_dim; ++l) {
                double s = 0.0;
                const int col = w * cfg.hidden_dim + l;
                for (int r = 0; r < cfg.agg_hidden; ++r) s += p.w2(r, col) * gz2[r];
                dur[l] += s;
            }
        }
    }

    std::vector<double> gz1(cfg.hidden_dim);
    for (int t = 0; t < t_count; ++t) {
        for (int j = 0; j < cfg.hidden_dim; ++j) gz1[j] = du(t, j) * detail::relu_gate(tr.z1(t, j));
        const double* xt = frames.row(t).data();
        for (int r = 0; r < cfg.hidden_dim; ++r) {
            grads.b1[r] += gz1[r];
            double* gw1r = grads.w1.data() + static_cast<size_t>(r) * cfg.input_dim;
            for (int c = 0; c < cfg.input_dim; ++c) gw1r[c] += gz1[r] * xt[c];
        }
    }
}

inline EncoderGrads backward(const EncoderParams& p, const Matrix& frames, const Matrix& upstream) {
    EncoderGrads grads = EncoderParams::zeros(p.cfg);
    backward_accumulate(p, frames, upstream, grads);
    return grads;
}

// ---- order-verification classifier head ----

struct ClassifierTrace {
    std::vector<double> input; // 3d concatenation
    std::vector<double> zc1, a1, zc2, a2;
    std::array<double, 2> logits;
};

inline ClassifierTrace classifier_trace(const EncoderParams& p, std::span<const double> e1,
                                        std::span<const double> e2, std::span<const double> e3) {
    const auto& cfg = p.cfg;
    const size_t d = static_cast<size_t>(cfg.embed_dim);
    if (e1.size() != d || e2.size() != d || e3.size() != d)
        throw ShapeError("classifier: embedding width does not match embed_dim");
    ClassifierTrace tr;
    tr.input.resize(3 * d);
    std::copy(e1.begin(), e1.end(), tr.input.begin());
    std::copy(e2.begin(), e2.end(), tr.input.begin() + static_cast<ptrdiff_t>(d));
    std::copy(e3.begin(), e3.end(), tr.input.begin() + static_cast<ptrdiff_t>(2 * d));
    tr.zc1.resize(cfg.cls_hidden1);
    tr.a1.resize(cfg.cls_hidden1);
    tr.zc2.resize(cfg.cls_hidden2);
    tr.a2.resize(cfg.cls_hidden2);
    detail::affine(p.wc1, p.bc1, tr.input, tr.zc1);
    for (int j = 0; j < cfg.cls_hidden1; ++j) tr.a1[j] = detail::relu(tr.zc1[j]);
    detail::affine(p.wc2, p.bc2, tr.a1, tr.zc2);
    for (int j = 0; j < cfg.cls_hidden2; ++j) tr.a2[j] = detail::relu(tr.zc2[j]);
    std::array<double, 2> logits{};
    detail::affine(p.wc3, p.bc3, tr.a2, logits);
    tr.logits = logits;
    return tr;
}

inline std::array<double, 2> forward_classifier(const EncoderParams& p, std::span<const double> e1,
                                                std::span<const double> e2, std::span<const double> e3) {
    return classifier_trace(p, e1, e2, e3).logits;
}

/// p(sorted) = softmax component 1 of the logits, computed stably.
inline double sorted_probability(const std::array<double, 2>& logits) {
    return 1.0 / (1.0 + std::exp(logits[0] - logits[1]));
}

/// Backpropagates dlogits through the classifier: accumulates parameter
/// gradients into `grads` and input gradients into the three embedding slots.
inline void classifier_backward_accumulate(const EncoderParams& p, const ClassifierTrace& tr,
                                           const std::array<double, 2>& dlogits, EncoderGrads& grads,
                                           std::span<double> de1, std::span<double> de2,
                                           std::span<double> de3) {
    const auto& cfg = p.cfg;
    std::vector<double> ga2(cfg.cls_hidden2), gzc2(cfg.cls_hidden2);
    std::vector<double> ga1(cfg.cls_hidden1), gzc1(cfg.cls_hidden1);

    for (int r = 0; r < 2; ++r) {
        grads.bc3[r] += dlogits[r];
        for (int c = 0; c < cfg.cls_hidden2; ++c) grads.wc3(r, c) += dlogits[r] * tr.a2[c];
    }
    for (int c = 0; c < cfg.cls_hidden2; ++c) {
        ga2[c] = p.wc3(0, c) * dlogits[0] + p.wc3(1, c) * dlogits[1];
        gzc2[c] = ga2[c] * detail::relu_gate(tr.zc2[c]);
    }
    for (int r = 0; r < cfg.cls_hidden2; ++r) {
        grads.bc2[r] += gzc2[r];
        for (int c = 0; c < cfg.cls_hidden1; ++c) grads.wc2(r, c) += gzc2[r] * tr.a1[c];
    }
    for (int c = 0; c < cfg.cls_hidden1; ++c) {
        double s = 0.0;
        for (int r = 0; r < cfg.cls_hidden2; ++r) s += p.wc2(r, c) * gzc2[r];
        ga1[c] = s;
        gzc1[c] = s * detail::relu_gate(tr.zc1[c]);
    }
    const int in_dim = 3 * cfg.embed_dim;
    for (int r = 0; r < cfg.cls_hidden1; ++r) {
        grads.bc1[r] += gzc1[r];
        for (int c = 0; c < in_dim; ++c) grads.wc1(r, c) += gzc1[r] * tr.input[c];
    }
    const int d = cfg.embed_dim;
    for (int c = 0; c < in_dim; ++c) {
        double s = 0.0;
        for (int r = 0; r < cfg.cls_hidden1; ++r) s += p.wc1(r, c) * gzc1[r];
        if (c < d)
            de1[c] += s;
        else if (c < 2 * d)
            de2[c - d] += s;
        else
            de3[c - 2 * d] += s;
    }
}

} // namespace cinesync
