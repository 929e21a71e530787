#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <vector>

#include "cinesync/cine.hpp"
#include "cinesync/encoder.hpp"
#include "cinesync/matrix.hpp"
#include "cinesync/rng.hpp"

namespace cinesync {

struct LossWeights {
    double w_spatial = 0.25;
    double w_temporal = 0.25;
    double w_inter = 0.5;

    void validate() const {
        if (w_spatial < 0.0 || w_temporal < 0.0 || w_inter < 0.0)
            throw std::invalid_argument("LossWeights: weights must be non-negative");
        if (w_spatial == 0.0 && w_temporal == 0.0 && w_inter == 0.0)
            throw std::invalid_argument("LossWeights: at least one weight must be positive");
    }
};

struct LossConfig {
    int alpha = 5;            // minimum window radius for spatial negatives
    double lambda_reg = 0.001;
    double eps_var = 1e-6;
    bool symmetric_inter = true;
    int threads = 1;
};

// ---- temporal intra-view: order verification ----

struct TripletSample {
    int i1, i2, i3;
    int label; // 1 when the indices run monotonically (either direction)
};

inline bool is_monotone_triplet(int a, int b, int c) { return (a < b && b < c) || (a > b && b > c); }

/// Mean absolute frame-to-frame difference; coarse motion stand-in.
inline std::vector<double> motion_profile(const Matrix& frames) {
    if (frames.rows() < 2) throw std::invalid_argument("motion_profile: need at least 2 frames");
    std::vector<double> motion(frames.rows() - 1);
    for (int t = 0; t + 1 < frames.rows(); ++t) {
        double s = 0.0;
        for (int c = 0; c < frames.cols(); ++c) s += std::abs(frames(t + 1, c) - frames(t, c));
        motion[t] = s / frames.cols();
    }
    return motion;
}

inline std::vector<double> motion_profile(const Cine& cine) { return motion_profile(cine.frames); }

/// Draws frame triplets from motion-weighted temporal windows: the first
/// n_total - n_unsorted come out monotone (ascending or descending with equal
/// probability, label 1), the rest are non-monotone permutations (label 0).
inline std::vector<TripletSample> sample_triplets(const Matrix& frames, Rng& rng, int n_total = 8,
                                                  int n_unsorted = 6, int window_len = 7) {
    const int t_count = frames.rows();
    if (t_count < 3) throw std::invalid_argument("sample_triplets: need at least 3 frames");
    if (n_unsorted > n_total || n_total < 1)
        throw std::invalid_argument("sample_triplets: invalid sample counts");
    const int wl = std::min(window_len, t_count);

    const auto motion = motion_profile(frames);
    const int n_windows = t_count - wl + 1;
    std::vector<double> weight(n_windows);
    double total = 0.0;
    for (int s = 0; s < n_windows; ++s) {
        double w = 0.0;
        for (int t = s; t < s + wl - 1; ++t) w += motion[t];
        weight[s] = w;
        total += w;
    }

    auto pick_window = [&]() -> int {
        if (total <= 0.0) return rng.below_int(n_windows); // uniform fallback
        const double r = rng.uniform() * total;
        double acc = 0.0;
        for (int s = 0; s < n_windows; ++s) {
            acc += weight[s];
            if (r < acc) return s;
        }
        return n_windows - 1;
    };

    std::vector<TripletSample> samples;
    samples.reserve(n_total);
    for (int n = 0; n < n_total; ++n) {
        const int s = pick_window();
        int a = s + rng.below_int(wl);
        int b = a;
        while (b == a) b = s + rng.below_int(wl);
        int c = a;
        while (c == a || c == b) c = s + rng.below_int(wl);

        const bool want_sorted = n < n_total - n_unsorted;
        int lo = std::min({a, b, c}), hi = std::max({a, b, c});
        int mid = a + b + c - lo - hi;
        TripletSample sample{};
        if (want_sorted) {
            sample = rng.uniform() < 0.5 ? TripletSample{lo, mid, hi, 1} : TripletSample{hi, mid, lo, 1};
        } else {
            // the four non-monotone arrangements of three distinct values
            const std::array<std::array<int, 3>, 4> perms{
                {{lo, hi, mid}, {mid, lo, hi}, {mid, hi, lo}, {hi, lo, mid}}};
            const auto& pick = perms[rng.below_int(4)];
            sample = TripletSample{pick[0], pick[1], pick[2], 0};
        }
        samples.push_back(sample);
    }
    return samples;
}

inline std::vector<TripletSample> sample_triplets(const Cine& cine, Rng& rng, int n_total = 8,
                                                  int n_unsorted = 6, int window_len = 7) {
    return sample_triplets(cine.frames, rng, n_total, n_unsorted, window_len);
}

struct TemporalIntraResult {
    double value = 0.0;
    Matrix d_embeddings;      // same shape as the input embeddings
    EncoderGrads d_classifier; // only the wc*/bc* blocks are touched
};

constexpr double kProbClamp = 1e-7;

/// Binary cross-entropy of the order classifier over the sampled triplets,
/// averaged. Predicted probabilities are clamped to [1e-7, 1 - 1e-7]; inside
/// the clamp the gradient is the usual softmax cross-entropy one, outside it
/// is zero (the clamped value is locally constant).
inline TemporalIntraResult temporal_intra_loss(const EncoderParams& params, const Matrix& embeddings,
                                               const std::vector<TripletSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("temporal_intra_loss: no samples");
    TemporalIntraResult res;
    res.d_embeddings = Matrix(embeddings.rows(), embeddings.cols());
    res.d_classifier = EncoderParams::zeros(params.cfg);
    const double inv_n = 1.0 / samples.size();

    for (const auto& s : samples) {
        const auto tr =
            classifier_trace(params, embeddings.row(s.i1), embeddings.row(s.i2), embeddings.row(s.i3));
        const double p1 = sorted_probability(tr.logits);
        const double p = std::clamp(p1, kProbClamp, 1.0 - kProbClamp);
        const double o = static_cast<double>(s.label);
        res.value -= inv_n * ((1.0 - o) * std::log(1.0 - p) + o * std::log(p));

        if (p1 > kProbClamp && p1 < 1.0 - kProbClamp) {
            // d(BCE)/dlogits collapses to (p - target) for the "sorted" logit
            const double g = (p1 - o) * inv_n;
            const std::array<double, 2> dlogits{-g, g};
            classifier_backward_accumulate(params, tr, dlogits, res.d_classifier,
                                           res.d_embeddings.row(s.i1), res.d_embeddings.row(s.i2),
                                           res.d_embeddings.row(s.i3));
        }
    }
    return res;
}

// ---- spatial intra-view: n-tuplet proximity ----

struct SpatialIntraResult {
    double value = 0.0;
    Matrix d_embeddings;
};

/// For each frame i the inner product with its successor is the positive;
/// inner products with frames at least alpha away (both directions) are the
/// negatives. Mean of -nu_i + logsumexp(nu_i, mu_i^k), max-shifted.
inline SpatialIntraResult spatial_intra_loss(const Matrix& q, int alpha) {
    const int n = q.rows();
    if (n < 2) throw std::invalid_argument("spatial_intra_loss: need at least 2 embeddings");
    if (alpha < 1) throw std::invalid_argument("spatial_intra_loss: alpha must be >= 1");
    SpatialIntraResult res;
    res.d_embeddings = Matrix(n, q.cols());
    const double inv_terms = 1.0 / (n - 1);

    std::vector<int> neg_index;
    std::vector<double> vals;
    for (int i = 0; i + 1 < n; ++i) {
        const double nu = dot(q.row(i), q.row(i + 1));
        neg_index.clear();
        vals.clear();
        vals.push_back(nu);
        for (int k = -i; i + k <= n - 1; ++k) {
            if (std::abs(k) < alpha) continue;
            neg_index.push_back(i + k);
            vals.push_back(dot(q.row(i), q.row(i + k)));
        }

        const double m = *std::max_element(vals.begin(), vals.end());
        double sum = 0.0;
        for (double v : vals) sum += std::exp(v - m);
        const double lse = m + std::log(sum);
        res.value += inv_terms * (-nu + lse);

        // softmax over {nu} + negatives; d/dnu = -1 + w0, d/dmu_k = w_k
        const double w0 = std::exp(vals[0] - lse);
        const double cnu = inv_terms * (w0 - 1.0);
        for (int c = 0; c < q.cols(); ++c) {
            res.d_embeddings(i, c) += cnu * q(i + 1, c);
            res.d_embeddings(i + 1, c) += cnu * q(i, c);
        }
        for (size_t j = 0; j < neg_index.size(); ++j) {
            const int other = neg_index[j];
            const double ck = inv_terms * std::exp(vals[j + 1] - lse);
            for (int c = 0; c < q.cols(); ++c) {
                res.d_embeddings(i, c) += ck * q(other, c);
                res.d_embeddings(other, c) += ck * q(i, c);
            }
        }
    }
    return res;
}

// ---- inter-view: soft-nearest-neighbour cycle consistency ----

/// Softmax-weighted combination of Q's rows, weighted by -||p - q_j||^2.
inline std::vector<double> soft_nn(std::span<const double> p, const Matrix& q) {
    if (q.rows() < 1) throw std::invalid_argument("soft_nn: empty candidate set");
    const int m = q.rows();
    std::vector<double> a(m);
    double amax = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
        a[j] = -squared_distance(p, q.row(j));
        amax = std::max(amax, a[j]);
    }
    double z = 0.0;
    for (int j = 0; j < m; ++j) {
        a[j] = std::exp(a[j] - amax);
        z += a[j];
    }
    std::vector<double> out(q.cols(), 0.0);
    for (int j = 0; j < m; ++j) {
        const double w = a[j] / z;
        const auto qj = q.row(j);
        for (int c = 0; c < q.cols(); ++c) out[c] += w * qj[c];
    }
    return out;
}

struct InterViewResult {
    double value = 0.0;
    Matrix d_p;
    Matrix d_q;
};

namespace detail {

inline void softmax_inplace(std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& v : logits) {
        v = std::exp(v - m);
        z += v;
    }
    for (double& v : logits) v /= z;
}

/// One direction of the consistency loss, P -> Q. Adds `scale` times the
/// gradient into d_p / d_q and returns the directional value (mean over i).
inline double inter_view_directional(const Matrix& p, const Matrix& q, double lambda_reg, double eps_var,
                                     Matrix& d_p, Matrix& d_q, double scale) {
    const int n = p.rows();
    const int m = q.rows();
    const int d = p.cols();

    std::vector<double> w(m), b(n), g_beta(n), g_b(n), qt(d), g_qt(d), g_w(m), g_a(m);
    double value = 0.0;
    const double per_i = 1.0 / n;

    for (int i = 0; i < n; ++i) {
        // stage A: soft nearest neighbour of p_i in Q
        for (int j = 0; j < m; ++j) w[j] = -squared_distance(p.row(i), q.row(j));
        softmax_inplace(w);
        std::fill(qt.begin(), qt.end(), 0.0);
        for (int j = 0; j < m; ++j) {
            const auto qj = q.row(j);
            for (int c = 0; c < d; ++c) qt[c] += w[j] * qj[c];
        }

        // stage B: similarity of the soft neighbour back to every p_k
        for (int k = 0; k < n; ++k) b[k] = -squared_distance(qt, p.row(k));
        softmax_inplace(b); // b now holds beta

        // stage C: Gaussian prior on the position distribution
        double mu = 0.0;
        for (int k = 0; k < n; ++k) mu += k * b[k];
        double var = 0.0;
        for (int k = 0; k < n; ++k) var += b[k] * (k - mu) * (k - mu);
        const double se = var + eps_var;
        const double dev = i - mu;
        value += per_i * (dev * dev / se + 0.5 * lambda_reg * std::log(se));

        const double co = scale * per_i;
        const double dt_dmu = -2.0 * dev / se;
        const double dt_dvar = -dev * dev / (se * se) + 0.5 * lambda_reg / se;
        double dot_bg = 0.0;
        for (int k = 0; k < n; ++k) {
            g_beta[k] = dt_dmu * k + dt_dvar * (k - mu) * (k - mu);
            dot_bg += b[k] * g_beta[k];
        }
        for (int k = 0; k < n; ++k) g_b[k] = b[k] * (g_beta[k] - dot_bg);

        std::fill(g_qt.begin(), g_qt.end(), 0.0);
        for (int k = 0; k < n; ++k) {
            const auto pk = p.row(k);
            auto dpk = d_p.row(k);
            for (int c = 0; c < d; ++c) {
                const double diff = qt[c] - pk[c];
                g_qt[c] += g_b[k] * -2.0 * diff;
                dpk[c] += co * g_b[k] * 2.0 * diff;
            }
        }

        double dot_wg = 0.0;
        for (int j = 0; j < m; ++j) {
            g_w[j] = dot(g_qt, q.row(j));
            dot_wg += w[j] * g_w[j];
        }
        for (int j = 0; j < m; ++j) g_a[j] = w[j] * (g_w[j] - dot_wg);

        const auto pi = p.row(i);
        auto dpi = d_p.row(i);
        for (int j = 0; j < m; ++j) {
            const auto qj = q.row(j);
            auto dqj = d_q.row(j);
            for (int c = 0; c < d; ++c) {
                const double diff = pi[c] - qj[c];
                dpi[c] += co * g_a[j] * -2.0 * diff;
                dqj[c] += co * (g_a[j] * 2.0 * diff + w[j] * g_qt[c]);
            }
        }
    }
    return value;
}

} // namespace detail

/// Cycle-consistency loss between two embedding sequences. Symmetric mode
/// averages both directions; one-directional mode evaluates P -> Q only.
inline InterViewResult inter_view_loss(const Matrix& p, const Matrix& q, double lambda_reg,
                                       double eps_var = 1e-6, bool symmetric = true) {
    if (p.rows() < 2) throw std::invalid_argument("inter_view_loss: need at least 2 rows in P");
    if (q.rows() < 1) throw std::invalid_argument("inter_view_loss: need at least 1 row in Q");
    if (p.cols() != q.cols()) throw ShapeError("inter_view_loss: embedding widths differ");
    InterViewResult res;
    res.d_p = Matrix(p.rows(), p.cols());
    res.d_q = Matrix(q.rows(), q.cols());
    if (!symmetric) {
        res.value = detail::inter_view_directional(p, q, lambda_reg, eps_var, res.d_p, res.d_q, 1.0);
        return res;
    }
    const double fwd = detail::inter_view_directional(p, q, lambda_reg, eps_var, res.d_p, res.d_q, 0.5);
    const double bwd = detail::inter_view_directional(q, p, lambda_reg, eps_var, res.d_q, res.d_p, 0.5);
    res.value = 0.5 * (fwd + bwd);
    return res;
}

// ---- combined objective ----

/// One training pair, already subsampled to the fixed frame count and with
/// triplets pre-drawn (they depend on the frames only, never on parameters,
/// so the combined loss stays a deterministic function of the parameters).
struct PairBatchItem {
    Matrix frames_a;
    Matrix frames_b;
    std::vector<TripletSample> triplets_a;
    std::vector<TripletSample> triplets_b;
};

struct CombinedLossResult {
    double value = 0.0;
    double spatial = 0.0;
    double temporal = 0.0;
    double inter = 0.0;
    std::vector<double> grad; // flat, EncoderParams order
};

namespace detail {

struct ItemResult {
    double spatial = 0.0, temporal = 0.0, inter = 0.0;
    EncoderGrads grads;
};

inline ItemResult combined_loss_item(const PairBatchItem& item, const EncoderParams& params,
                                     const LossWeights& w, const LossConfig& cfg, double inv_pairs) {
    ItemResult out;
    out.grads = EncoderParams::zeros(params.cfg);

    const Matrix emb_a = forward(params, item.frames_a);
    const Matrix emb_b = forward(params, item.frames_b);
    Matrix de_a(emb_a.rows(), emb_a.cols());
    Matrix de_b(emb_b.rows(), emb_b.cols());

    auto add_scaled = [](Matrix& dst, const Matrix& src, double s) {
        for (size_t i = 0; i < dst.size(); ++i) dst.data()[i] += s * src.data()[i];
    };

    if (w.w_spatial > 0.0) {
        const auto sa = spatial_intra_loss(emb_a, cfg.alpha);
        const auto sb = spatial_intra_loss(emb_b, cfg.alpha);
        out.spatial = 0.5 * (sa.value + sb.value);
        add_scaled(de_a, sa.d_embeddings, w.w_spatial * 0.5 * inv_pairs);
        add_scaled(de_b, sb.d_embeddings, w.w_spatial * 0.5 * inv_pairs);
    }
    if (w.w_temporal > 0.0) {
        const auto ta = temporal_intra_loss(params, emb_a, item.triplets_a);
        const auto tb = temporal_intra_loss(params, emb_b, item.triplets_b);
        out.temporal = 0.5 * (ta.value + tb.value);
        const double s = w.w_temporal * 0.5 * inv_pairs;
        add_scaled(de_a, ta.d_embeddings, s);
        add_scaled(de_b, tb.d_embeddings, s);
        auto add_cls = [s](Matrix& dst, const Matrix& src) {
            for (size_t i = 0; i < dst.size(); ++i) dst.data()[i] += s * src.data()[i];
        };
        auto add_cls_v = [s](std::vector<double>& dst, const std::vector<double>& src) {
            for (size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
        };
        for (const auto* t : {&ta, &tb}) {
            add_cls(out.grads.wc1, t->d_classifier.wc1);
            add_cls_v(out.grads.bc1, t->d_classifier.bc1);
            add_cls(out.grads.wc2, t->d_classifier.wc2);
            add_cls_v(out.grads.bc2, t->d_classifier.bc2);
            add_cls(out.grads.wc3, t->d_classifier.wc3);
            add_cls_v(out.grads.bc3, t->d_classifier.bc3);
        }
    }
    if (w.w_inter > 0.0) {
        const auto iv = inter_view_loss(emb_a, emb_b, cfg.lambda_reg, cfg.eps_var, cfg.symmetric_inter);
        out.inter = iv.value;
        add_scaled(de_a, iv.d_p, w.w_inter * inv_pairs);
        add_scaled(de_b, iv.d_q, w.w_inter * inv_pairs);
    }

    backward_accumulate(params, item.frames_a, de_a, out.grads);
    backward_accumulate(params, item.frames_b, de_b, out.grads);
    return out;
}

} // namespace detail

/// Weighted sum of the three losses over a batch of view pairs. Per pair the
/// intra losses average the two cines; the batch value is the mean over
/// pairs. Items may run concurrently; the reduction order is fixed by index,
/// so results are identical for any thread count.
inline CombinedLossResult combined_loss(const std::vector<PairBatchItem>& batch,
                                        const EncoderParams& params, const LossWeights& weights,
                                        const LossConfig& cfg) {
    weights.validate();
    if (batch.empty()) throw std::invalid_argument("combined_loss: empty batch");
    const double inv_pairs = 1.0 / batch.size();

    std::vector<detail::ItemResult> items(batch.size());
    if (cfg.threads > 1 && batch.size() > 1) {
        std::vector<std::future<detail::ItemResult>> futures;
        futures.reserve(batch.size());
        for (const auto& item : batch)
            futures.push_back(std::async(std::launch::async, [&item, &params, &weights, &cfg, inv_pairs] {
                return detail::combined_loss_item(item, params, weights, cfg, inv_pairs);
            }));
        for (size_t i = 0; i < futures.size(); ++i) items[i] = futures[i].get();
    } else {
        for (size_t i = 0; i < batch.size(); ++i)
            items[i] = detail::combined_loss_item(batch[i], params, weights, cfg, inv_pairs);
    }

    CombinedLossResult res;
    std::vector<double> grad(EncoderParams::count(params.cfg), 0.0);
    for (const auto& item : items) {
        res.spatial += inv_pairs * item.spatial;
        res.temporal += inv_pairs * item.temporal;
        res.inter += inv_pairs * item.inter;
        const auto flat = item.grads.flatten();
        for (size_t j = 0; j < grad.size(); ++j) grad[j] += flat[j];
    }
    res.value = weights.w_spatial * res.spatial + weights.w_temporal * res.temporal +
                weights.w_inter * res.inter;
    res.grad = std::move(grad);
    return res;
}

} // namespace cinesync
