#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "cinesync/align.hpp"
#include "cinesync/cine.hpp"
#include "cinesync/errors.hpp"
#include "cinesync/matrix.hpp"

namespace cinesync {

// ---- Kendall's Tau over nearest-neighbour matches ----

inline int nearest_row(std::span<const double> v, const Matrix& candidates) {
    int best = 0;
    double best_d = squared_distance(v, candidates.row(0));
    for (int j = 1; j < candidates.rows(); ++j) {
        const double d = squared_distance(v, candidates.row(j));
        if (d < best_d) { // strict: ties keep the lowest index
            best_d = d;
            best = j;
        }
    }
    return best;
}

/// Rank-correlation of the nearest-neighbour matching from P into Q. A pair
/// (i, j), i < j, is concordant iff match(i) < match(j); equal matches count
/// as discordant.
inline double kendalls_tau(const Matrix& p, const Matrix& q) {
    const int n = p.rows();
    if (n < 2) throw std::invalid_argument("kendalls_tau: need at least 2 query rows");
    if (q.rows() < 1) throw std::invalid_argument("kendalls_tau: empty candidate sequence");
    if (p.cols() != q.cols()) throw ShapeError("kendalls_tau: embedding widths differ");

    std::vector<int> match(n);
    for (int i = 0; i < n; ++i) match[i] = nearest_row(p.row(i), q);

    long long concordant = 0, discordant = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            (match[i] < match[j] ? concordant : discordant) += 1;
    return 2.0 * static_cast<double>(concordant - discordant) / (static_cast<double>(n) * (n - 1));
}

// ---- linear phase regression ----

namespace detail {

/// Cholesky solve of the symmetric positive-definite system a x = rhs;
/// returns nullopt when a pivot collapses (rank deficiency).
inline std::optional<std::vector<double>> cholesky_solve(Matrix a, std::vector<double> rhs) {
    const int n = a.rows();
    for (int c = 0; c < n; ++c) {
        double diag = a(c, c);
        for (int k = 0; k < c; ++k) diag -= a(c, k) * a(c, k);
        if (!(diag > 0.0) || !std::isfinite(diag)) return std::nullopt;
        const double l = std::sqrt(diag);
        a(c, c) = l;
        for (int r = c + 1; r < n; ++r) {
            double v = a(r, c);
            for (int k = 0; k < c; ++k) v -= a(r, k) * a(c, k);
            a(r, c) = v / l;
        }
    }
    for (int r = 0; r < n; ++r) { // forward
        double v = rhs[r];
        for (int k = 0; k < r; ++k) v -= a(r, k) * rhs[k];
        rhs[r] = v / a(r, r);
    }
    for (int r = n - 1; r >= 0; --r) { // backward
        double v = rhs[r];
        for (int k = r + 1; k < n; ++k) v -= a(k, r) * rhs[k];
        rhs[r] = v / a(r, r);
    }
    return rhs;
}

} // namespace detail

/// Ordinary least squares with intercept mapping embeddings to targets.
/// `ridge` = 0 requests plain OLS with an automatic 1e-8 diagonal fallback on
/// rank deficiency; a positive value applies that ridge unconditionally.
inline std::vector<double> fit_linear(const Matrix& x, const std::vector<double>& y, double ridge = 0.0) {
    const int rows = x.rows();
    const int p = x.cols() + 1;
    if (rows < p) throw std::invalid_argument("fit_linear: need at least embed_dim + 1 training rows");
    if (static_cast<int>(y.size()) != rows) throw ShapeError("fit_linear: target length mismatch");

    Matrix a(p, p);
    std::vector<double> rhs(p, 0.0);
    for (int r = 0; r < rows; ++r) {
        std::vector<double> xi(p);
        xi[0] = 1.0;
        for (int c = 0; c < x.cols(); ++c) xi[c + 1] = x(r, c);
        for (int i = 0; i < p; ++i) {
            rhs[i] += xi[i] * y[r];
            for (int j = 0; j <= i; ++j) a(i, j) += xi[i] * xi[j];
        }
    }
    for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j) a(i, j) = a(j, i);

    if (ridge > 0.0)
        for (int i = 0; i < p; ++i) a(i, i) += ridge;
    auto solution = detail::cholesky_solve(a, rhs);
    if (!solution && ridge == 0.0) {
        for (int i = 0; i < p; ++i) a(i, i) += 1e-8;
        solution = detail::cholesky_solve(a, rhs);
    }
    if (!solution) throw std::runtime_error("fit_linear: normal equations are singular");
    return *solution;
}

inline double predict_linear(const std::vector<double>& coeff, std::span<const double> x) {
    double v = coeff[0];
    for (size_t c = 0; c < x.size(); ++c) v += coeff[c + 1] * x[c];
    return v;
}

/// Fits on the training set and returns R^2 = 1 - SS_res/SS_tot on the test
/// set, with the test-label mean as the baseline.
inline double phase_regression_r2(const Matrix& train_x, const std::vector<double>& train_y,
                                  const Matrix& test_x, const std::vector<double>& test_y,
                                  double ridge = 0.0) {
    if (test_x.rows() < 1 || static_cast<int>(test_y.size()) != test_x.rows())
        throw std::invalid_argument("phase_regression_r2: bad test set");
    const auto coeff = fit_linear(train_x, train_y, ridge);

    double mean = 0.0;
    for (double v : test_y) mean += v;
    mean /= test_y.size();
    double ss_res = 0.0, ss_tot = 0.0;
    for (int r = 0; r < test_x.rows(); ++r) {
        const double err = test_y[r] - predict_linear(coeff, test_x.row(r));
        ss_res += err * err;
        const double dev = test_y[r] - mean;
        ss_tot += dev * dev;
    }
    if (ss_tot == 0.0) throw std::domain_error("phase_regression_r2: constant test labels, R^2 undefined");
    return 1.0 - ss_res / ss_tot;
}

/// Per-frame phase targets for a labeled cine, driven by its recorded
/// keyframes. Frames between an ED and the following ED take the label of
/// that cycle. A cine that ends before the next ED has no recorded
/// T_ED^{i+1}; when `systole_fraction` (the generator's fraction of the cycle
/// spent in systole) is supplied, the final cycle's virtual next ED is
/// extrapolated as t_ed + round((t_es - t_ed) / systole_fraction), otherwise
/// those diastolic frames stay unlabeled. Frames before the first ED are
/// always unlabeled (mask false).
struct PhaseTargets {
    std::vector<double> labels;
    std::vector<bool> mask;
};

inline PhaseTargets phase_targets(const Cine& cine,
                                  std::optional<double> systole_fraction = std::nullopt) {
    PhaseTargets out;
    out.labels.assign(cine.t(), 0.0);
    out.mask.assign(cine.t(), false);
    for (KeyframePair kf : cycle_keyframe_pairs(cine)) {
        if (!kf.t_ed_next) {
            if (!systole_fraction) {
                for (int t = kf.t_ed; t <= kf.t_es && t < cine.t(); ++t) {
                    out.labels[t] = phase_label(t, kf);
                    out.mask[t] = true;
                }
                continue;
            }
            if (!(*systole_fraction > 0.0 && *systole_fraction < 1.0))
                throw std::invalid_argument("phase_targets: systole_fraction must lie in (0, 1)");
            kf.t_ed_next = kf.t_ed +
                           static_cast<int>(std::llround((kf.t_es - kf.t_ed) / *systole_fraction));
        }
        for (int t = kf.t_ed; t <= *kf.t_ed_next && t < cine.t(); ++t) {
            out.labels[t] = phase_label(t, kf);
            out.mask[t] = true;
        }
    }
    return out;
}

// ---- one-shot keyframe transfer ----

/// Warps each labeled reference frame onto the candidate through DTW. Every
/// labeled instance maps independently, so multi-cycle references yield one
/// prediction per labeled cycle.
inline std::vector<Keyframe> one_shot_keyframes(const Matrix& reference_embeddings,
                                                const std::vector<Keyframe>& reference_keyframes,
                                                const Matrix& candidate_embeddings) {
    if (reference_keyframes.empty())
        throw std::invalid_argument("one_shot_keyframes: reference has no labels");
    const auto path = dtw(reference_embeddings, candidate_embeddings);
    const auto mapping = warp(path, reference_embeddings.rows());
    std::vector<Keyframe> predictions;
    predictions.reserve(reference_keyframes.size());
    for (const auto& kf : reference_keyframes) {
        if (kf.index < 0 || kf.index >= reference_embeddings.rows())
            throw std::invalid_argument("one_shot_keyframes: label index outside the reference");
        predictions.push_back({kf.kind, mapping[kf.index]});
    }
    return predictions;
}

// ---- keyframe error statistics ----

struct KeyframeError {
    KeyframeKind kind;
    int predicted;
    int actual;
    double frame_time_ms;
};

struct KeyframeStats {
    double mae_ed_frames = 0.0, mae_es_frames = 0.0;
    double std_ed_frames = 0.0, std_es_frames = 0.0;
    double mae_ed_ms = 0.0, mae_es_ms = 0.0;
    double std_ed_ms = 0.0, std_es_ms = 0.0;
    int n = 0;
};

inline KeyframeStats keyframe_stats(const std::vector<KeyframeError>& errors) {
    if (errors.empty()) throw std::invalid_argument("keyframe_stats: no matched predictions");
    KeyframeStats stats;
    stats.n = static_cast<int>(errors.size());
    for (const KeyframeKind kind : {KeyframeKind::ED, KeyframeKind::ES}) {
        std::vector<double> frames, ms;
        for (const auto& e : errors) {
            if (e.kind != kind) continue;
            const double err = static_cast<double>(e.predicted - e.actual);
            frames.push_back(err);
            ms.push_back(err * e.frame_time_ms);
        }
        auto mae = [](const std::vector<double>& v) {
            double s = 0.0;
            for (double x : v) s += std::abs(x);
            return v.empty() ? 0.0 : s / v.size();
        };
        auto stddev = [](const std::vector<double>& v) {
            if (v.empty()) return 0.0;
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= v.size();
            double var = 0.0;
            for (double x : v) var += (x - mean) * (x - mean);
            return std::sqrt(var / v.size());
        };
        if (kind == KeyframeKind::ED) {
            stats.mae_ed_frames = mae(frames);
            stats.std_ed_frames = stddev(frames);
            stats.mae_ed_ms = mae(ms);
            stats.std_ed_ms = stddev(ms);
        } else {
            stats.mae_es_frames = mae(frames);
            stats.std_es_frames = stddev(frames);
            stats.mae_es_ms = mae(ms);
            stats.std_es_ms = stddev(ms);
        }
    }
    return stats;
}

// ---- 1-D PCA export ----

namespace detail {

/// Leading eigenvector of a symmetric PSD matrix by power iteration; two
/// deterministic starting vectors guard against an orthogonal start.
inline std::vector<double> leading_eigenvector(const Matrix& cov) {
    const int d = cov.rows();
    auto iterate = [&](std::vector<double> v) {
        std::vector<double> next(d);
        for (int it = 0; it < 500; ++it) {
            for (int r = 0; r < d; ++r) {
                double s = 0.0;
                for (int c = 0; c < d; ++c) s += cov(r, c) * v[c];
                next[r] = s;
            }
            double norm = std::sqrt(dot(next, next));
            if (norm == 0.0) return std::vector<double>(d, 0.0);
            for (int r = 0; r < d; ++r) next[r] /= norm;
            double delta = 0.0; // compare up to sign
            double sign = dot(next, v) >= 0.0 ? 1.0 : -1.0;
            for (int r = 0; r < d; ++r) delta = std::max(delta, std::abs(next[r] - sign * v[r]));
            v = next;
            if (delta < 1e-14) break;
        }
        return v;
    };
    auto rayleigh = [&](const std::vector<double>& v) {
        double num = 0.0;
        for (int r = 0; r < d; ++r) {
            double s = 0.0;
            for (int c = 0; c < d; ++c) s += cov(r, c) * v[c];
            num += v[r] * s;
        }
        return num;
    };

    int peak = 0;
    for (int i = 1; i < d; ++i)
        if (cov(i, i) > cov(peak, peak)) peak = i;
    std::vector<double> start_a(d, 0.0);
    start_a[peak] = 1.0;
    std::vector<double> start_b(d, 1.0 / std::sqrt(static_cast<double>(d)));

    const auto va = iterate(start_a);
    const auto vb = iterate(start_b);
    return rayleigh(va) >= rayleigh(vb) ? va : vb;
}

} // namespace detail

/// Projects centered embeddings onto the leading principal axis. The sign is
/// fixed so the value at t=0 is <= the value at t=T-1. Zero-variance input
/// yields the zero vector.
inline std::vector<double> pca_1d(const Matrix& e) {
    const int t_count = e.rows();
    if (t_count < 2) throw std::invalid_argument("pca_1d: need at least 2 rows");
    const int d = e.cols();

    std::vector<double> mean(d, 0.0);
    for (int t = 0; t < t_count; ++t)
        for (int c = 0; c < d; ++c) mean[c] += e(t, c);
    for (double& m : mean) m /= t_count;

    Matrix cov(d, d);
    for (int t = 0; t < t_count; ++t)
        for (int r = 0; r < d; ++r) {
            const double xr = e(t, r) - mean[r];
            for (int c = 0; c <= r; ++c) cov(r, c) += xr * (e(t, c) - mean[c]);
        }
    double trace = 0.0;
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c <= r; ++c) {
            cov(r, c) /= t_count;
            cov(c, r) = cov(r, c);
        }
        trace += cov(r, r);
    }
    if (trace <= 0.0) return std::vector<double>(t_count, 0.0);

    const auto axis = detail::leading_eigenvector(cov);
    std::vector<double> proj(t_count);
    for (int t = 0; t < t_count; ++t) {
        double s = 0.0;
        for (int c = 0; c < d; ++c) s += (e(t, c) - mean[c]) * axis[c];
        proj[t] = s;
    }
    if (proj.front() > proj.back())
        for (double& v : proj) v = -v;
    return proj;
}

} // namespace cinesync
