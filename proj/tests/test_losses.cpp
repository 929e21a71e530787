#include <catch_amalgamated.hpp>

#include <numbers>

#include "cinesync/losses.hpp"
#include "cinesync/rng.hpp"
#include "support/oracles.hpp"

using namespace cinesync;

namespace {

EncoderConfig tiny_config(int input_dim = 4, int embed_dim = 4) {
    EncoderConfig cfg;
    cfg.input_dim = input_dim;
    cfg.hidden_dim = 5;
    cfg.context = 3;
    cfg.agg_hidden = 5;
    cfg.embed_dim = embed_dim;
    cfg.cls_hidden1 = 5;
    cfg.cls_hidden2 = 4;
    return cfg;
}

} // namespace

// ---- motion profile ----

TEST_CASE("motion profile basics") {
    Matrix constant(5, 4, 1.25);
    for (double m : motion_profile(constant)) CHECK(m == 0.0);

    Matrix step(2, 4);
    for (int c = 0; c < 4; ++c) step(1, c) = 1.0;
    const auto motion = motion_profile(step);
    REQUIRE(motion.size() == 1);
    CHECK(motion[0] == 1.0);
}

TEST_CASE("motion profile equals the elementwise recomputation") {
    Rng rng(8);
    const auto frames = oracles::random_matrix(12, 6, rng);
    const auto motion = motion_profile(frames);
    for (int t = 0; t + 1 < frames.rows(); ++t) {
        double s = 0.0;
        for (int c = 0; c < frames.cols(); ++c) s += std::abs(frames(t + 1, c) - frames(t, c));
        CHECK(motion[t] == Catch::Approx(s / frames.cols()).margin(1e-15));
    }
}

// ---- triplet sampling ----

TEST_CASE("sample_triplets counts, labels and window containment") {
    Rng data_rng(10);
    const auto frames = oracles::random_matrix(30, 5, data_rng);
    Rng rng(11);
    const auto samples = sample_triplets(frames, rng, 8, 6, 7);
    REQUIRE(samples.size() == 8);
    int unsorted = 0;
    for (const auto& s : samples) {
        CHECK(s.i1 != s.i2);
        CHECK(s.i2 != s.i3);
        CHECK(s.i1 != s.i3);
        const int lo = std::min({s.i1, s.i2, s.i3});
        const int hi = std::max({s.i1, s.i2, s.i3});
        CHECK(hi - lo < 7);
        CHECK(s.label == (is_monotone_triplet(s.i1, s.i2, s.i3) ? 1 : 0));
        unsorted += 1 - s.label;
    }
    CHECK(unsorted == 6);
}

TEST_CASE("sample_triplets zero-motion fallback still samples") {
    Matrix constant(20, 4, 0.5);
    Rng rng(3);
    const auto samples = sample_triplets(constant, rng);
    CHECK(samples.size() == 8);
}

TEST_CASE("sample_triplets errors on too-short input") {
    Matrix tiny(2, 4, 0.1);
    Rng rng(4);
    CHECK_THROWS_AS(sample_triplets(tiny, rng), std::invalid_argument);
}

TEST_CASE("high-motion windows dominate the sampling weights") {
    // one violent transition at frames 20->21; windows containing it hold
    // nearly all the weight
    Matrix frames(40, 4, 0.0);
    for (int t = 21; t < 40; ++t)
        for (int c = 0; c < 4; ++c) frames(t, c) = 100.0;
    for (int t = 0; t < 40; ++t) frames(t, 0) += 1e-4 * t; // tiny background motion
    Rng rng(5);
    int hits = 0, total = 0;
    for (int rep = 0; rep < 125; ++rep) {
        for (const auto& s : sample_triplets(frames, rng)) {
            const int lo = std::min({s.i1, s.i2, s.i3});
            const int hi = std::max({s.i1, s.i2, s.i3});
            // only windows starting in [15, 20] contain the 20->21 step
            if (lo >= 15 && hi <= 26) ++hits;
            ++total;
        }
    }
    CHECK(total == 1000);
    CHECK(hits >= 900);
}

// ---- temporal intra-view ----

TEST_CASE("temporal loss is ln 2 at even odds") {
    const auto cfg = tiny_config();
    const auto zero = EncoderParams::zeros(cfg); // classifier outputs (0,0)
    Matrix emb(5, cfg.embed_dim, 0.1);
    const auto res = temporal_intra_loss(zero, emb, {{0, 1, 2, 1}});
    CHECK(res.value == Catch::Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("temporal loss vanishes for confident correct predictions") {
    const auto cfg = tiny_config();
    auto p = EncoderParams::zeros(cfg);
    // drive logit 1 hard positive for any input: bias-only network
    p.bc3[1] = 50.0;
    Matrix emb(4, cfg.embed_dim, 0.2);
    const auto res = temporal_intra_loss(p, emb, {{0, 1, 2, 1}, {2, 1, 3, 1}});
    CHECK(res.value <= 1e-6);
    // clamped region: gradient is zero by definition
    for (double g : res.d_classifier.flatten()) CHECK(g == 0.0);
}

TEST_CASE("temporal loss gradient matches finite differences") {
    const auto cfg = tiny_config();
    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        const auto params = init_params(cfg, 300 + trial);
        const auto emb = oracles::random_matrix(6, cfg.embed_dim, rng);
        const std::vector<TripletSample> samples{{0, 1, 2, 1}, {3, 1, 5, 0}, {4, 2, 0, 0}};

        const auto res = temporal_intra_loss(params, emb, samples);

        // w.r.t. classifier parameters
        const auto analytic_cls = res.d_classifier.flatten();
        const auto value_at_params = [&](const std::vector<double>& flat) {
            return temporal_intra_loss(EncoderParams::unflatten(cfg, flat), emb, samples).value;
        };
        const auto rep1 =
            oracles::finite_difference_check(params.flatten(), value_at_params, analytic_cls);
        CHECK(rep1.max_rel_error < 1e-5);

        // w.r.t. embeddings
        std::vector<double> emb_flat(emb.data(), emb.data() + emb.size());
        std::vector<double> analytic_emb(res.d_embeddings.data(),
                                         res.d_embeddings.data() + res.d_embeddings.size());
        const auto value_at_emb = [&](const std::vector<double>& flat) {
            Matrix e(emb.rows(), emb.cols());
            std::copy(flat.begin(), flat.end(), e.data());
            return temporal_intra_loss(params, e, samples).value;
        };
        const auto rep2 = oracles::finite_difference_check(emb_flat, value_at_emb, analytic_emb);
        CHECK(rep2.max_rel_error < 1e-5);
    }
}

// ---- spatial intra-view ----

TEST_CASE("spatial loss with no negatives is exactly zero") {
    Rng rng(31);
    const auto q = oracles::random_matrix(2, 3, rng);
    const auto res = spatial_intra_loss(q, 5);
    CHECK(res.value == 0.0);
    for (size_t i = 0; i < res.d_embeddings.size(); ++i) CHECK(res.d_embeddings.data()[i] == 0.0);
}

TEST_CASE("identical embeddings give the counting closed form") {
    const int n = 9, alpha = 3;
    Matrix q(n, 4, 0.7);
    double expected = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
        int negatives = 0;
        for (int k = -i; i + k <= n - 1; ++k)
            if (std::abs(k) >= alpha) ++negatives;
        expected += std::log(1.0 + negatives);
    }
    expected /= (n - 1);
    const auto res = spatial_intra_loss(q, alpha);
    CHECK(res.value == Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("spatial loss equals the brute-force oracle to 1e-10") {
    Rng rng(33);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 4 + rng.below_int(9);
        const int d = 2 + rng.below_int(5);
        const int alpha = 1 + rng.below_int(4);
        const auto q = oracles::random_matrix(n, d, rng);
        const auto res = spatial_intra_loss(q, alpha);
        CHECK(std::abs(res.value - oracles::spatial_loss_bruteforce(q, alpha)) < 1e-10);
    }
}

TEST_CASE("spatial loss gradient matches finite differences") {
    Rng rng(34);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 5 + rng.below_int(5);
        const auto q = oracles::random_matrix(n, 4, rng);
        const auto res = spatial_intra_loss(q, 3);
        std::vector<double> flat(q.data(), q.data() + q.size());
        std::vector<double> analytic(res.d_embeddings.data(),
                                     res.d_embeddings.data() + res.d_embeddings.size());
        const auto value_at = [&](const std::vector<double>& v) {
            Matrix m(q.rows(), q.cols());
            std::copy(v.begin(), v.end(), m.data());
            return spatial_intra_loss(m, 3).value;
        };
        CHECK(oracles::finite_difference_check(flat, value_at, analytic).max_rel_error < 1e-5);
    }
}

// ---- soft nearest neighbour ----

TEST_CASE("soft_nn of duplicated candidates returns the candidate") {
    Matrix q(2, 3);
    for (int c = 0; c < 3; ++c) q(0, c) = q(1, c) = 0.4 * (c + 1);
    const std::vector<double> p{1.0, -1.0, 0.5};
    const auto nn = soft_nn(p, q);
    for (int c = 0; c < 3; ++c) CHECK(nn[c] == Catch::Approx(q(0, c)).margin(1e-15));
}

TEST_CASE("soft_nn of equidistant candidates is their midpoint") {
    Matrix q(2, 2);
    q(0, 0) = 1.0, q(0, 1) = 0.0;
    q(1, 0) = -1.0, q(1, 1) = 0.0;
    const std::vector<double> p{0.0, 0.7};
    const auto nn = soft_nn(p, q);
    CHECK(nn[0] == Catch::Approx(0.0).margin(1e-15));
    CHECK(nn[1] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("soft_nn one-dimensional direct evaluation") {
    Matrix q(2, 1);
    q(0, 0) = 0.0;
    q(1, 0) = 2.0;
    const std::vector<double> p{0.0};
    const double w = std::exp(-4.0);
    const double expected = 2.0 * w / (1.0 + w); // approx 0.03596
    const auto nn = soft_nn(p, q);
    CHECK(nn[0] == Catch::Approx(expected).margin(1e-12));
    CHECK(nn[0] == Catch::Approx(0.0359).margin(1e-4));
}

// ---- inter-view ----

TEST_CASE("well-separated self-pair aligns index for index") {
    const int n = 6, d = 3;
    Matrix p(n, d);
    for (int i = 0; i < n; ++i) p(i, 0) = 10.0 * i;
    const auto res = inter_view_loss(p, p, 0.001);
    // quadratic part only: reconstruct per-index deviation
    for (int i = 0; i < n; ++i) {
        const auto qt = soft_nn(p.row(i), p);
        std::vector<double> b(n);
        for (int k = 0; k < n; ++k) b[k] = -squared_distance(qt, p.row(k));
        const double m = *std::max_element(b.begin(), b.end());
        double z = 0.0;
        for (double& v : b) z += (v = std::exp(v - m));
        double mu = 0.0;
        for (int k = 0; k < n; ++k) mu += k * b[k] / z;
        double var = 0.0;
        for (int k = 0; k < n; ++k) var += b[k] / z * (k - mu) * (k - mu);
        CHECK(std::abs(i - mu) * std::abs(i - mu) / (var + 1e-6) <= 1e-3);
    }
}

TEST_CASE("identical embeddings force the uniform-beta closed form") {
    const int n = 7, m = 5, d = 3;
    const double lambda = 0.001, eps = 1e-6;
    Matrix p(n, d, 0.4), q(m, d, 0.4);
    auto closed = [&](int len) {
        const double var = (static_cast<double>(len) * len - 1.0) / 12.0;
        return var / (var + eps) + 0.5 * lambda * std::log(var + eps);
    };
    const auto res = inter_view_loss(p, q, lambda, eps, true);
    CHECK(res.value == Catch::Approx(0.5 * (closed(n) + closed(m))).margin(1e-9));
}

TEST_CASE("inter-view loss equals the straight-line oracle to 1e-10") {
    Rng rng(44);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3 + rng.below_int(5);
        const int m = 2 + rng.below_int(5);
        const int d = 2 + rng.below_int(4);
        const auto p = oracles::random_matrix(n, d, rng);
        const auto q = oracles::random_matrix(m, d, rng);
        for (bool symmetric : {false, true}) {
            const auto res = inter_view_loss(p, q, 0.001, 1e-6, symmetric);
            const double naive = oracles::inter_view_naive(p, q, 0.001, 1e-6, symmetric);
            CHECK(std::abs(res.value - naive) < 1e-10);
        }
    }
}

TEST_CASE("inter-view gradient matches finite differences") {
    Rng rng(45);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 4 + rng.below_int(4);
        const int m = 3 + rng.below_int(4);
        const auto p = oracles::random_matrix(n, 3, rng, 0.8);
        const auto q = oracles::random_matrix(m, 3, rng, 0.8);
        const auto res = inter_view_loss(p, q, 0.001, 1e-6, true);

        std::vector<double> flat(p.size() + q.size());
        std::copy(p.data(), p.data() + p.size(), flat.begin());
        std::copy(q.data(), q.data() + q.size(), flat.begin() + p.size());
        std::vector<double> analytic(flat.size());
        std::copy(res.d_p.data(), res.d_p.data() + p.size(), analytic.begin());
        std::copy(res.d_q.data(), res.d_q.data() + q.size(), analytic.begin() + p.size());
        const auto value_at = [&](const std::vector<double>& v) {
            Matrix pp(p.rows(), p.cols()), qq(q.rows(), q.cols());
            std::copy(v.begin(), v.begin() + p.size(), pp.data());
            std::copy(v.begin() + p.size(), v.end(), qq.data());
            return inter_view_loss(pp, qq, 0.001, 1e-6, true).value;
        };
        CHECK(oracles::finite_difference_check(flat, value_at, analytic).max_rel_error < 1e-5);
    }
}

TEST_CASE("inter-view loss is invariant under reversing both sequences") {
    Rng rng(46);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 3 + rng.below_int(6);
        const int m = 2 + rng.below_int(6);
        const auto p = oracles::random_matrix(n, 3, rng);
        const auto q = oracles::random_matrix(m, 3, rng);
        Matrix pr(n, 3), qr(m, 3);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) pr(i, c) = p(n - 1 - i, c);
        for (int j = 0; j < m; ++j)
            for (int c = 0; c < 3; ++c) qr(j, c) = q(m - 1 - j, c);
        const double fwd = inter_view_loss(p, q, 0.001).value;
        const double rev = inter_view_loss(pr, qr, 0.001).value;
        CHECK(fwd == Catch::Approx(rev).margin(1e-10));
    }
}

TEST_CASE("loss values stay finite and correctly signed") {
    Rng rng(47);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3 + rng.below_int(8);
        const auto p = oracles::random_matrix(n, 4, rng, 3.0);
        const auto q = oracles::random_matrix(n, 4, rng, 3.0);
        const auto iv = inter_view_loss(p, q, 0.001);
        CHECK(std::isfinite(iv.value));
        const auto sp = spatial_intra_loss(p, 2);
        CHECK(std::isfinite(sp.value));

        const auto cfg = tiny_config();
        const auto params = init_params(cfg, trial);
        const auto emb = oracles::random_matrix(n, cfg.embed_dim, rng);
        const auto tm = temporal_intra_loss(params, emb, {{0, 1, 2, 1}, {2, 0, 1, 0}});
        CHECK(std::isfinite(tm.value));
        CHECK(tm.value >= 0.0);
    }
}

// ---- combined ----

namespace {

std::vector<PairBatchItem> make_batch(const EncoderConfig& cfg, Rng& rng, int pairs, int frames) {
    std::vector<PairBatchItem> batch;
    for (int b = 0; b < pairs; ++b) {
        PairBatchItem item;
        item.frames_a = oracles::random_matrix(frames, cfg.input_dim, rng);
        item.frames_b = oracles::random_matrix(frames, cfg.input_dim, rng);
        Rng trip_rng(900 + b);
        item.triplets_a = sample_triplets(item.frames_a, trip_rng, 8, 6, 7);
        item.triplets_b = sample_triplets(item.frames_b, trip_rng, 8, 6, 7);
        batch.push_back(std::move(item));
    }
    return batch;
}

} // namespace

TEST_CASE("combined loss with a single active weight is that loss") {
    const auto cfg = tiny_config();
    const auto params = init_params(cfg, 60);
    Rng rng(61);
    const auto batch = make_batch(cfg, rng, 2, 9);
    LossConfig lc;
    lc.alpha = 2;
    const auto inter_only = combined_loss(batch, params, {0.0, 0.0, 1.0}, lc);

    double expected = 0.0;
    for (const auto& item : batch) {
        const auto ea = forward(params, item.frames_a);
        const auto eb = forward(params, item.frames_b);
        expected += inter_view_loss(ea, eb, lc.lambda_reg, lc.eps_var, lc.symmetric_inter).value;
    }
    expected /= batch.size();
    CHECK(inter_only.value == Catch::Approx(expected).margin(1e-12));
    CHECK(inter_only.inter == Catch::Approx(expected).margin(1e-12));
    CHECK(inter_only.spatial == 0.0);
    CHECK(inter_only.temporal == 0.0);
}

TEST_CASE("combined loss defaults and homogeneity") {
    const LossWeights defaults;
    CHECK(defaults.w_spatial == 0.25);
    CHECK(defaults.w_temporal == 0.25);
    CHECK(defaults.w_inter == 0.5);

    const auto cfg = tiny_config();
    const auto params = init_params(cfg, 62);
    Rng rng(63);
    const auto batch = make_batch(cfg, rng, 2, 9);
    LossConfig lc;
    lc.alpha = 2;
    const auto base = combined_loss(batch, params, {0.2, 0.3, 0.5}, lc);
    const auto doubled = combined_loss(batch, params, {0.4, 0.6, 1.0}, lc);
    CHECK(doubled.value == Catch::Approx(2.0 * base.value).margin(1e-10));
    for (size_t i = 0; i < base.grad.size(); ++i)
        CHECK(doubled.grad[i] == Catch::Approx(2.0 * base.grad[i]).margin(1e-9));
}

TEST_CASE("combined loss rejects all-zero weights and empty batches") {
    const auto cfg = tiny_config();
    const auto params = init_params(cfg, 64);
    Rng rng(65);
    const auto batch = make_batch(cfg, rng, 1, 8);
    CHECK_THROWS_AS(combined_loss(batch, params, {0.0, 0.0, 0.0}, LossConfig{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(combined_loss({}, params, LossWeights{}, LossConfig{}), std::invalid_argument);
}

TEST_CASE("combined loss is identical for any thread count") {
    const auto cfg = tiny_config();
    const auto params = init_params(cfg, 66);
    Rng rng(67);
    const auto batch = make_batch(cfg, rng, 4, 10);
    LossConfig seq;
    seq.alpha = 2;
    LossConfig par = seq;
    par.threads = 4;
    const auto a = combined_loss(batch, params, LossWeights{}, seq);
    const auto b = combined_loss(batch, params, LossWeights{}, par);
    CHECK(a.value == b.value);
    CHECK(a.grad == b.grad);
}
