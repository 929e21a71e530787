#include <catch_amalgamated.hpp>

#include "cinesync/encoder.hpp"
#include "cinesync/rng.hpp"
#include "support/oracles.hpp"

using namespace cinesync;

namespace {

EncoderConfig small_config() {
    EncoderConfig cfg;
    cfg.input_dim = 5;
    cfg.hidden_dim = 6;
    cfg.context = 3;
    cfg.agg_hidden = 6;
    cfg.embed_dim = 4;
    cfg.cls_hidden1 = 6;
    cfg.cls_hidden2 = 4;
    return cfg;
}

/// Margin of every pre-activation from the ReLU kink; gradient checks skip
/// instances that sit too close for the finite-difference step.
double relu_margin(const EncoderParams& p, const Matrix& frames) {
    const auto tr = forward_trace(p, frames);
    double margin = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < tr.z1.size(); ++i) margin = std::min(margin, std::abs(tr.z1.data()[i]));
    for (size_t i = 0; i < tr.z2.size(); ++i) margin = std::min(margin, std::abs(tr.z2.data()[i]));
    return margin;
}

} // namespace

TEST_CASE("init_params is deterministic and correctly shaped") {
    EncoderConfig cfg;
    cfg.input_dim = 24;
    const auto a = init_params(cfg, 123);
    const auto b = init_params(cfg, 123);
    CHECK(a.flatten() == b.flatten());
    const auto c = init_params(cfg, 124);
    CHECK(a.flatten() != c.flatten());
}

TEST_CASE("flattened length matches the declared shapes") {
    EncoderConfig cfg;
    cfg.input_dim = 24;
    cfg.hidden_dim = 32;
    cfg.context = 5;
    cfg.agg_hidden = 32;
    cfg.embed_dim = 16;
    cfg.cls_hidden1 = 32;
    cfg.cls_hidden2 = 16;
    const size_t expected = 24 * 32 + 32 + (5 * 32) * 32 + 32 + 32 * 16 + 16 // encoder
                            + (3 * 16) * 32 + 32 + 32 * 16 + 16 + 16 * 2 + 2; // classifier
    CHECK(EncoderParams::count(cfg) == expected);
    CHECK(init_params(cfg, 0).flatten().size() == expected);
}

TEST_CASE("first-layer weights follow the 1/sqrt(fan_in) scale") {
    EncoderConfig cfg;
    cfg.input_dim = 24;
    cfg.hidden_dim = 420; // 24*420 > 10k samples
    const auto params = init_params(cfg, 5);
    double sq = 0.0;
    for (size_t i = 0; i < params.w1.size(); ++i) sq += params.w1.data()[i] * params.w1.data()[i];
    const double std_obs = std::sqrt(sq / params.w1.size());
    const double target = 1.0 / std::sqrt(24.0);
    CHECK(std_obs == Catch::Approx(target).epsilon(0.2));
}

TEST_CASE("flatten/unflatten is a bijection") {
    const auto cfg = small_config();
    const auto params = init_params(cfg, 77);
    const auto flat = params.flatten();
    const auto back = EncoderParams::unflatten(cfg, flat);
    CHECK(back.flatten() == flat);
    CHECK_THROWS_AS(EncoderParams::unflatten(cfg, std::vector<double>(flat.size() + 1, 0.0)),
                    ShapeError);
}

TEST_CASE("forward shape and basic contracts") {
    EncoderConfig cfg;
    cfg.input_dim = 24;
    const auto params = init_params(cfg, 3);
    Rng rng(6);
    const auto frames = oracles::random_matrix(7, 24, rng);
    const auto emb = forward(params, frames);
    CHECK(emb.rows() == 7);
    CHECK(emb.cols() == 16);

    const auto zero = EncoderParams::zeros(cfg);
    const auto zero_emb = forward(zero, frames);
    for (size_t i = 0; i < zero_emb.size(); ++i) CHECK(zero_emb.data()[i] == 0.0);

    Matrix constant(6, 24);
    for (size_t i = 0; i < constant.size(); ++i) constant.data()[i] = 0.37;
    const auto const_emb = forward(params, constant);
    for (int r = 1; r < const_emb.rows(); ++r)
        for (int c = 0; c < const_emb.cols(); ++c)
            CHECK(const_emb(r, c) == const_emb(0, c));

    CHECK_THROWS_AS(forward(params, Matrix(4, 9)), ShapeError);
}

TEST_CASE("forward is pure: identical inputs give identical bits") {
    const auto cfg = small_config();
    const auto params = init_params(cfg, 11);
    Rng rng(12);
    const auto frames = oracles::random_matrix(9, cfg.input_dim, rng);
    CHECK(forward(params, frames) == forward(params, frames));
}

TEST_CASE("interior frames are insensitive to appended frames") {
    const auto cfg = small_config(); // context 3 -> one boundary frame each side
    const auto params = init_params(cfg, 21);
    Rng rng(22);
    const auto frames = oracles::random_matrix(8, cfg.input_dim, rng);
    Matrix extended(10, cfg.input_dim);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < cfg.input_dim; ++c) extended(r, c) = frames(r, c);
    for (int r = 8; r < 10; ++r)
        for (int c = 0; c < cfg.input_dim; ++c) extended(r, c) = rng.normal();
    const auto emb = forward(params, frames);
    const auto emb_ext = forward(params, extended);
    for (int r = 1; r < 7; ++r) // interior of the original sequence
        for (int c = 0; c < cfg.embed_dim; ++c) CHECK(emb(r, c) == emb_ext(r, c));
}

TEST_CASE("classifier zero parameters give even odds") {
    const auto cfg = small_config();
    const auto zero = EncoderParams::zeros(cfg);
    std::vector<double> e(cfg.embed_dim, 0.3);
    const auto logits = forward_classifier(zero, e, e, e);
    CHECK(logits[0] == 0.0);
    CHECK(logits[1] == 0.0);
    CHECK(sorted_probability(logits) == 0.5);
}

TEST_CASE("classifier matches a hand-rolled affine/ReLU chain") {
    EncoderConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden_dim = 2;
    cfg.context = 1;
    cfg.agg_hidden = 2;
    cfg.embed_dim = 1;
    cfg.cls_hidden1 = 2;
    cfg.cls_hidden2 = 2;
    auto p = EncoderParams::zeros(cfg);
    // wc1: 2x3, wc2: 2x2, wc3: 2x2
    p.wc1(0, 0) = 0.5, p.wc1(0, 1) = -1.0, p.wc1(0, 2) = 0.25;
    p.wc1(1, 0) = -0.5, p.wc1(1, 1) = 0.75, p.wc1(1, 2) = 1.5;
    p.bc1 = {0.1, -0.2};
    p.wc2(0, 0) = 1.0, p.wc2(0, 1) = 2.0, p.wc2(1, 0) = -1.0, p.wc2(1, 1) = 0.5;
    p.bc2 = {0.0, 0.3};
    p.wc3(0, 0) = 0.2, p.wc3(0, 1) = -0.4, p.wc3(1, 0) = 0.6, p.wc3(1, 1) = 0.8;
    p.bc3 = {0.05, -0.05};

    const std::vector<double> e1{1.0}, e2{-2.0}, e3{0.5};
    // straight-line evaluation
    const double z1a = 0.5 * 1.0 + -1.0 * -2.0 + 0.25 * 0.5 + 0.1;  // 2.725
    const double z1b = -0.5 * 1.0 + 0.75 * -2.0 + 1.5 * 0.5 - 0.2;  // -1.45
    const double a1a = std::max(0.0, z1a), a1b = std::max(0.0, z1b);
    const double z2a = 1.0 * a1a + 2.0 * a1b + 0.0;
    const double z2b = -1.0 * a1a + 0.5 * a1b + 0.3;
    const double a2a = std::max(0.0, z2a), a2b = std::max(0.0, z2b);
    const double l0 = 0.2 * a2a + -0.4 * a2b + 0.05;
    const double l1 = 0.6 * a2a + 0.8 * a2b - 0.05;

    const auto logits = forward_classifier(p, e1, e2, e3);
    CHECK(logits[0] == Catch::Approx(l0).margin(1e-15));
    CHECK(logits[1] == Catch::Approx(l1).margin(1e-15));
}

TEST_CASE("backward with zero upstream gradient is zero") {
    const auto cfg = small_config();
    const auto params = init_params(cfg, 31);
    Rng rng(32);
    const auto frames = oracles::random_matrix(6, cfg.input_dim, rng);
    const auto grads = backward(params, frames, Matrix(6, cfg.embed_dim));
    for (double g : grads.flatten()) CHECK(g == 0.0);
}

TEST_CASE("single-frame scalar network matches the hand derivation") {
    EncoderConfig cfg;
    cfg.input_dim = 1;
    cfg.hidden_dim = 1;
    cfg.context = 1;
    cfg.agg_hidden = 1;
    cfg.embed_dim = 1;
    cfg.cls_hidden1 = 1;
    cfg.cls_hidden2 = 1;
    auto p = EncoderParams::zeros(cfg);
    const double w1 = 0.8, b1 = 0.1, w2 = -1.2, b2 = 2.0, w3 = 0.7, b3 = -0.3, x = 1.5, g = 2.0;
    p.w1(0, 0) = w1;
    p.b1[0] = b1;
    p.w2(0, 0) = w2;
    p.b2[0] = b2;
    p.w3(0, 0) = w3;
    p.b3[0] = b3;
    Matrix frames(1, 1);
    frames(0, 0) = x;
    Matrix upstream(1, 1);
    upstream(0, 0) = g;

    // forward chain: z1 = w1 x + b1 (positive), u = z1; z2 = w2 u + b2
    const double z1 = w1 * x + b1;             // 1.3
    const double z2 = w2 * z1 + b2;            // 0.44 > 0
    REQUIRE(z1 > 0.0);
    REQUIRE(z2 > 0.0);
    const auto grads = backward(p, frames, upstream);
    CHECK(grads.b3[0] == Catch::Approx(g).margin(1e-15));
    CHECK(grads.w3(0, 0) == Catch::Approx(g * z2).margin(1e-15));
    CHECK(grads.b2[0] == Catch::Approx(g * w3).margin(1e-15));
    CHECK(grads.w2(0, 0) == Catch::Approx(g * w3 * z1).margin(1e-15));
    CHECK(grads.b1[0] == Catch::Approx(g * w3 * w2).margin(1e-15));
    CHECK(grads.w1(0, 0) == Catch::Approx(g * w3 * w2 * x).margin(1e-12));
}

TEST_CASE("encoder backward matches finite differences") {
    Rng rng(55);
    int checked = 0;
    for (int trial = 0; trial < 40 && checked < 5; ++trial) {
        const auto cfg = small_config();
        const auto params = init_params(cfg, 100 + trial);
        const auto frames = oracles::random_matrix(5, cfg.input_dim, rng);
        if (relu_margin(params, frames) < 1e-4) continue; // too close to a kink for fd
        const auto upstream = oracles::random_matrix(5, cfg.embed_dim, rng);

        const auto analytic = backward(params, frames, upstream).flatten();
        const auto value_at = [&](const std::vector<double>& flat) {
            const auto p = EncoderParams::unflatten(cfg, flat);
            const auto emb = forward(p, frames);
            double v = 0.0;
            for (size_t i = 0; i < emb.size(); ++i) v += emb.data()[i] * upstream.data()[i];
            return v;
        };
        const auto report = oracles::finite_difference_check(params.flatten(), value_at, analytic);
        INFO("trial " << trial << " max rel err " << report.max_rel_error);
        CHECK(report.max_rel_error < 1e-5);
        ++checked;
    }
    CHECK(checked == 5);
}
