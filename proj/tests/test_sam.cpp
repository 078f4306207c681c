#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "sam_oracle.hpp"
#include "trajsim/error.hpp"
#include "trajsim/sam.hpp"

using namespace trajsim;
using gradcheck::random_tensor;

namespace {

SamConfig small_config(std::size_t d = 4, std::size_t heads = 2, std::size_t layers = 1) {
    SamConfig cfg;
    cfg.d = d;
    cfg.d_hid = 2 * d;
    cfg.heads = heads;
    cfg.layers = layers;
    return cfg;
}

oracle::SaaParams oracle_params(const ParamStore& p, std::size_t layer, Direction dir) {
    auto m = [&](const char* leaf) { return oracle::to_mat(p.value(SamEncoder::param_name(layer, dir, leaf))); };
    auto v = [&](const char* leaf) { return oracle::row0(p.value(SamEncoder::param_name(layer, dir, leaf))); };
    return {m("wq"),        m("wk"),       m("wv"),       m("ffn.w1"),   m("ffn.w2"), v("ffn.b1"),
            v("ffn.b2"),    v("norm.gain"), v("norm.bias"), v("lambda_q"), v("lambda_k"), v("lambda_v")};
}

// Copies every grid-direction parameter onto its GPS twin.
void tie_directions(ParamStore& p, std::size_t layers) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        const std::string& name = p.name(i);
        for (std::size_t l = 0; l < layers; ++l) {
            const std::string prefix = "layer" + std::to_string(l) + ".gps.";
            if (name.rfind(prefix, 0) == 0) {
                p.value(i) = p.value(SamEncoder::param_name(l, Direction::grid, name.substr(prefix.size())));
            }
        }
    }
}

void check_close(const Tensor& a, const oracle::Mat& b, double tol) {
    REQUIRE(a.rows() == b.size());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) {
            CHECK(std::abs(a(r, c) - b[r][c]) < tol);
        }
    }
}

}  // namespace

TEST_CASE("config validation") {
    CHECK_NOTHROW(SamConfig{}.validate());
    SamConfig cfg;
    cfg.heads = 5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SamConfig{};
    cfg.epsilon = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SamConfig{};
    cfg.layers = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(parse_pre_encoder("lstm") == PreEncoderKind::lstm);
    CHECK_THROWS_AS(parse_pre_encoder("gru"), ConfigError);
}

TEST_CASE("feature extraction") {
    const GridSpec grid = make_grid({0.0, 0.01, 0.0, 0.01}, 100.0);
    Trajectory t{"a", {{0.0, 0.0}, {0.005, 0.0025}, {0.01, 0.01}}};
    const TrajectoryFeatures f = extract_features(t, grid);
    CHECK(f.gps(0, 0) == 0.0);
    CHECK(f.gps(1, 0) == doctest::Approx(0.5));
    CHECK(f.gps(1, 1) == doctest::Approx(0.25));
    CHECK(f.gps(2, 1) == doctest::Approx(1.0));
    CHECK(f.grid(0, 0) == doctest::Approx(1.0 / grid.rows));
    CHECK(f.grid(2, 0) == doctest::Approx(1.0));
    CHECK(f.grid(2, 1) == doctest::Approx(1.0));
    GridSequence short_cells(2, GridCell{1, 1});
    CHECK_THROWS_AS(extract_features(t, short_cells, grid), std::invalid_argument);
}

TEST_CASE("pre-encoder") {
    SUBCASE("zero weights give zero output") {
        for (auto kind : {PreEncoderKind::linear, PreEncoderKind::lstm}) {
            SamConfig cfg = small_config();
            cfg.pre_encoder = kind;
            SamEncoder enc(cfg);
            ParamStore p = enc.make_params(1);
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (p.name(i).rfind("pe.", 0) == 0) {
                    p.value(i).fill(0.0);
                }
            }
            Graph g;
            const Tensor out = enc.pre_encode(g, p, g.constant(Tensor::from_rows({{0.2, 0.9}, {0.4, 0.1}}))).value();
            CHECK(out == Tensor(2, 4));
        }
    }
    SUBCASE("identity linear map reproduces the input") {
        SamConfig cfg = small_config(2, 1);
        SamEncoder enc(cfg);
        ParamStore p = enc.make_params(1);
        p.value("pe.linear.weight") = Tensor::from_rows({{1, 0}, {0, 1}});
        Graph g;
        const Tensor e = Tensor::from_rows({{0.2, 0.9}, {0.4, 0.1}, {0.7, 0.3}});
        CHECK(enc.pre_encode(g, p, g.constant(e)).value() == e);
    }
    SUBCASE("lstm returns one row per step and is order sensitive") {
        SamConfig cfg = small_config();
        cfg.pre_encoder = PreEncoderKind::lstm;
        SamEncoder enc(cfg);
        ParamStore p = enc.make_params(2);
        Graph g;
        const Tensor e = Tensor::from_rows({{0.1, 0.2}, {0.8, 0.4}, {0.5, 0.9}});
        const Tensor rev = Tensor::from_rows({{0.5, 0.9}, {0.8, 0.4}, {0.1, 0.2}});
        const Tensor a = enc.pre_encode(g, p, g.constant(e)).value();
        CHECK(a.rows() == 3);
        CHECK(a.cols() == 4);
        const Tensor b = enc.pre_encode(g, p, g.constant(rev)).value();
        double gap = 0.0;
        for (std::size_t c = 0; c < 4; ++c) gap += std::abs(a(2, c) - b(0, c));
        CHECK(gap > 1e-6);
    }
    SUBCASE("wrong channel count") {
        SamEncoder enc(small_config());
        ParamStore p = enc.make_params(1);
        Graph g;
        CHECK_THROWS_AS(enc.pre_encode(g, p, g.constant(Tensor(3, 3))), ShapeError);
    }
}

TEST_CASE("saa matches the straight-line oracle") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 rng(seed);
        SamEncoder enc(small_config(4, 2));
        ParamStore p = enc.make_params(seed);
        // Larger lambdas than the initializer so the fusion weights differ from 1.
        for (const char* leaf : {"lambda_q", "lambda_k", "lambda_v"}) {
            p.value(SamEncoder::param_name(0, Direction::gps, leaf)) = random_tensor(rng, 1, 4, 0.7);
        }
        const Tensor zq = random_tensor(rng, 3, 4);
        const Tensor zs = random_tensor(rng, 3, 4);
        Graph g;
        const SaaWeights w = enc.saa_weights(g, p, 0, Direction::gps);
        AttentionTrace trace;
        const Tensor attn = enc.attention(g.constant(zq), g.constant(zs), w).value();
        const Tensor full = enc.saa(g.constant(zq), g.constant(zs), w, &trace).value();
        const oracle::SaaParams op = oracle_params(p, 0, Direction::gps);
        const oracle::Mat expected_attn = oracle::saa_attention(oracle::to_mat(zq), oracle::to_mat(zs), op, 2);
        check_close(attn, expected_attn, 1e-12);
        check_close(full, oracle::ffn_norm(expected_attn, op), 1e-10);

        CHECK(trace.cross.size() == 2);
        CHECK(trace.lambda_cross > 0.0);
        CHECK(trace.lambda_self > 0.0);
        for (const auto* set : {&trace.cross, &trace.self}) {
            for (const Tensor& a : *set) {
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    double total = 0.0;
                    for (std::size_t c = 0; c < a.cols(); ++c) total += a(r, c);
                    CHECK(std::abs(total - 1.0) < 1e-10);
                }
            }
        }
    }
}

TEST_CASE("saa special cases") {
    SamEncoder enc(small_config(4, 2));
    ParamStore p = enc.make_params(3);
    std::mt19937_64 rng(3);

    SUBCASE("zero lambdas give unit fusion weights") {
        for (const char* leaf : {"lambda_q", "lambda_k", "lambda_v"}) {
            p.value(SamEncoder::param_name(0, Direction::gps, leaf)).fill(0.0);
        }
        Graph g;
        const SaaWeights w = enc.saa_weights(g, p, 0, Direction::gps);
        auto [cross, self] = enc.fusion_weights(w);
        CHECK(cross.value().item() == 1.0);
        CHECK(self.value().item() == 1.0);
    }
    SUBCASE("single position attends to itself") {
        Graph g;
        AttentionTrace trace;
        const SaaWeights w = enc.saa_weights(g, p, 0, Direction::gps);
        enc.saa(g.constant(random_tensor(rng, 1, 4)), g.constant(random_tensor(rng, 1, 4)), w, &trace);
        for (const Tensor& a : trace.cross) CHECK(a == Tensor(1, 1, 1.0));
        for (const Tensor& a : trace.self) CHECK(a == Tensor(1, 1, 1.0));
    }
    SUBCASE("shape mismatch") {
        Graph g;
        const SaaWeights w = enc.saa_weights(g, p, 0, Direction::gps);
        CHECK_THROWS_AS(enc.saa(g.constant(Tensor(3, 4)), g.constant(Tensor(2, 4)), w), ShapeError);
        CHECK_THROWS_AS(enc.saa(g.constant(Tensor(3, 3)), g.constant(Tensor(3, 3)), w), ShapeError);
    }
}

TEST_CASE("dual layer") {
    SamEncoder enc(small_config(4, 2, 2));
    ParamStore p = enc.make_params(4);
    std::mt19937_64 rng(4);
    const Tensor a = random_tensor(rng, 3, 4);
    const Tensor b = random_tensor(rng, 3, 4);

    SUBCASE("equals two saa calls on the previous layer") {
        Graph g;
        auto [ga, gb] = enc.dual_layer(g, p, 1, g.constant(a), g.constant(b));
        const Tensor manual_gps = enc.saa(g.constant(a), g.constant(b), enc.saa_weights(g, p, 1, Direction::gps)).value();
        const Tensor manual_grid =
            enc.saa(g.constant(b), g.constant(a), enc.saa_weights(g, p, 1, Direction::grid)).value();
        CHECK(ga.value() == manual_gps);
        CHECK(gb.value() == manual_grid);
    }
    SUBCASE("tied weights: swapping inputs swaps outputs") {
        tie_directions(p, 2);
        Graph g;
        auto [x1, y1] = enc.dual_layer(g, p, 0, g.constant(a), g.constant(b));
        auto [x2, y2] = enc.dual_layer(g, p, 0, g.constant(b), g.constant(a));
        CHECK(x1.value() == y2.value());
        CHECK(y1.value() == x2.value());
        auto [s1, s2] = enc.dual_layer(g, p, 0, g.constant(a), g.constant(a));
        CHECK(s1.value() == s2.value());
    }
    SUBCASE("misaligned inputs") {
        Graph g;
        CHECK_THROWS_AS(enc.dual_layer(g, p, 0, g.constant(Tensor(3, 4)), g.constant(Tensor(2, 4))), ShapeError);
    }
}

TEST_CASE("encode") {
    std::mt19937_64 rng(5);
    const Tensor gps = random_tensor(rng, 5, 2);
    const Tensor grid = random_tensor(rng, 5, 2);

    SUBCASE("fusion weight near one follows the GPS branch") {
        SamConfig cfg = small_config(4, 2);
        cfg.epsilon = 1.0 - 1e-12;
        SamEncoder enc(cfg);
        ParamStore p = enc.make_params(6);
        Graph g;
        Var z_gps = enc.pre_encode(g, p, g.constant(gps));
        Var z_grid = enc.pre_encode(g, p, g.constant(grid));
        auto [out_gps, out_grid] = enc.dual_layer(g, p, 0, z_gps, z_grid);
        const Tensor seq = enc.encode_sequence(g, p, g.constant(gps), g.constant(grid)).value();
        for (std::size_t i = 0; i < seq.size(); ++i) {
            CHECK(std::abs(seq[i] - out_gps.value()[i]) < 1e-10);
        }
    }
    SUBCASE("constant trajectory pools to any single position") {
        SamEncoder enc(small_config(4, 2));
        ParamStore p = enc.make_params(7);
        Tensor same_gps(4, 2);
        Tensor same_grid(4, 2);
        for (std::size_t r = 0; r < 4; ++r) {
            same_gps(r, 0) = 0.3;
            same_gps(r, 1) = 0.6;
            same_grid(r, 0) = 0.25;
            same_grid(r, 1) = 0.5;
        }
        Graph g;
        const Tensor seq = enc.encode_sequence(g, p, g.constant(same_gps), g.constant(same_grid)).value();
        const Tensor pooled = enc.encode(g, p, g.constant(same_gps), g.constant(same_grid)).value();
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(std::abs(pooled[c] - seq(2, c)) < 1e-12);
        }
    }
    SUBCASE("embedding has length d and is deterministic") {
        SamEncoder enc(SamConfig{});
        ParamStore p = enc.make_params(8);
        const Tensor e = enc.embed(p, {gps, grid});
        CHECK(e.rows() == 1);
        CHECK(e.cols() == 64);
        CHECK(e == enc.embed(p, {gps, grid}));
        CHECK(e.all_finite());
        CHECK(enc.make_params(8) == p);
    }
    SUBCASE("misaligned channels") {
        SamEncoder enc(small_config());
        ParamStore p = enc.make_params(1);
        Graph g;
        CHECK_THROWS_AS(enc.encode(g, p, g.constant(Tensor(5, 2)), g.constant(Tensor(4, 2))), ShapeError);
    }
}

TEST_CASE("encode gradients match finite differences") {
    for (auto kind : {PreEncoderKind::linear, PreEncoderKind::lstm}) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            SamConfig cfg = small_config(8, 2);
            cfg.pre_encoder = kind;
            SamEncoder enc(cfg);
            ParamStore p = enc.make_params(seed);
            std::mt19937_64 rng(seed + 100);
            const Tensor gps = random_tensor(rng, 5, 2);
            const Tensor grid = random_tensor(rng, 5, 2);
            const Tensor proj = random_tensor(rng, 1, 8);
            auto loss = [&](const ParamStore& store, Gradients* grads) {
                Graph g;
                Var h = enc.encode(g, store, g.constant(gps), g.constant(grid));
                Var l = ad::sum(ad::mul(h, g.constant(proj)));
                if (grads) {
                    g.backward(l);
                    g.accumulate_param_grads(*grads);
                }
                return l.value().item();
            };
            const auto res = gradcheck::check_params(p, loss);
            CAPTURE(res.worst);
            CHECK(res.max_rel_error < 1e-3);
        }
    }
}
