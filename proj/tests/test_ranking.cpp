#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "trajsim/error.hpp"
#include "trajsim/ranking.hpp"

using namespace trajsim;
using gradcheck::random_tensor;

namespace {

std::vector<double> random_list(std::mt19937_64& rng, std::size_t k, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    std::vector<double> v(k);
    for (double& x : v) x = n(rng);
    return v;
}

std::vector<std::size_t> argsort_desc(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    return idx;
}

}  // namespace

TEST_CASE("similarity from distance") {
    DistanceMatrix d(3, Metric::sspd);
    d(0, 1) = d(1, 0) = 2.0;
    d(0, 2) = d(2, 0) = 0.5;
    d(1, 2) = d(2, 1) = 0.0;
    const Tensor s = similarity_from_distance(d, 2.0);
    CHECK(s(0, 0) == 1.0);
    CHECK(s(1, 2) == 1.0);
    CHECK(s(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(s(0, 2) > s(0, 1));
    CHECK_THROWS_AS(similarity_from_distance(d, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(similarity_from_distance(d, -1.0), std::invalid_argument);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    DistanceMatrix big(8, Metric::sspd);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = i + 1; j < 8; ++j) big(i, j) = big(j, i) = u(rng);
    }
    const Tensor sb = similarity_from_distance(big, 3.0);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t a = 0; a < 8; ++a) {
            for (std::size_t b = 0; b < 8; ++b) {
                if (a != i && b != i && big(i, a) < big(i, b)) {
                    CHECK(sb(i, a) > sb(i, b));
                }
            }
        }
    }
}

TEST_CASE("loss configuration") {
    LossConfig cfg;
    DistanceMatrix d(3, Metric::sspd);
    d(0, 1) = d(1, 0) = 1.0;
    d(0, 2) = d(2, 0) = 2.0;
    d(1, 2) = d(2, 1) = 3.0;
    CHECK(cfg.resolve_tau(d) == doctest::Approx(2.0));
    cfg.tau_mode = TauMode::fixed;
    cfg.tau_value = 0.5;
    CHECK(cfg.resolve_tau(d) == 0.5);
    CHECK(parse_tau_mode("fixed") == TauMode::fixed);
    CHECK_THROWS_AS(parse_tau_mode("median"), ConfigError);
    LossWeights w{-0.1, 0.0};
    CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("mse loss") {
    const Tensor a = Tensor::from_rows({{1.0, 0.5}, {0.2, 1.0}});
    const Tensor b = Tensor::from_rows({{1.0, 0.3}, {0.6, 1.0}});
    CHECK(mse_loss(a, a) == 0.0);
    // ((0.5 - 0.3)^2 + (0.2 - 0.6)^2) / 2
    CHECK(mse_loss(a, b) == doctest::Approx(0.1).epsilon(1e-14));
    Tensor shifted = b;
    for (auto& v : shifted.values()) v += 0.25;
    CHECK(mse_loss(shifted, b) == doctest::Approx(0.0625).epsilon(1e-14));
    CHECK_THROWS_AS(mse_loss(a, Tensor(3, 3)), ShapeError);
}

TEST_CASE("listnet") {
    const double ln3 = std::log(3.0);
    CHECK(listnet_loss(std::vector<double>{0, 0}, std::vector<double>{0, ln3}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(listnet_loss(std::vector<double>{1}, std::vector<double>{1}), std::invalid_argument);
    CHECK_THROWS_AS(listnet_loss(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), ShapeError);

    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 2 + static_cast<std::size_t>(trial % 20);
        const auto r = random_list(rng, k, 2.0);
        const auto s = random_list(rng, k, 2.0);
        CHECK(std::abs(listnet_loss(r, r) - softmax_entropy(r)) < 1e-12);
        CHECK(listnet_loss(s, r) >= softmax_entropy(r) - 1e-12);
        auto shifted = s;
        for (double& v : shifted) v += 17.5;
        CHECK(std::abs(listnet_loss(shifted, r) - listnet_loss(s, r)) < 1e-12);
        CHECK(std::abs(rd_listnet_loss(shifted, r) - rd_listnet_loss(s, r)) < 1e-12);
    }
}

TEST_CASE("rank-decay weights") {
    const auto w = rank_decay_weights(std::vector<double>{0.2, 0.9, 0.5});
    CHECK(w[1] == 1.0);
    CHECK(w[2] == 1.0 / std::log2(3.0));
    CHECK(w[0] == 0.5);

    // Ties keep index order.
    const auto tied = rank_decay_weights(std::vector<double>{0.5, 0.5, 0.5});
    CHECK(tied[0] == 1.0);
    CHECK(tied[1] == 1.0 / std::log2(3.0));
    CHECK(tied[2] == 0.5);

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const auto r = random_list(rng, 12);
        const auto wr = rank_decay_weights(r);
        const auto order = argsort_desc(r);
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            CHECK(wr[order[pos]] > 0.0);
            if (pos > 0) {
                CHECK(wr[order[pos]] <= wr[order[pos - 1]]);
            }
        }
    }
}

TEST_CASE("rd-listnet") {
    const std::vector<double> r{0.2, 0.9, 0.5};
    const std::vector<double> s{0.1, 0.3, 0.7};
    CHECK(rd_listnet_loss(s, r) == doctest::Approx(0.8681181141213155).epsilon(1e-14));
    CHECK(listnet_loss(s, r) == doctest::Approx(1.119211817544808).epsilon(1e-14));

    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const auto rr = random_list(rng, 9);
        const auto ss = random_list(rng, 9);
        const std::vector<double> ones(9, 1.0);
        CHECK(std::abs(weighted_listnet_loss(ss, rr, ones) - listnet_loss(ss, rr)) < 1e-12);
    }
    CHECK_THROWS_AS(rd_listnet_loss(std::vector<double>{1}, std::vector<double>{1}), std::invalid_argument);
}

TEST_CASE("total loss") {
    const LossWeights defaults;
    CHECK(defaults.gamma1 == 0.1);
    CHECK(defaults.gamma2 == 0.001);
    CHECK(total_loss(0.3, 5.0, 7.0, {0.0, 0.0}) == 0.3);
    CHECK(total_loss(0.3, 5.0, 7.0, defaults) == 0.3 + 0.1 * 5.0 + 0.001 * 7.0);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const auto v = random_list(rng, 3);
        CHECK(total_loss(2 * v[0], 2 * v[1], 2 * v[2], defaults) == 2 * total_loss(v[0], v[1], v[2], defaults));
    }
}

TEST_CASE("batch loss agrees with the list functions") {
    std::mt19937_64 rng(6);
    const std::size_t b = 6;
    const Tensor h = random_tensor(rng, b, 4);
    Tensor target(b, b, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = i + 1; j < b; ++j) target(i, j) = target(j, i) = u(rng);
    }
    Graph g;
    Var hv = g.constant(h);
    const BatchLoss loss = batch_loss(hv, target, LossWeights{});
    const Tensor s = predicted_similarity(hv).value();

    double ln = 0.0;
    double rd = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        std::vector<double> si;
        std::vector<double> ri;
        for (std::size_t j = 0; j < b; ++j) {
            if (j != i) {
                si.push_back(s(i, j));
                ri.push_back(target(i, j));
            }
        }
        ln += listnet_loss(si, ri) / b;
        rd += rd_listnet_loss(si, ri) / b;
    }
    CHECK(loss.mse == doctest::Approx(mse_loss(s, target)).epsilon(1e-12));
    CHECK(loss.listnet == doctest::Approx(ln).epsilon(1e-12));
    CHECK(loss.rd_listnet == doctest::Approx(rd).epsilon(1e-12));
    CHECK(loss.total.value().item() == doctest::Approx(total_loss(loss.mse, ln, rd, LossWeights{})).epsilon(1e-12));
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            double dist = 0.0;
            for (std::size_t c = 0; c < 4; ++c) dist += (h(i, c) - h(j, c)) * (h(i, c) - h(j, c));
            if (i != j) CHECK(s(i, j) == doctest::Approx(std::exp(-std::sqrt(dist))).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(batch_loss(g.constant(Tensor(2, 4)), Tensor(2, 2), LossWeights{}), std::invalid_argument);
    CHECK_THROWS_AS(batch_loss(hv, Tensor(5, 5), LossWeights{}), ShapeError);
}

TEST_CASE("loss gradients match finite differences") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::mt19937_64 rng(seed);
        const Tensor h = random_tensor(rng, 5, 3);
        Tensor target(5, 5, 1.0);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = i + 1; j < 5; ++j) target(i, j) = target(j, i) = u(rng);
        }
        for (const LossWeights w : {LossWeights{0, 0}, LossWeights{1, 0}, LossWeights{0, 1}, LossWeights{}}) {
            const auto res = gradcheck::check_op(
                {h}, [&](Graph&, std::vector<Var>& v) { return batch_loss(v[0], target, w).total; }, seed);
            CHECK(res.max_rel_error < 1e-3);
        }
    }
}

TEST_CASE("gradient descent on listnet recovers the target order") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = 2 + static_cast<std::size_t>(trial % 4);
        const auto r = random_list(rng, k, 2.0);
        Tensor s(1, k);
        const Tensor r_row = Tensor::matrix(1, k, r);
        for (int step = 0; step < 3000; ++step) {
            Graph g;
            Var sv = g.variable(s);
            Var p_r = ad::softmax_rows(g.constant(r_row));
            Var loss = ad::scale(ad::sum(ad::mul(p_r, ad::log_softmax_rows(sv))), -1.0);
            g.backward(loss);
            const Tensor grad = g.grad(sv);
            for (std::size_t i = 0; i < k; ++i) s[i] -= 1.0 * grad[i];
        }
        const std::vector<double> sv(s.values().begin(), s.values().end());
        CHECK(argsort_desc(sv) == argsort_desc(r));
    }
}
