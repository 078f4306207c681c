#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "trajsim/retrieval.hpp"

using namespace trajsim;

namespace {

Ranking make(std::vector<std::string> ids) { return Ranking{"q", std::move(ids), {}}; }

std::vector<std::string> names(std::size_t n) {
    std::vector<std::string> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back("t" + std::to_string(1000 + i));
    return v;
}

// Line embeddings with the matching absolute-difference truth matrix.
struct LineFixture {
    std::vector<std::string> ids;
    Tensor emb;
    DistanceMatrix truth;
};

LineFixture line_fixture(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    LineFixture f{names(n), Tensor(n, 1), DistanceMatrix(n, Metric::hausdorff)};
    for (std::size_t i = 0; i < n; ++i) f.emb(i, 0) = u(rng);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) f.truth(i, j) = std::abs(f.emb(i, 0) - f.emb(j, 0));
    }
    return f;
}

}  // namespace

TEST_CASE("rank candidates") {
    const auto ids = std::vector<std::string>{"a", "b", "c", "d"};
    SUBCASE("an identical embedding ranks first") {
        const Tensor e = Tensor::from_rows({{0.0, 0.0}, {3.0, 4.0}, {0.0, 0.0}, {1.0, 1.0}});
        const Ranking r = rank_candidates(0, e, ids);
        CHECK(r.query_id == "a");
        CHECK(r.ids == std::vector<std::string>{"c", "d", "b"});
        CHECK(r.distances[2] == 5.0);
    }
    SUBCASE("equal distances are ordered by id") {
        const Tensor e = Tensor::from_rows({{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}});
        const std::vector<std::string> shuffled{"q", "z", "m", "b"};
        CHECK(rank_candidates(0, e, shuffled).ids == std::vector<std::string>{"b", "m", "z"});
    }
    SUBCASE("matches a brute-force sort") {
        std::mt19937_64 rng(1);
        std::normal_distribution<double> n(0.0, 1.0);
        for (int trial = 0; trial < 100; ++trial) {
            Tensor e(6, 3);
            for (auto& v : e.values()) v = n(rng);
            const auto six = names(6);
            const std::size_t q = static_cast<std::size_t>(trial) % 6;
            // Selection sort on (distance, id).
            std::vector<std::pair<double, std::string>> rest;
            for (std::size_t i = 0; i < 6; ++i) {
                if (i == q) continue;
                double s = 0.0;
                for (std::size_t c = 0; c < 3; ++c) s += (e(i, c) - e(q, c)) * (e(i, c) - e(q, c));
                rest.emplace_back(std::sqrt(s), six[i]);
            }
            std::vector<std::string> expected;
            while (!rest.empty()) {
                std::size_t best = 0;
                for (std::size_t i = 1; i < rest.size(); ++i) {
                    if (rest[i] < rest[best]) best = i;
                }
                expected.push_back(rest[best].second);
                rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(best));
            }
            CHECK(rank_candidates(q, e, six).ids == expected);
        }
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(rank_candidates(0, Tensor(1, 2), {"a"}), std::invalid_argument);
        CHECK_THROWS_AS(rank_candidates(0, Tensor(3, 2), ids), std::invalid_argument);
    }
}

TEST_CASE("hit ratio and recall fixtures") {
    const Ranking pred = make({"a", "b", "c", "d", "e", "f"});
    const Ranking truth = make({"a", "b", "x", "y", "z", "c"});
    CHECK(hr_at_k(pred, truth, 5) == 0.4);
    CHECK(hr_at_k(pred, pred, 1) == 1.0);
    CHECK(hr_at_k(pred, pred, 6) == 1.0);
    CHECK(hr_at_k(make({"p", "q"}), make({"r", "s"}), 2) == 0.0);
    CHECK_THROWS_AS(hr_at_k(pred, truth, 0), std::out_of_range);
    CHECK_THROWS_AS(hr_at_k(pred, truth, 7), std::out_of_range);

    std::vector<std::string> p20;
    for (int i = 0; i < 25; ++i) p20.push_back("c" + std::to_string(i));
    // Truth top-5 has three items inside the predicted top-20.
    std::vector<std::string> t20{"c3", "c17", "x1", "c9", "x2"};
    for (int i = 0; i < 20; ++i) t20.push_back("y" + std::to_string(i));
    CHECK(recall_t_at_k(make(p20), make(t20), 5, 20) == doctest::Approx(0.6).epsilon(1e-15));
    std::vector<std::string> all_in{"c0", "c19", "c4", "c11", "c7"};
    for (int i = 0; i < 20; ++i) all_in.push_back("y" + std::to_string(i));
    CHECK(recall_t_at_k(make(p20), make(all_in), 5, 20) == 1.0);
    CHECK(recall_t_at_k(make(p20), make(p20), 5, 20) == 1.0);
    CHECK_THROWS_AS(recall_t_at_k(make(p20), make(p20), 21, 20), std::out_of_range);
}

TEST_CASE("recall is non-decreasing in k") {
    std::mt19937_64 rng(2);
    auto ids = names(30);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = ids;
        auto b = ids;
        std::shuffle(a.begin(), a.end(), rng);
        std::shuffle(b.begin(), b.end(), rng);
        double prev = 0.0;
        for (std::size_t k = 5; k <= 30; ++k) {
            const double r = recall_t_at_k(make(a), make(b), 5, k);
            CHECK(r >= prev);
            CHECK(r <= 1.0);
            prev = r;
        }
    }
}

TEST_CASE("evaluate suite") {
    SUBCASE("embeddings that reproduce the truth order score 1") {
        const LineFixture f = line_fixture(40, 3);
        const MetricReport r = evaluate_suite(f.emb, f.truth, f.ids);
        CHECK(r.queries == 40);
        for (const auto& v : r.values) CHECK(v.value == 1.0);
        CHECK(r.get("HR", 5) == 1.0);
        CHECK(r.get("R5", 20) == 1.0);
        CHECK_THROWS_AS(r.get("HR", 10), std::out_of_range);
    }
    SUBCASE("only the order of predicted scores matters") {
        const LineFixture f = line_fixture(40, 4);
        std::mt19937_64 rng(4);
        std::normal_distribution<double> n(0.0, 1.0);
        Tensor emb(40, 3);
        for (auto& v : emb.values()) v = n(rng);
        Tensor scaled = emb;
        for (auto& v : scaled.values()) v *= 7.5;
        const MetricReport a = evaluate_suite(emb, f.truth, f.ids);
        const MetricReport b = evaluate_suite(scaled, f.truth, f.ids);
        for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i].value == b.values[i].value);
    }
    SUBCASE("aggregation equals per-query means and is thread independent") {
        const LineFixture f = line_fixture(30, 5);
        std::mt19937_64 rng(5);
        std::normal_distribution<double> n(0.0, 1.0);
        Tensor emb(30, 2);
        for (auto& v : emb.values()) v = n(rng);
        double hr5 = 0.0;
        double r520 = 0.0;
        for (std::size_t q = 0; q < 30; ++q) {
            const Ranking p = rank_candidates(q, emb, f.ids);
            const Ranking t = truth_ranking(q, f.truth, f.ids);
            hr5 += hr_at_k(p, t, 5);
            r520 += recall_t_at_k(p, t, 5, 20);
        }
        const MetricReport r1 = evaluate_suite(emb, f.truth, f.ids);
        CHECK(r1.get("HR", 5) == doctest::Approx(hr5 / 30).epsilon(1e-14));
        CHECK(r1.get("R5", 20) == doctest::Approx(r520 / 30).epsilon(1e-14));
        SuiteOptions four;
        four.threads = 4;
        const MetricReport r4 = evaluate_suite(emb, f.truth, f.ids, four);
        for (std::size_t i = 0; i < r1.values.size(); ++i) CHECK(r1.values[i].value == r4.values[i].value);
    }
    SUBCASE("random embeddings sit near the permutation baseline") {
        const LineFixture f = line_fixture(100, 6);
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> n(0.0, 1.0);
            Tensor emb(100, 4);
            for (auto& v : emb.values()) v = n(rng);
            total += evaluate_suite(emb, f.truth, f.ids).get("HR", 1);
        }
        CHECK(total / 10 < 0.04);
    }
    SUBCASE("mismatched inputs") {
        const LineFixture f = line_fixture(30, 7);
        CHECK_THROWS_AS(evaluate_suite(Tensor(29, 1), f.truth, f.ids), std::invalid_argument);
        const LineFixture small = line_fixture(10, 7);
        CHECK_THROWS_AS(evaluate_suite(small.emb, small.truth, small.ids), std::out_of_range);
    }
}

TEST_CASE("report formats") {
    MetricReport r;
    r.queries = 3;
    r.values = {{"HR", 1, 0.5}, {"R5", 20, 0.25}};
    std::ostringstream csv;
    write_report_csv(csv, r);
    CHECK(csv.str() == "metric,k,value\nHR,1,0.5\nR5,20,0.25\n");
    const std::string json = report_json(r);
    CHECK(json.find("\"queries\": 3") != std::string::npos);
    CHECK(json.find("\"metric\": \"R5\"") != std::string::npos);
}
