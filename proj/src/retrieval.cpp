#include "trajsim/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "trajsim/parallel.hpp"

namespace trajsim {

Ranking rank_by_distance(std::size_t query, std::span<const double> distances, const std::vector<std::string>& ids) {
    if (distances.size() != ids.size() || query >= ids.size()) {
        throw std::invalid_argument("ranking: " + std::to_string(distances.size()) + " distances for " +
                                    std::to_string(ids.size()) + " ids, query index " + std::to_string(query));
    }
    if (ids.size() < 2) {
        throw std::invalid_argument("ranking: no candidates besides the query");
    }
    std::vector<std::size_t> order;
    order.reserve(ids.size() - 1);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i != query) {
            order.push_back(i);
        }
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (distances[a] != distances[b]) {
            return distances[a] < distances[b];
        }
        return ids[a] < ids[b];
    });
    Ranking r{ids[query], {}, {}};
    r.ids.reserve(order.size());
    r.distances.reserve(order.size());
    for (std::size_t i : order) {
        r.ids.push_back(ids[i]);
        r.distances.push_back(distances[i]);
    }
    return r;
}

Ranking rank_candidates(std::size_t query, const Tensor& embeddings, const std::vector<std::string>& ids) {
    if (embeddings.rows() != ids.size()) {
        throw std::invalid_argument("ranking: " + std::to_string(embeddings.rows()) + " embeddings for " +
                                    std::to_string(ids.size()) + " ids");
    }
    const std::size_t d = embeddings.cols();
    std::vector<double> dist(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = embeddings(i, c) - embeddings(query, c);
            s += diff * diff;
        }
        dist[i] = std::sqrt(s);
    }
    return rank_by_distance(query, dist, ids);
}

Ranking truth_ranking(std::size_t query, const DistanceMatrix& truth, const std::vector<std::string>& ids) {
    if (truth.size() != ids.size()) {
        throw std::invalid_argument("ranking: matrix of size " + std::to_string(truth.size()) + " for " +
                                    std::to_string(ids.size()) + " ids");
    }
    return rank_by_distance(query, truth.row(query), ids);
}

namespace {

std::size_t overlap(const Ranking& a, std::size_t ka, const Ranking& b, std::size_t kb) {
    std::unordered_set<std::string> top(a.ids.begin(), a.ids.begin() + static_cast<std::ptrdiff_t>(ka));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < kb; ++i) {
        hits += top.count(b.ids[i]);
    }
    return hits;
}

void check_k(std::size_t k, const Ranking& pred, const Ranking& truth) {
    const std::size_t len = std::min(pred.ids.size(), truth.ids.size());
    if (k < 1 || k > len) {
        throw std::out_of_range("k = " + std::to_string(k) + " outside [1, " + std::to_string(len) + "]");
    }
}

}  // namespace

double hr_at_k(const Ranking& pred, const Ranking& truth, std::size_t k) {
    check_k(k, pred, truth);
    return static_cast<double>(overlap(truth, k, pred, k)) / static_cast<double>(k);
}

double recall_t_at_k(const Ranking& pred, const Ranking& truth, std::size_t t, std::size_t k) {
    check_k(k, pred, truth);
    if (t < 1 || t > k) {
        throw std::out_of_range("t = " + std::to_string(t) + " outside [1, k = " + std::to_string(k) + "]");
    }
    return static_cast<double>(overlap(truth, t, pred, k)) / static_cast<double>(t);
}

double MetricReport::get(const std::string& metric, std::size_t k) const {
    for (const auto& v : values) {
        if (v.metric == metric && v.k == k) {
            return v.value;
        }
    }
    throw std::out_of_range("metric " + metric + "@" + std::to_string(k) + " not in report");
}

MetricReport evaluate_suite(const Tensor& embeddings, const DistanceMatrix& truth, const std::vector<std::string>& ids,
                            const SuiteOptions& opts) {
    if (embeddings.rows() != ids.size() || truth.size() != ids.size()) {
        throw std::invalid_argument("evaluate_suite: " + std::to_string(embeddings.rows()) + " embeddings, matrix of " +
                                    std::to_string(truth.size()) + " and " + std::to_string(ids.size()) + " ids");
    }
    const std::size_t n = ids.size();
    const std::size_t metrics = opts.ks.size() + (opts.recall_5_at_20 ? 1 : 0);
    std::vector<double> per_query(n * metrics, 0.0);
    parallel_for(n, opts.threads, [&](std::size_t q, std::size_t) {
        const Ranking pred = rank_candidates(q, embeddings, ids);
        const Ranking gt = truth_ranking(q, truth, ids);
        double* out = per_query.data() + q * metrics;
        for (std::size_t m = 0; m < opts.ks.size(); ++m) {
            out[m] = hr_at_k(pred, gt, opts.ks[m]);
        }
        if (opts.recall_5_at_20) {
            out[opts.ks.size()] = recall_t_at_k(pred, gt, 5, 20);
        }
    });
    MetricReport report;
    report.queries = n;
    for (std::size_t m = 0; m < metrics; ++m) {
        double total = 0.0;
        for (std::size_t q = 0; q < n; ++q) {
            total += per_query[q * metrics + m];
        }
        const bool is_recall = m == opts.ks.size();
        report.values.push_back({is_recall ? "R5" : "HR", is_recall ? 20 : opts.ks[m], total / static_cast<double>(n)});
    }
    return report;
}

void write_report_csv(std::ostream& out, const MetricReport& r) {
    out << "metric,k,value\n";
    out.precision(17);
    for (const auto& v : r.values) {
        out << v.metric << ',' << v.k << ',' << v.value << '\n';
    }
}

std::string report_json(const MetricReport& r) {
    nlohmann::json j;
    j["queries"] = r.queries;
    j["metrics"] = nlohmann::json::array();
    for (const auto& v : r.values) {
        j["metrics"].push_back({{"metric", v.metric}, {"k", v.k}, {"value", v.value}});
    }
    return j.dump(2) + "\n";
}

}  // namespace trajsim
