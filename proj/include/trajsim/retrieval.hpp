#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "trajsim/heuristics.hpp"
#include "trajsim/tensor.hpp"

namespace trajsim {

/// Candidates ordered from most to least similar, query excluded.
struct Ranking {
    std::string query_id;
    std::vector<std::string> ids;
    std::vector<double> distances;
};

/// Orders every id except `query` by ascending distance; equal distances are
/// ordered by id. `distances[i]` belongs to `ids[i]`.
Ranking rank_by_distance(std::size_t query, std::span<const double> distances, const std::vector<std::string>& ids);

/// Ranking by Euclidean distance between rows of `embeddings` (one per id).
/// Throws std::invalid_argument when there is nothing to rank.
Ranking rank_candidates(std::size_t query, const Tensor& embeddings, const std::vector<std::string>& ids);

/// Ground-truth ranking from a heuristic distance matrix row.
Ranking truth_ranking(std::size_t query, const DistanceMatrix& truth, const std::vector<std::string>& ids);

/// |top-k(pred) and top-k(truth)| / k. Throws std::out_of_range unless 1 <= k <= length.
double hr_at_k(const Ranking& pred, const Ranking& truth, std::size_t k);

/// |top-t(truth) and top-k(pred)| / t. Throws std::out_of_range unless 1 <= t <= k <= length.
double recall_t_at_k(const Ranking& pred, const Ranking& truth, std::size_t t, std::size_t k);

struct MetricValue {
    std::string metric;  // "HR" or "R<t>"
    std::size_t k = 0;
    double value = 0.0;
};

struct MetricReport {
    std::size_t queries = 0;
    std::vector<MetricValue> values;

    /// Value of a metric; throws std::out_of_range when absent.
    [[nodiscard]] double get(const std::string& metric, std::size_t k) const;
};

struct SuiteOptions {
    std::vector<std::size_t> ks{1, 5, 20};
    bool recall_5_at_20 = true;
    std::size_t threads = 1;
};

/// Mean HR@k (and Recall-5@20) over every id used as a query against the
/// others. `embeddings` has one row per id, in the order of `truth`.
MetricReport evaluate_suite(const Tensor& embeddings, const DistanceMatrix& truth, const std::vector<std::string>& ids,
                            const SuiteOptions& opts = {});

/// `metric,k,value` lines with a header.
void write_report_csv(std::ostream& out, const MetricReport& r);
std::string report_json(const MetricReport& r);

}  // namespace trajsim
