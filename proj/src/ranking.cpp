#include "trajsim/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "trajsim/error.hpp"

namespace trajsim {

void LossWeights::validate() const {
    if (!(gamma1 >= 0.0 && std::isfinite(gamma1) && gamma2 >= 0.0 && std::isfinite(gamma2))) {
        throw ConfigError("loss.gamma1 and loss.gamma2 must be finite and non-negative");
    }
}

std::string_view to_string(TauMode m) { return m == TauMode::fixed ? "fixed" : "mean_distance"; }

TauMode parse_tau_mode(std::string_view name) {
    if (name == "mean_distance") {
        return TauMode::mean_distance;
    }
    if (name == "fixed") {
        return TauMode::fixed;
    }
    throw ConfigError("loss.tau_mode must be 'mean_distance' or 'fixed', got '" + std::string(name) + "'");
}

void LossConfig::validate() const {
    weights.validate();
    if (!(tau_value > 0.0 && std::isfinite(tau_value))) {
        throw ConfigError("loss.tau_value must be positive");
    }
}

double LossConfig::resolve_tau(const DistanceMatrix& train) const {
    if (tau_mode == TauMode::fixed) {
        return tau_value;
    }
    const double tau = train.mean_off_diagonal();
    if (!(tau > 0.0 && std::isfinite(tau))) {
        throw DataError("mean training distance is " + std::to_string(tau) + "; cannot derive a similarity scale");
    }
    return tau;
}

Tensor similarity_from_distance(const DistanceMatrix& d, double tau) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("similarity scale tau must be positive, got " + std::to_string(tau));
    }
    const std::size_t n = d.size();
    Tensor out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out(i, j) = i == j ? 1.0 : std::exp(-d(i, j) / tau);
        }
    }
    return out;
}

double mse_loss(const Tensor& predicted, const Tensor& target) {
    if (!predicted.same_shape(target) || predicted.rank() != 2 || predicted.rows() != predicted.cols() ||
        predicted.rows() < 2) {
        throw ShapeError("mse_loss expects equal square matrices of size >= 2, got " + predicted.shape_string() +
                         " and " + target.shape_string());
    }
    const std::size_t n = predicted.rows();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) {
                const double diff = predicted(i, j) - target(i, j);
                total += diff * diff;
            }
        }
    }
    return total / static_cast<double>(n * (n - 1));
}

namespace {

void check_list(std::span<const double> s, std::span<const double> r, const char* what) {
    if (s.size() != r.size()) {
        throw ShapeError(std::string(what) + ": score lists have lengths " + std::to_string(s.size()) + " and " +
                         std::to_string(r.size()));
    }
    if (s.size() < 2) {
        throw std::invalid_argument(std::string(what) + " needs at least 2 candidates");
    }
}

double log_sum_exp(std::span<const double> x) {
    const double mx = *std::max_element(x.begin(), x.end());
    double total = 0.0;
    for (double v : x) {
        total += std::exp(v - mx);
    }
    return mx + std::log(total);
}

}  // namespace

double softmax_entropy(std::span<const double> r) {
    const double lse = log_sum_exp(r);
    double h = 0.0;
    for (double v : r) {
        const double logp = v - lse;
        h -= std::exp(logp) * logp;
    }
    return h;
}

double listnet_loss(std::span<const double> s, std::span<const double> r) {
    check_list(s, r, "listnet_loss");
    const double lse_s = log_sum_exp(s);
    const double lse_r = log_sum_exp(r);
    double loss = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        loss -= std::exp(r[i] - lse_r) * (s[i] - lse_s);
    }
    return loss;
}

std::vector<double> rank_decay_weights(std::span<const double> r) {
    std::vector<std::size_t> order(r.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r[a] > r[b]; });
    std::vector<double> w(r.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        w[order[pos]] = 1.0 / std::log2(static_cast<double>(pos + 2));
    }
    return w;
}

double weighted_listnet_loss(std::span<const double> s, std::span<const double> r, std::span<const double> w) {
    check_list(s, r, "weighted_listnet_loss");
    if (w.size() != s.size()) {
        throw ShapeError("weighted_listnet_loss: " + std::to_string(w.size()) + " weights for " +
                         std::to_string(s.size()) + " candidates");
    }
    const double lse_s = log_sum_exp(s);
    const double lse_r = log_sum_exp(r);
    double loss = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        loss -= w[i] * std::exp(r[i] - lse_r) * (s[i] - lse_s);
    }
    return loss;
}

double rd_listnet_loss(std::span<const double> s, std::span<const double> r) {
    check_list(s, r, "rd_listnet_loss");
    const std::vector<double> w = rank_decay_weights(r);
    return weighted_listnet_loss(s, r, w);
}

double total_loss(double mse, double listnet, double rd_listnet, const LossWeights& w) {
    return mse + w.gamma1 * listnet + w.gamma2 * rd_listnet;
}

Var predicted_similarity(Var h) { return ad::exp(ad::scale(ad::pairwise_distances(h, kDistanceEps), -1.0)); }

BatchLoss batch_loss(Var h, const Tensor& target, const LossWeights& w) {
    const std::size_t b = h.rows();
    if (target.rank() != 2 || target.rows() != b || target.cols() != b) {
        throw ShapeError("batch_loss: target " + target.shape_string() + " for a batch of " + std::to_string(b));
    }
    if (b < 3) {
        throw std::invalid_argument("batch_loss needs at least 3 trajectories so every list has 2 candidates");
    }
    Graph& g = h.graph();
    Var s = ad::off_diagonal(predicted_similarity(h));
    Var r = ad::off_diagonal(g.constant(target));

    Var diff = ad::sub(s, r);
    Var mse = ad::mean(ad::mul(diff, diff));

    const Tensor p_r = ad::softmax_rows(r).value();
    Tensor rd_w(b, b - 1);
    for (std::size_t i = 0; i < b; ++i) {
        const auto row = std::span<const double>(r.value().data() + i * (b - 1), b - 1);
        const std::vector<double> wi = rank_decay_weights(row);
        for (std::size_t c = 0; c < b - 1; ++c) {
            rd_w(i, c) = wi[c] * p_r(i, c);
        }
    }
    Var log_p_s = ad::log_softmax_rows(s);
    const double inv_b = -1.0 / static_cast<double>(b);
    Var listnet = ad::scale(ad::sum(ad::mul(g.constant(p_r), log_p_s)), inv_b);
    Var rd = ad::scale(ad::sum(ad::mul(g.constant(rd_w), log_p_s)), inv_b);

    Var total = ad::add(ad::add(mse, ad::scale(listnet, w.gamma1)), ad::scale(rd, w.gamma2));
    return {total, mse.value().item(), listnet.value().item(), rd.value().item()};
}

}  // namespace trajsim
