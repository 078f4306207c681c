#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "trajsim/autodiff.hpp"
#include "trajsim/heuristics.hpp"
#include "trajsim/tensor.hpp"

namespace trajsim {

struct LossWeights {
    double gamma1 = 0.1;
    double gamma2 = 0.001;

    /// Throws ConfigError unless both weights are finite and non-negative.
    void validate() const;
};

enum class TauMode { mean_distance, fixed };

std::string_view to_string(TauMode m);
TauMode parse_tau_mode(std::string_view name);

struct LossConfig {
    LossWeights weights;
    TauMode tau_mode = TauMode::mean_distance;
    double tau_value = 1.0;

    void validate() const;
    /// tau_value in fixed mode, otherwise the mean off-diagonal distance of `train`.
    [[nodiscard]] double resolve_tau(const DistanceMatrix& train) const;
};

/// exp(-d_ij / tau) as an n x n matrix. Throws std::invalid_argument for tau <= 0.
Tensor similarity_from_distance(const DistanceMatrix& d, double tau);

/// Mean squared difference over the off-diagonal entries of two square matrices.
double mse_loss(const Tensor& predicted, const Tensor& target);

/// Cross-entropy between softmax(r) and softmax(s). Requires k >= 2.
double listnet_loss(std::span<const double> s, std::span<const double> r);

/// Per-item weights 1 / log2(pos + 1), where pos is the 1-based position of
/// the item when sorted by r descending (stable, so ties keep index order).
std::vector<double> rank_decay_weights(std::span<const double> r);

/// -sum_i w_i P(i | r) log P(i | s).
double weighted_listnet_loss(std::span<const double> s, std::span<const double> r, std::span<const double> w);

double rd_listnet_loss(std::span<const double> s, std::span<const double> r);

/// Entropy of softmax(r).
double softmax_entropy(std::span<const double> r);

double total_loss(double mse, double listnet, double rd_listnet, const LossWeights& w);

/// Distance floor inside the square root of the embedding distance, keeping
/// its gradient finite on the diagonal.
inline constexpr double kDistanceEps = 1e-12;

/// exp(-||h_i - h_j||) for every pair of rows of h.
Var predicted_similarity(Var h);

struct BatchLoss {
    Var total;
    double mse = 0.0;
    double listnet = 0.0;
    double rd_listnet = 0.0;
};

/// Total fine-tuning loss on one batch. Every row of `h` is a query whose
/// candidates are the other rows; list losses are averaged over queries.
/// `target` is the batch's B x B target similarity matrix.
BatchLoss batch_loss(Var h, const Tensor& target, const LossWeights& w);

}  // namespace trajsim
