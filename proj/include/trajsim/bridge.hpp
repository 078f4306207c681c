#pragma once

#include <cstddef>
#include <optional>
#include <random>

#include "trajsim/sam.hpp"
#include "trajsim/tensor.hpp"
#include "trajsim/trajectory.hpp"

namespace trajsim {

/// Linear beta schedule on [0, T] with the variance-preserving pairing
/// sigma_t^2 = 1 - alpha_t^2.
struct BridgeSchedule {
    double beta_min = 0.1;
    double beta_max = 20.0;
    double horizon = 1.0;

    /// Throws ConfigError unless 0 < beta_min <= beta_max and horizon > 0.
    void validate() const;

    /// Integral of beta(s) over [0, t]. Throws std::out_of_range outside [0, T].
    [[nodiscard]] double integral(double t) const;
    [[nodiscard]] double alpha(double t) const;
    [[nodiscard]] double sigma_sq(double t) const;
    [[nodiscard]] double sigma(double t) const;
    /// alpha^2 / sigma^2; +infinity at t = 0.
    [[nodiscard]] double snr(double t) const;
    /// SNR_T / SNR_t in [0, 1]: exactly 0 at t = 0 and exactly 1 at t = T.
    [[nodiscard]] double rho(double t) const;
};

struct BridgeStats {
    Tensor mu_hat;
    double sigma_hat = 0.0;
};

/// Mean and standard deviation of q(x_t | x_0 = e0, x_T = eT).
BridgeStats bridge_stats(const BridgeSchedule& s, const Tensor& e0, const Tensor& eT, double t);

struct BridgeSample {
    double t = 0.0;
    Tensor e_gps_t;
    Tensor e_grid_t;
    Tensor mu_hat;
    double sigma_hat = 0.0;
};

/// Draws x_t for the GPS channel and the noise-free interpolant for the grid
/// channel between the two endpoints.
BridgeSample sample_bridge(const BridgeSchedule& s, const TrajectoryFeatures& start, const TrajectoryFeatures& end,
                           double t, std::mt19937_64& rng);

struct DdbmConfig {
    BridgeSchedule schedule;
    std::size_t resample_len = 64;
    double t_min = 0.01;
    double t_max = 0.99;

    void validate() const;
};

/// Features of a trajectory resampled to `len` points by arc length. Points
/// are clamped into the grid's bounding box before discretization.
TrajectoryFeatures resampled_features(const Trajectory& traj, const GridSpec& grid, std::size_t len);

struct PretrainStepResult {
    double loss = 0.0;
    double t = 0.0;
};

/// One bridge-reconstruction step on a pair of resampled feature sets: draws
/// t and the bridge sample from `rng`, encodes the noisy interpolants at
/// sequence level and regresses onto PE(mu_hat) with the target branch
/// detached. Gradients are added to `grads` when it is non-null.
PretrainStepResult pretrain_step(const SamEncoder& enc, const ParamStore& params, const DdbmConfig& cfg,
                                 const TrajectoryFeatures& start, const TrajectoryFeatures& end, std::mt19937_64& rng,
                                 Gradients* grads);

/// Regression target PE(mu_hat) for a sample.
Tensor bridge_target(const SamEncoder& enc, const ParamStore& params, const BridgeSample& sample);

/// Mean squared difference between the sequence encoding of the sample and
/// a fixed target; gradients (added to `grads` when non-null) flow only
/// through the encoding.
double bridge_loss(const SamEncoder& enc, const ParamStore& params, const BridgeSample& sample, const Tensor& target,
                   Gradients* grads);

/// bridge_loss against bridge_target under the same parameters.
double bridge_loss(const SamEncoder& enc, const ParamStore& params, const BridgeSample& sample, Gradients* grads);

/// pretrain_step for trajectories; returns nullopt for a pair with the same id.
std::optional<PretrainStepResult> pretrain_step(const SamEncoder& enc, const ParamStore& params, const DdbmConfig& cfg,
                                                const GridSpec& grid, const Trajectory& a, const Trajectory& b,
                                                std::mt19937_64& rng, Gradients* grads);

}  // namespace trajsim
