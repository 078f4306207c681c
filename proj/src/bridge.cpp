#include "trajsim/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "trajsim/autodiff.hpp"
#include "trajsim/error.hpp"

namespace trajsim {

void BridgeSchedule::validate() const {
    if (!(beta_min > 0.0 && beta_min <= beta_max && std::isfinite(beta_max))) {
        throw ConfigError("ddbm.beta_min and ddbm.beta_max must satisfy 0 < beta_min <= beta_max");
    }
    if (!(horizon > 0.0 && std::isfinite(horizon))) {
        throw ConfigError("bridge horizon must be positive");
    }
}

double BridgeSchedule::integral(double t) const {
    if (!(t >= 0.0 && t <= horizon)) {
        throw std::out_of_range("bridge time " + std::to_string(t) + " outside [0, " + std::to_string(horizon) + "]");
    }
    return beta_min * t + 0.5 * (beta_max - beta_min) * t * t;
}

double BridgeSchedule::alpha(double t) const { return std::exp(-0.5 * integral(t)); }

double BridgeSchedule::sigma_sq(double t) const { return -std::expm1(-integral(t)); }

double BridgeSchedule::sigma(double t) const { return std::sqrt(sigma_sq(t)); }

double BridgeSchedule::snr(double t) const {
    const double var = sigma_sq(t);
    if (var == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return std::exp(-integral(t)) / var;
}

double BridgeSchedule::rho(double t) const {
    const double it = integral(t);
    if (t == horizon) {
        return 1.0;
    }
    const double iT = integral(horizon);
    // SNR_T / SNR_t = exp(I_t - I_T) * (1 - exp(-I_t)) / (1 - exp(-I_T))
    const double r = std::exp(it - iT) * (std::expm1(-it) / std::expm1(-iT));
    return std::clamp(r, 0.0, 1.0);
}

namespace {

// rho * (alpha_t / alpha_T) * eT + alpha_t * (1 - rho) * e0
Tensor interpolate(const BridgeSchedule& s, const Tensor& e0, const Tensor& eT, double t) {
    if (!e0.same_shape(eT)) {
        throw ShapeError("bridge endpoints have shapes " + e0.shape_string() + " and " + eT.shape_string());
    }
    const double rho = s.rho(t);
    const double a_t = s.alpha(t);
    const double ratio = t == s.horizon ? 1.0 : std::exp(-0.5 * (s.integral(t) - s.integral(s.horizon)));
    const double c_end = rho * ratio;
    const double c_start = a_t * (1.0 - rho);
    Tensor out(e0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = c_end * eT[i] + c_start * e0[i];
    }
    return out;
}

}  // namespace

BridgeStats bridge_stats(const BridgeSchedule& s, const Tensor& e0, const Tensor& eT, double t) {
    BridgeStats out{interpolate(s, e0, eT, t), 0.0};
    out.sigma_hat = std::sqrt(std::max(0.0, s.sigma_sq(t) * (1.0 - s.rho(t))));
    return out;
}

BridgeSample sample_bridge(const BridgeSchedule& s, const TrajectoryFeatures& start, const TrajectoryFeatures& end,
                           double t, std::mt19937_64& rng) {
    BridgeStats stats = bridge_stats(s, start.gps, end.gps, t);
    BridgeSample out;
    out.t = t;
    out.sigma_hat = stats.sigma_hat;
    out.e_gps_t = stats.mu_hat;
    if (stats.sigma_hat > 0.0) {
        std::normal_distribution<double> noise(0.0, 1.0);
        for (auto& v : out.e_gps_t.values()) {
            v += stats.sigma_hat * noise(rng);
        }
    }
    out.mu_hat = std::move(stats.mu_hat);
    out.e_grid_t = interpolate(s, start.grid, end.grid, t);
    return out;
}

void DdbmConfig::validate() const {
    schedule.validate();
    if (resample_len < 2) {
        throw ConfigError("ddbm.resample_len must be at least 2");
    }
    if (!(t_min >= 0.0 && t_min <= t_max && t_max <= schedule.horizon)) {
        throw ConfigError("ddbm.t_min and ddbm.t_max must satisfy 0 <= t_min <= t_max <= 1");
    }
}

TrajectoryFeatures resampled_features(const Trajectory& traj, const GridSpec& grid, std::size_t len) {
    Trajectory r = resample_arc_length(traj, len);
    const BoundingBox& b = grid.bbox;
    for (auto& p : r.points) {
        p.lon = std::clamp(p.lon, b.lon_min, b.lon_max);
        p.lat = std::clamp(p.lat, b.lat_min, b.lat_max);
    }
    return extract_features(r, grid);
}

Tensor bridge_target(const SamEncoder& enc, const ParamStore& params, const BridgeSample& sample) {
    Graph g;
    return enc.pre_encode(g, params, g.constant(sample.mu_hat)).value();
}

double bridge_loss(const SamEncoder& enc, const ParamStore& params, const BridgeSample& sample, const Tensor& target,
                   Gradients* grads) {
    Graph g;
    Var h = enc.encode_sequence(g, params, g.constant(sample.e_gps_t), g.constant(sample.e_grid_t));
    Var diff = ad::sub(h, g.constant(target));
    Var loss = ad::mean(ad::mul(diff, diff));
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
        throw NumericError("pretraining loss is not finite at t = " + std::to_string(sample.t));
    }
    if (grads) {
        g.backward(loss);
        g.accumulate_param_grads(*grads);
    }
    return value;
}

double bridge_loss(const SamEncoder& enc, const ParamStore& params, const BridgeSample& sample, Gradients* grads) {
    return bridge_loss(enc, params, sample, bridge_target(enc, params, sample), grads);
}

PretrainStepResult pretrain_step(const SamEncoder& enc, const ParamStore& params, const DdbmConfig& cfg,
                                 const TrajectoryFeatures& start, const TrajectoryFeatures& end, std::mt19937_64& rng,
                                 Gradients* grads) {
    std::uniform_real_distribution<double> time(cfg.t_min * cfg.schedule.horizon, cfg.t_max * cfg.schedule.horizon);
    const double t = time(rng);
    const BridgeSample sample = sample_bridge(cfg.schedule, start, end, t, rng);
    return {bridge_loss(enc, params, sample, grads), t};
}

std::optional<PretrainStepResult> pretrain_step(const SamEncoder& enc, const ParamStore& params, const DdbmConfig& cfg,
                                                const GridSpec& grid, const Trajectory& a, const Trajectory& b,
                                                std::mt19937_64& rng, Gradients* grads) {
    if (a.id == b.id) {
        return std::nullopt;
    }
    return pretrain_step(enc, params, cfg, resampled_features(a, grid, cfg.resample_len),
                         resampled_features(b, grid, cfg.resample_len), rng, grads);
}

}  // namespace trajsim
