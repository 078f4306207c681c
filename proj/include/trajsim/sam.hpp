#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "trajsim/autodiff.hpp"
#include "trajsim/trajectory.hpp"

namespace trajsim {

enum class PreEncoderKind { linear, lstm };

std::string_view to_string(PreEncoderKind k);
PreEncoderKind parse_pre_encoder(std::string_view name);

struct SamConfig {
    std::size_t d = 64;
    std::size_t d_hid = 256;
    std::size_t layers = 1;
    std::size_t heads = 16;
    double epsilon = 0.5;
    PreEncoderKind pre_encoder = PreEncoderKind::linear;

    /// Throws ConfigError on d % heads != 0, epsilon outside (0, 1), zero sizes.
    void validate() const;
};

/// GPS and grid channels of one trajectory, both n x 2. GPS is (lon, lat)
/// scaled to [0, 1] over the grid's bounding box; grid is (row / M, col / U).
struct TrajectoryFeatures {
    Tensor gps;
    Tensor grid;
};

TrajectoryFeatures extract_features(const Trajectory& traj, const GridSpec& grid);
/// Throws std::invalid_argument when `cells` is not aligned with `traj`.
TrajectoryFeatures extract_features(const Trajectory& traj, const GridSequence& cells, const GridSpec& grid);

/// Which input plays the query role in one half of a Dual SAA layer.
enum class Direction { gps, grid };

/// Tape handles for one SAA block (one layer, one direction).
struct SaaWeights {
    Var wq, wk, wv;
    Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Var norm_gain, norm_bias;
    Var lambda_q, lambda_k, lambda_v;
};

/// Attention matrices of one SAA call, per head, for inspection in tests.
struct AttentionTrace {
    std::vector<Tensor> cross;
    std::vector<Tensor> self;
    double lambda_cross = 0.0;
    double lambda_self = 0.0;
};

/// Semantic-alignment encoder: pre-encoding, L dual SAA layers, epsilon
/// fusion of the two branches and mean pooling. Parameters live in a
/// ParamStore; the encoder itself only holds the configuration.
class SamEncoder {
public:
    explicit SamEncoder(SamConfig cfg);

    [[nodiscard]] const SamConfig& config() const noexcept { return cfg_; }

    /// Registers every parameter with its initial value. Projection weights
    /// are uniform(+-1/sqrt(fan_in)), biases zero, norm gains one, and the
    /// lambda vectors uniform(+-0.1).
    [[nodiscard]] ParamStore make_params(std::uint64_t seed) const;

    static std::string param_name(std::size_t layer, Direction dir, std::string_view leaf);

    Var pre_encode(Graph& g, const ParamStore& p, Var e) const;
    SaaWeights saa_weights(Graph& g, const ParamStore& p, std::size_t layer, Direction dir) const;

    /// exp(sum lambda_q * lambda_k) and exp(sum lambda_k * lambda_v).
    [[nodiscard]] std::pair<Var, Var> fusion_weights(const SaaWeights& w) const;

    /// Multi-head (lambda_self * A_self + lambda_cross * A_cross) V with
    /// A_cross = softmax(Q K^T / sqrt(d_head)), A_self = softmax(K V^T / sqrt(d_head)),
    /// before the feed-forward block.
    Var attention(Var z_query, Var z_source, const SaaWeights& w, AttentionTrace* trace = nullptr) const;
    /// Norm(Z + FFN(Z)) applied to attention().
    Var saa(Var z_query, Var z_source, const SaaWeights& w, AttentionTrace* trace = nullptr) const;

    /// Both directions read the previous layer's outputs.
    std::pair<Var, Var> dual_layer(Graph& g, const ParamStore& p, std::size_t layer, Var z_gps, Var z_grid) const;

    /// Fused n x d sequence epsilon * Z_gps + (1 - epsilon) * Z_grid after L layers.
    Var encode_sequence(Graph& g, const ParamStore& p, Var e_gps, Var e_grid) const;
    /// 1 x d mean-pooled embedding.
    Var encode(Graph& g, const ParamStore& p, Var e_gps, Var e_grid) const;

    /// Forward-only convenience wrapper returning the 1 x d embedding.
    [[nodiscard]] Tensor embed(const ParamStore& p, const TrajectoryFeatures& f) const;

private:
    Var ffn_norm(Var z, const SaaWeights& w) const;

    SamConfig cfg_;
};

}  // namespace trajsim
