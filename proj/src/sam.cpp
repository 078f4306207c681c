#include "trajsim/sam.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "trajsim/error.hpp"

namespace trajsim {

std::string_view to_string(PreEncoderKind k) { return k == PreEncoderKind::lstm ? "lstm" : "linear"; }

PreEncoderKind parse_pre_encoder(std::string_view name) {
    if (name == "linear") {
        return PreEncoderKind::linear;
    }
    if (name == "lstm") {
        return PreEncoderKind::lstm;
    }
    throw ConfigError("model.pre_encoder must be 'linear' or 'lstm', got '" + std::string(name) + "'");
}

void SamConfig::validate() const {
    if (d == 0 || d_hid == 0 || layers == 0 || heads == 0) {
        throw ConfigError("model.d, model.d_hid, model.layers and model.heads must be positive");
    }
    if (d < 2) {
        throw ConfigError("model.d must be at least 2 for layer normalization");
    }
    if (d % heads != 0) {
        throw ConfigError("model.d (" + std::to_string(d) + ") must be divisible by model.heads (" +
                          std::to_string(heads) + ")");
    }
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw ConfigError("model.epsilon must lie in (0, 1)");
    }
}

TrajectoryFeatures extract_features(const Trajectory& traj, const GridSpec& grid) {
    return extract_features(traj, to_grid_sequence(traj, grid), grid);
}

TrajectoryFeatures extract_features(const Trajectory& traj, const GridSequence& cells, const GridSpec& grid) {
    if (cells.size() != traj.size()) {
        throw std::invalid_argument("grid sequence has " + std::to_string(cells.size()) + " cells for " +
                                    std::to_string(traj.size()) + " points of '" + traj.id + "'");
    }
    const auto& b = grid.bbox;
    const std::size_t n = traj.size();
    TrajectoryFeatures f{Tensor(n, 2), Tensor(n, 2)};
    for (std::size_t k = 0; k < n; ++k) {
        f.gps(k, 0) = (traj.points[k].lon - b.lon_min) / (b.lon_max - b.lon_min);
        f.gps(k, 1) = (traj.points[k].lat - b.lat_min) / (b.lat_max - b.lat_min);
        f.grid(k, 0) = static_cast<double>(cells[k].row) / static_cast<double>(grid.rows);
        f.grid(k, 1) = static_cast<double>(cells[k].col) / static_cast<double>(grid.cols);
    }
    return f;
}

SamEncoder::SamEncoder(SamConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::string SamEncoder::param_name(std::size_t layer, Direction dir, std::string_view leaf) {
    return "layer" + std::to_string(layer) + (dir == Direction::gps ? ".gps." : ".grid.") + std::string(leaf);
}

ParamStore SamEncoder::make_params(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    auto uniform = [&](std::size_t rows, std::size_t cols, double bound) {
        std::uniform_real_distribution<double> dist(-bound, bound);
        Tensor t(rows, cols);
        for (auto& v : t.values()) {
            v = dist(rng);
        }
        return t;
    };
    auto weight = [&](std::size_t fan_in, std::size_t fan_out) {
        return uniform(fan_in, fan_out, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    };

    const std::size_t d = cfg_.d;
    ParamStore p;
    if (cfg_.pre_encoder == PreEncoderKind::linear) {
        p.add("pe.linear.weight", weight(2, d));
        p.add("pe.linear.bias", Tensor(1, d));
    } else {
        p.add("pe.lstm.w_ih", weight(2, 4 * d));
        p.add("pe.lstm.w_hh", weight(d, 4 * d));
        p.add("pe.lstm.bias", Tensor(1, 4 * d));
    }
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        for (Direction dir : {Direction::gps, Direction::grid}) {
            p.add(param_name(l, dir, "wq"), weight(d, d));
            p.add(param_name(l, dir, "wk"), weight(d, d));
            p.add(param_name(l, dir, "wv"), weight(d, d));
            p.add(param_name(l, dir, "ffn.w1"), weight(d, cfg_.d_hid));
            p.add(param_name(l, dir, "ffn.b1"), Tensor(1, cfg_.d_hid));
            p.add(param_name(l, dir, "ffn.w2"), weight(cfg_.d_hid, d));
            p.add(param_name(l, dir, "ffn.b2"), Tensor(1, d));
            p.add(param_name(l, dir, "norm.gain"), Tensor(1, d, 1.0));
            p.add(param_name(l, dir, "norm.bias"), Tensor(1, d));
            p.add(param_name(l, dir, "lambda_q"), uniform(1, d, 0.1));
            p.add(param_name(l, dir, "lambda_k"), uniform(1, d, 0.1));
            p.add(param_name(l, dir, "lambda_v"), uniform(1, d, 0.1));
        }
    }
    return p;
}

Var SamEncoder::pre_encode(Graph& g, const ParamStore& p, Var e) const {
    if (e.cols() != 2) {
        throw ShapeError("pre_encode expects 2 feature channels, got " + e.value().shape_string());
    }
    if (cfg_.pre_encoder == PreEncoderKind::linear) {
        return ad::add_row(ad::matmul(e, g.param(p, "pe.linear.weight")), g.param(p, "pe.linear.bias"));
    }
    const ad::LstmWeights w{g.param(p, "pe.lstm.w_ih"), g.param(p, "pe.lstm.w_hh"), g.param(p, "pe.lstm.bias")};
    return ad::lstm_sequence(e, w);
}

SaaWeights SamEncoder::saa_weights(Graph& g, const ParamStore& p, std::size_t layer, Direction dir) const {
    auto get = [&](std::string_view leaf) { return g.param(p, param_name(layer, dir, leaf)); };
    return SaaWeights{get("wq"),        get("wk"),        get("wv"),       get("ffn.w1"),
                      get("ffn.b1"),    get("ffn.w2"),    get("ffn.b2"),   get("norm.gain"),
                      get("norm.bias"), get("lambda_q"),  get("lambda_k"), get("lambda_v")};
}

std::pair<Var, Var> SamEncoder::fusion_weights(const SaaWeights& w) const {
    Var cross = ad::exp(ad::sum(ad::mul(w.lambda_q, w.lambda_k)));
    Var self = ad::exp(ad::sum(ad::mul(w.lambda_k, w.lambda_v)));
    return {cross, self};
}

Var SamEncoder::attention(Var z_query, Var z_source, const SaaWeights& w, AttentionTrace* trace) const {
    if (z_query.cols() != cfg_.d || z_source.cols() != cfg_.d || z_query.rows() != z_source.rows()) {
        throw ShapeError("saa: query " + z_query.value().shape_string() + " and source " +
                         z_source.value().shape_string() + " must both be n x " + std::to_string(cfg_.d));
    }
    Var q = ad::matmul(z_query, w.wq);
    Var k = ad::matmul(z_source, w.wk);
    Var v = ad::matmul(z_source, w.wv);
    auto [lambda_cross, lambda_self] = fusion_weights(w);
    if (trace) {
        trace->lambda_cross = lambda_cross.value().item();
        trace->lambda_self = lambda_self.value().item();
    }

    const std::size_t dh = cfg_.d / cfg_.heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> heads;
    heads.reserve(cfg_.heads);
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
        Var qh = ad::slice_cols(q, h * dh, dh);
        Var kh = ad::slice_cols(k, h * dh, dh);
        Var vh = ad::slice_cols(v, h * dh, dh);
        Var a_cross = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_scale));
        Var a_self = ad::softmax_rows(ad::scale(ad::matmul_nt(kh, vh), inv_scale));
        if (trace) {
            trace->cross.push_back(a_cross.value());
            trace->self.push_back(a_self.value());
        }
        Var mixed = ad::add(ad::scale_by(a_self, lambda_self), ad::scale_by(a_cross, lambda_cross));
        heads.push_back(ad::matmul(mixed, vh));
    }
    return heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
}

Var SamEncoder::ffn_norm(Var z, const SaaWeights& w) const {
    Var hidden = ad::gelu(ad::add_row(ad::matmul(z, w.ffn_w1), w.ffn_b1));
    Var ffn = ad::add_row(ad::matmul(hidden, w.ffn_w2), w.ffn_b2);
    return ad::layer_norm(ad::add(z, ffn), w.norm_gain, w.norm_bias);
}

Var SamEncoder::saa(Var z_query, Var z_source, const SaaWeights& w, AttentionTrace* trace) const {
    return ffn_norm(attention(z_query, z_source, w, trace), w);
}

std::pair<Var, Var> SamEncoder::dual_layer(Graph& g, const ParamStore& p, std::size_t layer, Var z_gps,
                                           Var z_grid) const {
    if (z_gps.rows() != z_grid.rows() || z_gps.cols() != z_grid.cols()) {
        throw ShapeError("dual_layer: " + z_gps.value().shape_string() + " vs " + z_grid.value().shape_string());
    }
    Var next_gps = saa(z_gps, z_grid, saa_weights(g, p, layer, Direction::gps));
    Var next_grid = saa(z_grid, z_gps, saa_weights(g, p, layer, Direction::grid));
    return {next_gps, next_grid};
}

Var SamEncoder::encode_sequence(Graph& g, const ParamStore& p, Var e_gps, Var e_grid) const {
    if (e_gps.rows() != e_grid.rows()) {
        throw ShapeError("encode: GPS " + e_gps.value().shape_string() + " and grid " +
                         e_grid.value().shape_string() + " features are misaligned");
    }
    Var z_gps = pre_encode(g, p, e_gps);
    Var z_grid = pre_encode(g, p, e_grid);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        std::tie(z_gps, z_grid) = dual_layer(g, p, l, z_gps, z_grid);
    }
    return ad::add(ad::scale(z_gps, cfg_.epsilon), ad::scale(z_grid, 1.0 - cfg_.epsilon));
}

Var SamEncoder::encode(Graph& g, const ParamStore& p, Var e_gps, Var e_grid) const {
    return ad::mean_rows(encode_sequence(g, p, e_gps, e_grid));
}

Tensor SamEncoder::embed(const ParamStore& p, const TrajectoryFeatures& f) const {
    Graph g;
    return encode(g, p, g.constant(f.gps), g.constant(f.grid)).value();
}

}  // namespace trajsim
