#include "trajsim/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include "trajsim/error.hpp"
#include "trajsim/io.hpp"
#include "trajsim/synthetic.hpp"

namespace trajsim {

namespace {

class Logger {
public:
    explicit Logger(std::ostream* out) : out_(out) {}

    template <typename... Args>
    void operator()(const Args&... args) const {
        if (out_) {
            ((*out_) << ... << args) << std::endl;
        }
    }

private:
    std::ostream* out_;
};

std::vector<std::string> ids_of(const std::vector<Trajectory>& trajs) {
    std::vector<std::string> ids;
    ids.reserve(trajs.size());
    for (const auto& t : trajs) {
        ids.push_back(t.id);
    }
    return ids;
}

std::vector<std::size_t> indices_of(const std::vector<std::string>& subset, const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        pos.emplace(ids[i], i);
    }
    std::vector<std::size_t> out;
    out.reserve(subset.size());
    for (const auto& id : subset) {
        out.push_back(pos.at(id));
    }
    return out;
}

// Trajectories of a CSV with their split, recomputed from the split seed.
struct Corpus {
    std::vector<Trajectory> trajs;
    std::vector<std::string> ids;
    std::vector<std::size_t> train, eval, test;
};

Corpus load_corpus(const CommandContext& ctx, const fs::path& csv) {
    Corpus c;
    c.trajs = load_trajectories(csv);
    c.ids = ids_of(c.trajs);
    const DatasetSplit split = split_dataset(c.ids, ctx.config.split_seed);
    c.train = indices_of(split.train, c.ids);
    c.eval = indices_of(split.eval, c.ids);
    c.test = indices_of(split.test, c.ids);
    return c;
}

GridSpec grid_of(const RunConfig& cfg) { return make_grid(cfg.bbox, cfg.cell_size); }

std::vector<TrajectoryFeatures> features_of(const std::vector<Trajectory>& trajs, const GridSpec& grid,
                                            const std::vector<std::size_t>& which) {
    std::vector<TrajectoryFeatures> out;
    out.reserve(which.size());
    for (std::size_t i : which) {
        try {
            out.push_back(extract_features(trajs[i], grid));
        } catch (const std::out_of_range& e) {
            throw DataError(std::string(e.what()) + " (run preprocess with the same bounding box first)");
        }
    }
    return out;
}

SamEncoder make_encoder(const RunConfig& cfg) { return SamEncoder(cfg.model); }

ParamStore initial_params(const SamEncoder& enc, const RunConfig& cfg, const std::optional<fs::path>& ckpt) {
    ParamStore p = enc.make_params(cfg.seed);
    if (ckpt) {
        load_params_into(*ckpt, p);
    }
    return p;
}

DistanceMatrix load_matching_matrix(const fs::path& path, std::size_t n) {
    DistanceMatrix m = load_matrix(path);
    if (m.size() != n) {
        throw DataError("matrix " + path.string() + " covers " + std::to_string(m.size()) +
                        " trajectories but the CSV has " + std::to_string(n));
    }
    return m;
}

FitOptions fit_options(const CommandContext& ctx, std::size_t epochs, std::size_t patience) {
    FitOptions o;
    o.epochs = epochs;
    o.patience = patience;
    o.batch_size = ctx.config.batch_size;
    o.lr = ctx.config.lr;
    o.seed = ctx.config.seed;
    o.threads = ctx.threads;
    return o;
}

void save_history(const fs::path& ckpt, const FitResult& r) {
    write_atomically(sibling(ckpt, ".loss.csv"), [&](std::ostream& out) { write_history_csv(out, r.history); });
}

}  // namespace

RunConfig resolve_config(const std::optional<fs::path>& path, std::optional<std::uint64_t> seed) {
    RunConfig cfg = path ? load_config(*path) : RunConfig{};
    if (seed) {
        cfg.seed = *seed;
    }
    cfg.validate();
    return cfg;
}

DistanceModel distance_model(const CommandContext& ctx) {
    return ctx.planar ? DistanceModel::planar() : DistanceModel::for_bbox(ctx.config.bbox);
}

fs::path sibling(const fs::path& base, const std::string& suffix) {
    fs::path p = base;
    p.replace_extension();
    p += suffix;
    return p;
}

PreprocessSummary cmd_preprocess(const CommandContext& ctx, const fs::path& in, const fs::path& out) {
    const Logger log(ctx.log);
    const RunConfig& cfg = ctx.config;
    const auto trajs = load_trajectories(in);
    const auto kept = preprocess(trajs, cfg.bbox, cfg.min_len, cfg.max_len);
    const auto ids = ids_of(kept);
    const DatasetSplit split = split_dataset(ids, cfg.split_seed);

    PreprocessSummary s{trajs.size(), kept.size(), trajs.size() - kept.size(),
                        split.train.size(), split.eval.size(), split.test.size()};
    save_trajectories(out, kept);
    write_atomically(sibling(out, ".split.csv"), [&](std::ostream& o) {
        o << "traj_id,split\n";
        for (const auto* part : {&split.train, &split.eval, &split.test}) {
            const char* name = part == &split.train ? "train" : part == &split.eval ? "eval" : "test";
            for (const auto& id : *part) {
                o << id << ',' << name << '\n';
            }
        }
    });
    log("preprocess: ", s.input, " trajectories read, ", s.removed, " removed, ", s.kept, " kept (train ", s.train,
        ", eval ", s.eval, ", test ", s.test, ")");
    return s;
}

DistanceMatrix cmd_distmatrix(const CommandContext& ctx, const fs::path& csv, Metric metric, const fs::path& out) {
    const Logger log(ctx.log);
    const auto trajs = load_trajectories(csv);
    const auto start = std::chrono::steady_clock::now();
    DistanceMatrix m = build_matrix(trajs, metric, distance_model(ctx), ctx.threads);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    save_matrix(out, m);
    const double pairs = static_cast<double>(trajs.size()) * static_cast<double>(trajs.size() - (trajs.empty() ? 0 : 1)) / 2.0;
    log("distmatrix: ", to_string(metric), " over ", trajs.size(), " trajectories in ", secs, " s (",
        secs > 0 ? pairs / secs : 0.0, " pairs/s)");
    return m;
}

FitResult cmd_pretrain(const CommandContext& ctx, const fs::path& csv, const fs::path& out_ckpt) {
    const Logger log(ctx.log);
    const RunConfig& cfg = ctx.config;
    const Corpus c = load_corpus(ctx, csv);
    const GridSpec grid = grid_of(cfg);
    auto resampled = [&](const std::vector<std::size_t>& which) {
        std::vector<TrajectoryFeatures> out;
        for (std::size_t i : which) {
            out.push_back(resampled_features(c.trajs[i], grid, cfg.ddbm.resample_len));
        }
        return out;
    };
    const auto train = resampled(c.train);
    const auto eval = resampled(c.eval);
    const SamEncoder enc = make_encoder(cfg);
    ParamStore params = initial_params(enc, cfg, std::nullopt);
    log("pretrain: ", train.size(), " training and ", eval.size(), " eval trajectories, ",
        params.parameter_count(), " parameters");
    const FitResult r =
        pretrain(enc, params, train, eval, cfg.ddbm, fit_options(ctx, cfg.pretrain_epochs, cfg.pretrain_patience),
                 [&](const EpochRecord& e) {
                     log("pretrain epoch ", e.epoch, ": train ", e.train_loss, ", eval ", e.eval_loss);
                 });
    save_params(out_ckpt, params);
    save_history(out_ckpt, r);
    log("pretrain: best eval loss ", r.best_eval_loss, " at epoch ", r.best_epoch);
    return r;
}

FitResult cmd_finetune(const CommandContext& ctx, const fs::path& csv, const fs::path& matrix,
                       const std::optional<fs::path>& in_ckpt, const fs::path& out_ckpt) {
    const Logger log(ctx.log);
    const RunConfig& cfg = ctx.config;
    const Corpus c = load_corpus(ctx, csv);
    const DistanceMatrix m = load_matching_matrix(matrix, c.trajs.size());
    const double tau = cfg.loss.resolve_tau(m.select(c.train));
    const GridSpec grid = grid_of(cfg);
    auto make_set = [&](const std::vector<std::size_t>& which) {
        return FinetuneSet{features_of(c.trajs, grid, which), similarity_from_distance(m.select(which), tau)};
    };
    const FinetuneSet train = make_set(c.train);
    const FinetuneSet eval = make_set(c.eval);
    const SamEncoder enc = make_encoder(cfg);
    ParamStore params = initial_params(enc, cfg, in_ckpt);
    log("finetune: ", train.features.size(), " training and ", eval.features.size(), " eval trajectories, tau ", tau,
        in_ckpt ? ", warm start from " + in_ckpt->string() : std::string(", cold start"));
    const FitResult r = finetune(enc, params, train, eval, cfg.loss.weights,
                                 fit_options(ctx, cfg.finetune_epochs, cfg.finetune_patience),
                                 [&](const EpochRecord& e) {
                                     log("finetune epoch ", e.epoch, ": train ", e.train_loss, ", eval ", e.eval_loss);
                                 });
    save_params(out_ckpt, params);
    save_history(out_ckpt, r);
    log("finetune: best eval loss ", r.best_eval_loss, " at epoch ", r.best_epoch);
    return r;
}

MetricReport cmd_evaluate(const CommandContext& ctx, const fs::path& csv, const fs::path& matrix,
                          const fs::path& ckpt, const fs::path& out) {
    const Logger log(ctx.log);
    const RunConfig& cfg = ctx.config;
    const Corpus c = load_corpus(ctx, csv);
    const DistanceMatrix m = load_matching_matrix(matrix, c.trajs.size());
    const SamEncoder enc = make_encoder(cfg);
    const ParamStore params = initial_params(enc, cfg, ckpt);
    const auto feats = features_of(c.trajs, grid_of(cfg), c.test);
    std::vector<std::string> test_ids;
    for (std::size_t i : c.test) {
        test_ids.push_back(c.ids[i]);
    }
    SuiteOptions opts;
    opts.threads = ctx.threads;
    MetricReport report;
    try {
        report = evaluate_suite(embed_all(enc, params, feats, ctx.threads), m.select(c.test), test_ids, opts);
    } catch (const std::out_of_range& e) {
        throw DataError("test split of " + std::to_string(test_ids.size()) + " trajectories is too small: " + e.what());
    }
    write_atomically(out, [&](std::ostream& o) { write_report_csv(o, report); });
    write_atomically(sibling(out, ".json"), [&](std::ostream& o) { o << report_json(report); });
    for (const auto& v : report.values) {
        log("evaluate: ", v.metric, "@", v.k, " = ", v.value);
    }
    return report;
}

std::vector<QueryHit> cmd_query(const CommandContext& ctx, const fs::path& ckpt, const fs::path& csv,
                                const std::string& query_id, std::size_t k) {
    const Logger log(ctx.log);
    const RunConfig& cfg = ctx.config;
    const auto trajs = load_trajectories(csv);
    const auto ids = ids_of(trajs);
    const auto it = std::find(ids.begin(), ids.end(), query_id);
    if (it == ids.end()) {
        throw DataError("query id '" + query_id + "' not found in " + csv.string());
    }
    if (ids.size() < 2) {
        throw DataError(csv.string() + " has no candidates besides the query");
    }
    if (k == 0) {
        throw std::invalid_argument("k must be positive");
    }
    if (k > ids.size() - 1) {
        log("query: warning: k = ", k, " exceeds the ", ids.size() - 1, " candidates; clamped");
        k = ids.size() - 1;
    }
    const SamEncoder enc = make_encoder(cfg);
    const ParamStore params = initial_params(enc, cfg, ckpt);
    std::vector<std::size_t> all(trajs.size());
    std::iota(all.begin(), all.end(), 0);
    const Tensor emb = embed_all(enc, params, features_of(trajs, grid_of(cfg), all), ctx.threads);
    const Ranking r = rank_candidates(static_cast<std::size_t>(it - ids.begin()), emb, ids);
    std::vector<QueryHit> hits;
    for (std::size_t i = 0; i < k; ++i) {
        hits.push_back({r.ids[i], std::exp(-r.distances[i])});
    }
    return hits;
}

std::size_t cmd_synth(const CommandContext& ctx, std::size_t count, std::size_t clusters, const fs::path& out) {
    SyntheticOptions o;
    o.count = count;
    o.clusters = clusters;
    o.bbox = ctx.config.bbox;
    o.seed = ctx.config.seed;
    o.min_len = ctx.config.min_len;
    o.max_len = std::min<std::size_t>(ctx.config.max_len, 76);
    if (o.min_len > o.max_len) {
        o.max_len = o.min_len;
    }
    const auto trajs = synthetic_trajectories(o);
    save_trajectories(out, trajs);
    Logger(ctx.log)("synth: wrote ", trajs.size(), " trajectories to ", out.string());
    return trajs.size();
}

}  // namespace trajsim
