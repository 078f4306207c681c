#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trajsim/config.hpp"
#include "trajsim/heuristics.hpp"
#include "trajsim/retrieval.hpp"
#include "trajsim/training.hpp"

namespace trajsim {

namespace fs = std::filesystem;

/// Settings shared by every subcommand.
struct CommandContext {
    RunConfig config;
    std::size_t threads = 0;  // 0 = hardware concurrency
    bool planar = false;
    std::ostream* log = nullptr;  // progress messages; null discards them
};

/// Config from `path` (defaults when absent) with an optional seed override.
RunConfig resolve_config(const std::optional<fs::path>& path, std::optional<std::uint64_t> seed);

DistanceModel distance_model(const CommandContext& ctx);

/// Path next to `base` with its extension replaced by `suffix`
/// ("run/model.tsps" + ".loss.csv" -> "run/model.loss.csv").
fs::path sibling(const fs::path& base, const std::string& suffix);

struct PreprocessSummary {
    std::size_t input = 0;
    std::size_t kept = 0;
    std::size_t removed = 0;
    std::size_t train = 0;
    std::size_t eval = 0;
    std::size_t test = 0;
};

/// Filters `in` by the configured bounding box and length range, writes the
/// survivors to `out` and an `id,split` manifest to `<out>.split.csv`.
PreprocessSummary cmd_preprocess(const CommandContext& ctx, const fs::path& in, const fs::path& out);

/// Heuristic matrix over every trajectory of `csv` in file order.
DistanceMatrix cmd_distmatrix(const CommandContext& ctx, const fs::path& csv, Metric metric, const fs::path& out);

/// Bridge pretraining on the training split, early-stopped on the eval
/// split. Writes the checkpoint and `<ckpt>.loss.csv`.
FitResult cmd_pretrain(const CommandContext& ctx, const fs::path& csv, const fs::path& out_ckpt);

/// Fine-tuning on the training split against `matrix`, starting from
/// `in_ckpt` when given and from fresh parameters otherwise. Writes the best
/// checkpoint and `<ckpt>.loss.csv`.
FitResult cmd_finetune(const CommandContext& ctx, const fs::path& csv, const fs::path& matrix,
                       const std::optional<fs::path>& in_ckpt, const fs::path& out_ckpt);

/// Metrics on the test split. Writes the CSV report to `out` and a JSON copy
/// to `<out>.json`.
MetricReport cmd_evaluate(const CommandContext& ctx, const fs::path& csv, const fs::path& matrix,
                          const fs::path& ckpt, const fs::path& out);

struct QueryHit {
    std::string id;
    double similarity = 0.0;
};

/// The k most similar trajectories of `csv` to `query_id`; k is clamped to
/// the corpus size with a warning.
std::vector<QueryHit> cmd_query(const CommandContext& ctx, const fs::path& ckpt, const fs::path& csv,
                                const std::string& query_id, std::size_t k);

/// Writes a synthetic clustered corpus inside the configured bounding box.
std::size_t cmd_synth(const CommandContext& ctx, std::size_t count, std::size_t clusters, const fs::path& out);

}  // namespace trajsim
