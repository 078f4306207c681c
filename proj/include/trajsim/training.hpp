#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "trajsim/bridge.hpp"
#include "trajsim/ranking.hpp"
#include "trajsim/sam.hpp"

namespace trajsim {

struct FitOptions {
    std::size_t epochs = 30;
    std::size_t patience = 10;
    std::size_t batch_size = 128;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double eval_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

struct FitResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;  // 0 when no epoch improved on the initial parameters
    double initial_eval_loss = 0.0;
    double best_eval_loss = 0.0;
    bool stopped_early = false;
};

/// `epoch,train_loss,eval_loss` rows with a header.
void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

/// Trajectories with their target similarity matrix (rows and columns in
/// the order of `features`).
struct FinetuneSet {
    std::vector<TrajectoryFeatures> features;
    Tensor target;
};

/// One 1 x d embedding per trajectory, stacked into N x d.
Tensor embed_all(const SamEncoder& enc, const ParamStore& params, const std::vector<TrajectoryFeatures>& features,
                 std::size_t threads = 1);

/// Consecutive index batches of at most `batch_size`; a tail shorter than
/// `min_size` is folded into the previous batch.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch_size,
                                                   std::size_t min_size);

struct BatchResult {
    double total = 0.0;
    double mse = 0.0;
    double listnet = 0.0;
    double rd_listnet = 0.0;
};

/// Encodes the batch, evaluates the total loss and, when `grads` is non-null,
/// adds its parameter gradients. Each trajectory is encoded on its own tape;
/// gradients are merged in batch order so the result does not depend on
/// `threads`.
BatchResult finetune_batch(const SamEncoder& enc, const ParamStore& params, const FinetuneSet& set,
                           const std::vector<std::size_t>& batch, const LossWeights& w, std::size_t threads,
                           Gradients* grads);

/// Mean total loss over consecutive batches of the whole set.
double finetune_eval_loss(const SamEncoder& enc, const ParamStore& params, const FinetuneSet& set,
                          const LossWeights& w, const FitOptions& opts);

/// Fine-tunes with Adam on shuffled batches and early stopping on the eval
/// loss. On return `params` holds the best parameters seen, including the
/// initial ones.
FitResult finetune(const SamEncoder& enc, ParamStore& params, const FinetuneSet& train, const FinetuneSet& eval,
                   const LossWeights& w, const FitOptions& opts, const EpochCallback& on_epoch = {});

/// Bridge pretraining: every epoch pairs each training trajectory with a
/// random other one. The eval loss uses fixed pairs, times and noise so it
/// is comparable across epochs. `train` and `eval` hold resampled features.
FitResult pretrain(const SamEncoder& enc, ParamStore& params, const std::vector<TrajectoryFeatures>& train,
                   const std::vector<TrajectoryFeatures>& eval, const DdbmConfig& cfg, const FitOptions& opts,
                   const EpochCallback& on_epoch = {});

/// Mean bridge loss over the fixed evaluation pairs (i, i + 1 mod n).
double pretrain_eval_loss(const SamEncoder& enc, const ParamStore& params, const std::vector<TrajectoryFeatures>& set,
                          const DdbmConfig& cfg, std::uint64_t seed, std::size_t threads);

}  // namespace trajsim
