#include "trajsim/training.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include "trajsim/error.hpp"
#include "trajsim/parallel.hpp"

namespace trajsim {

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
    out << "epoch,train_loss,eval_loss\n";
    out.precision(17);
    for (const auto& r : history) {
        out << r.epoch << ',' << r.train_loss << ',' << r.eval_loss << '\n';
    }
}

Tensor embed_all(const SamEncoder& enc, const ParamStore& params, const std::vector<TrajectoryFeatures>& features,
                 std::size_t threads) {
    const std::size_t d = enc.config().d;
    Tensor out(features.size(), d);
    parallel_for(features.size(), threads, [&](std::size_t i, std::size_t) {
        const Tensor e = enc.embed(params, features[i]);
        std::copy(e.values().begin(), e.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(i * d));
    });
    return out;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch_size,
                                                   std::size_t min_size) {
    if (batch_size == 0) {
        throw std::invalid_argument("batch size must be positive");
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
        if (b.size() < min_size && !batches.empty()) {
            batches.back().insert(batches.back().end(), b.begin(), b.end());
        } else {
            batches.push_back(std::move(b));
        }
    }
    return batches;
}

namespace {

void check_set(const FinetuneSet& set) {
    const std::size_t n = set.features.size();
    if (set.target.rank() != 2 || set.target.rows() != n || set.target.cols() != n) {
        throw DataError("target similarity matrix " + set.target.shape_string() + " does not match " +
                        std::to_string(n) + " trajectories");
    }
}

}  // namespace

BatchResult finetune_batch(const SamEncoder& enc, const ParamStore& params, const FinetuneSet& set,
                           const std::vector<std::size_t>& batch, const LossWeights& w, std::size_t threads,
                           Gradients* grads) {
    const std::size_t b = batch.size();
    std::vector<std::unique_ptr<Graph>> tapes(b);
    std::vector<Var> embeddings(b);
    parallel_for(b, threads, [&](std::size_t i, std::size_t) {
        tapes[i] = std::make_unique<Graph>();
        Graph& g = *tapes[i];
        const TrajectoryFeatures& f = set.features[batch[i]];
        embeddings[i] = enc.encode(g, params, g.constant(f.gps), g.constant(f.grid));
    });

    Tensor h(b, enc.config().d);
    for (std::size_t i = 0; i < b; ++i) {
        std::copy(embeddings[i].value().values().begin(), embeddings[i].value().values().end(),
                  h.values().begin() + static_cast<std::ptrdiff_t>(i * h.cols()));
    }
    Tensor target(b, b);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            target(i, j) = set.target(batch[i], batch[j]);
        }
    }

    Graph loss_tape;
    Var hv = loss_tape.variable(h);
    const BatchLoss loss = batch_loss(hv, target, w);
    BatchResult out{loss.total.value().item(), loss.mse, loss.listnet, loss.rd_listnet};
    if (!std::isfinite(out.total)) {
        throw NumericError("fine-tuning loss is not finite (mse " + std::to_string(out.mse) + ", listnet " +
                           std::to_string(out.listnet) + ", rd-listnet " + std::to_string(out.rd_listnet) + ")");
    }
    if (!grads) {
        return out;
    }
    loss_tape.backward(loss.total);
    const Tensor dh = loss_tape.grad(hv);

    std::vector<Gradients> partial(b);
    parallel_for(b, threads, [&](std::size_t i, std::size_t) {
        Tensor seed(1, h.cols());
        std::copy(dh.values().begin() + static_cast<std::ptrdiff_t>(i * h.cols()),
                  dh.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * h.cols()), seed.values().begin());
        tapes[i]->backward(embeddings[i], seed);
        partial[i] = params.make_gradients();
        tapes[i]->accumulate_param_grads(partial[i]);
        tapes[i].reset();
    });
    for (const auto& p : partial) {
        grads->merge(p);
    }
    return out;
}

double finetune_eval_loss(const SamEncoder& enc, const ParamStore& params, const FinetuneSet& set,
                          const LossWeights& w, const FitOptions& opts) {
    check_set(set);
    std::vector<std::size_t> order(set.features.size());
    std::iota(order.begin(), order.end(), 0);
    const auto batches = make_batches(order, opts.batch_size, 3);
    double total = 0.0;
    for (const auto& b : batches) {
        total += finetune_batch(enc, params, set, b, w, opts.threads, nullptr).total;
    }
    return total / static_cast<double>(batches.size());
}

namespace {

// Shared epoch loop with early stopping on the eval loss.
template <typename TrainEpoch, typename EvalLoss>
FitResult fit(ParamStore& params, const FitOptions& opts, TrainEpoch&& train_epoch, EvalLoss&& eval_loss,
              const EpochCallback& on_epoch) {
    FitResult result;
    result.initial_eval_loss = eval_loss();
    result.best_eval_loss = result.initial_eval_loss;
    ParamStore best = params;
    Adam adam(AdamOptions{opts.lr, 0.9, 0.999, 1e-8});
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = train_epoch(epoch, adam);
        rec.eval_loss = eval_loss();
        if (!std::isfinite(rec.eval_loss)) {
            throw NumericError("eval loss is not finite at epoch " + std::to_string(epoch));
        }
        result.history.push_back(rec);
        if (on_epoch) {
            on_epoch(rec);
        }
        if (rec.eval_loss < result.best_eval_loss) {
            result.best_eval_loss = rec.eval_loss;
            result.best_epoch = epoch;
            best.assign(params);
            since_best = 0;
        } else if (++since_best >= opts.patience) {
            result.stopped_early = epoch < opts.epochs;
            break;
        }
    }
    params.assign(best);
    return result;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(rng)]);
    }
    return order;
}

// Distinct stream per (seed, epoch, item) so results do not depend on
// scheduling.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t item) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(item)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

FitResult finetune(const SamEncoder& enc, ParamStore& params, const FinetuneSet& train, const FinetuneSet& eval,
                   const LossWeights& w, const FitOptions& opts, const EpochCallback& on_epoch) {
    check_set(train);
    check_set(eval);
    if (train.features.size() < 3 || eval.features.size() < 3) {
        throw DataError("fine-tuning needs at least 3 training and 3 eval trajectories");
    }
    auto train_epoch = [&](std::size_t epoch, Adam& adam) {
        const auto batches = make_batches(shuffled(train.features.size(), stream_seed(opts.seed, epoch, 0)),
                                          opts.batch_size, 3);
        double total = 0.0;
        for (const auto& b : batches) {
            params.zero_grad();
            total += finetune_batch(enc, params, train, b, w, opts.threads, &params.grads()).total;
            adam.step(params);
        }
        return total / static_cast<double>(batches.size());
    };
    auto eval_loss = [&] { return finetune_eval_loss(enc, params, eval, w, opts); };
    return fit(params, opts, train_epoch, eval_loss, on_epoch);
}

double pretrain_eval_loss(const SamEncoder& enc, const ParamStore& params, const std::vector<TrajectoryFeatures>& set,
                          const DdbmConfig& cfg, std::uint64_t seed, std::size_t threads) {
    const std::size_t n = set.size();
    if (n < 2) {
        throw DataError("bridge evaluation needs at least 2 trajectories");
    }
    std::vector<double> losses(n);
    parallel_for(n, threads, [&](std::size_t i, std::size_t) {
        std::mt19937_64 rng(stream_seed(seed, 0, i));
        losses[i] = pretrain_step(enc, params, cfg, set[i], set[(i + 1) % n], rng, nullptr).loss;
    });
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(n);
}

FitResult pretrain(const SamEncoder& enc, ParamStore& params, const std::vector<TrajectoryFeatures>& train,
                   const std::vector<TrajectoryFeatures>& eval, const DdbmConfig& cfg, const FitOptions& opts,
                   const EpochCallback& on_epoch) {
    cfg.validate();
    const std::size_t n = train.size();
    if (n < 2) {
        throw DataError("bridge pretraining needs at least 2 training trajectories");
    }
    auto train_epoch = [&](std::size_t epoch, Adam& adam) {
        const auto order = shuffled(n, stream_seed(opts.seed, epoch, 0));
        std::mt19937_64 partner_rng(stream_seed(opts.seed, epoch, 1));
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        pairs.reserve(n);
        for (std::size_t i : order) {
            std::uniform_int_distribution<std::size_t> pick(0, n - 2);
            std::size_t j = pick(partner_rng);
            if (j >= i) {
                ++j;
            }
            pairs.emplace_back(i, j);
        }
        double total = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < pairs.size(); start += opts.batch_size) {
            const std::size_t end = std::min(pairs.size(), start + opts.batch_size);
            const std::size_t b = end - start;
            std::vector<double> losses(b);
            std::vector<Gradients> partial(b);
            parallel_for(b, opts.threads, [&](std::size_t k, std::size_t) {
                const auto [i, j] = pairs[start + k];
                std::mt19937_64 rng(stream_seed(opts.seed, epoch, 2 + start + k));
                partial[k] = params.make_gradients();
                losses[k] = pretrain_step(enc, params, cfg, train[i], train[j], rng, &partial[k]).loss;
            });
            params.zero_grad();
            for (const auto& p : partial) {
                params.grads().merge(p);
            }
            const double inv_b = 1.0 / static_cast<double>(b);
            for (std::size_t p = 0; p < params.size(); ++p) {
                for (auto& v : params.grads()[p].values()) {
                    v *= inv_b;
                }
            }
            adam.step(params);
            total += std::accumulate(losses.begin(), losses.end(), 0.0) * inv_b;
            ++steps;
        }
        return total / static_cast<double>(steps);
    };
    auto eval_loss = [&] { return pretrain_eval_loss(enc, params, eval, cfg, opts.seed, opts.threads); };
    return fit(params, opts, train_epoch, eval_loss, on_epoch);
}

}  // namespace trajsim
