// SPDX-License-Identifier: Apache-2.0
//
// Adam with linear warmup and step decay, gradient accumulation and the
// teacher-forced training loop.
//
//   lr(s) = base_lr * s / warmup                      s <= warmup
//   lr(s) = base_lr * factor^(#milestones <= s)       s >  warmup

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdsum/model.hpp"

namespace mdsum::train {

struct TrainConfig {
    double beta1 = 0.9;
    double beta2 = 0.998;
    double eps = 1e-9;
    double base_lr = 1e-3;
    long warmup_steps = 8000;
    /// Unset means {2 * warmup, 3 * warmup}.
    std::optional<std::vector<long>> decay_milestones;
    double decay_factor = 0.5;
    int accumulation = 4;
    long max_steps = 0;
    std::uint64_t seed = 0;
    int batch_size = 1;
    /// Updates between checkpoints; 0 writes only the final one.
    long checkpoint_every = 0;

    std::vector<long> milestones() const;
    void validate() const;

    nlohmann::ordered_json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

double lr_at(long step, const TrainConfig& cfg);

struct AdamState {
    std::vector<num::Tensor> m;
    std::vector<num::Tensor> v;

    /// Zero moments shaped like `params`.
    static AdamState zeros(std::span<num::Parameter* const> params);
};

/// One bias-corrected Adam update from each parameter's grad. Throws NumericError
/// naming the first parameter with a non-finite gradient; nothing is modified then.
void adam_step(std::span<num::Parameter* const> params, AdamState& state, long step, double lr,
               const TrainConfig& cfg);

struct TraceEntry {
    long step = 0;
    double lr = 0.0;
    double loss = 0.0;

    friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

/// `step<TAB>lr<TAB>loss` with round-trip precision.
std::string format_trace_line(const TraceEntry& e);

/// Sample order for one epoch: a seeded shuffle, then length-sorted buckets of
/// `bucket` samples whose order is shuffled again.
std::vector<std::size_t> epoch_order(std::span<const model::TrainingPair> corpus, std::uint64_t seed, long epoch,
                                     std::size_t bucket);

struct Checkpoint;

struct RunOutputs {
    /// Checkpoint file, rewritten atomically; empty disables checkpoints.
    std::filesystem::path checkpoint;
    /// Loss trace, appended to; empty disables it.
    std::filesystem::path trace;
    /// Stored in checkpoints so they are self-contained.
    std::vector<std::string> vocabulary;
};

class Trainer {
public:
    Trainer(model::Model& model, TrainConfig cfg);

    const TrainConfig& config() const noexcept { return cfg_; }
    TrainConfig& config() noexcept { return cfg_; }
    long step() const noexcept { return step_; }
    const AdamState& moments() const noexcept { return adam_; }

    /// One optimizer update. Each micro-batch loss is the mean over its samples;
    /// gradients are summed over micro-batches and divided by their count. Returns the
    /// mean micro-batch loss.
    double update(std::span<const std::vector<const model::TrainingPair*>> micro_batches);

    /// Trains until step() == max_steps, drawing accumulation micro-batches of
    /// batch_size samples per update. Returns the trace of the updates made.
    std::vector<TraceEntry> run(std::span<const model::TrainingPair> corpus, const RunOutputs& out = {});

    Checkpoint snapshot(std::vector<std::string> vocabulary = {}) const;
    /// Restores parameters, moments, step and RNG state. The model must have been
    /// built with the checkpoint's configuration.
    void restore(const Checkpoint& cp);

private:
    model::Model& model_;
    TrainConfig cfg_;
    std::vector<num::Parameter*> params_;
    AdamState adam_;
    long step_ = 0;
    std::mt19937_64 rng_;
};

}  // namespace mdsum::train
