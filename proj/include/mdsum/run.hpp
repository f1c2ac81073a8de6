// SPDX-License-Identifier: Apache-2.0
//
// Run configuration and the end-to-end training and generation pipelines
// behind the command-line tool.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdsum/checkpoint.hpp"
#include "mdsum/corpus.hpp"
#include "mdsum/model.hpp"
#include "mdsum/training.hpp"

namespace mdsum::run {

/// Flat JSON object. Keys: corpus, output_dir, vocab_size, seed, every ModelConfig
/// field except vocab_size (doc_fn and alpha for the positional plan) and every
/// TrainConfig field except seed. Missing keys take defaults; unknown keys are rejected.
struct RunConfig {
    std::filesystem::path corpus;
    std::filesystem::path output_dir;
    /// Upper bound on the vocabulary, reserved tokens included.
    std::size_t vocab_size = 30000;
    std::uint64_t seed = 0;
    model::ModelConfig model;
    train::TrainConfig train;

    void validate() const;
    nlohmann::ordered_json to_json() const;
    /// Relative paths resolve against `base`.
    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
    static RunConfig load(const std::filesystem::path& file);
};

struct RunArtifacts {
    std::filesystem::path checkpoint;
    std::filesystem::path trace;
    std::filesystem::path log;
    std::vector<train::TraceEntry> trace_entries;
};

inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kTraceFile = "loss_trace.tsv";
inline constexpr const char* kLogFile = "train.log";

/// Builds vocabularies from the corpus, trains, and writes checkpoint, loss trace and
/// log into output_dir. An existing checkpoint there is resumed. The resolved config is
/// logged as one JSON line; `echo` (if given) receives the log lines too.
RunArtifacts train(const RunConfig& config, std::ostream* echo = nullptr);

/// Greedy summary for one sample with a trained checkpoint.
std::string generate(const train::Checkpoint& checkpoint, const data::CorpusSample& sample, int min_len, int max_len);

}  // namespace mdsum::run
