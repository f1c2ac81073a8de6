// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint container.
//
//   "MDSUMCKP" | u32 version | u32 section count
//   per section: u32 name length | name | u64 payload length | payload
//
// Integers and doubles are little-endian. Tensor payloads carry a shape table
// (name, rank, extents) ahead of the raw values.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdsum/model.hpp"
#include "mdsum/training.hpp"

namespace mdsum::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    num::Tensor value;

    friend bool operator==(const NamedTensor& a, const NamedTensor& b) {
        return a.name == b.name && a.value.shape() == b.value.shape() && a.value.storage() == b.value.storage();
    }
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    model::ModelConfig model;
    TrainConfig train;
    std::vector<std::string> vocabulary;
    std::vector<std::string> relations;
    std::size_t relation_capacity = 0;
    std::vector<NamedTensor> params;
    std::vector<num::Tensor> adam_m;
    std::vector<num::Tensor> adam_v;
    long step = 0;
    std::string rng_state;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& cp);
/// Throws CheckpointError naming the offending section.
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes to a temporary sibling and renames it over `path`.
void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the model stored in a checkpoint.
model::Model restore_model(const Checkpoint& cp);

}  // namespace mdsum::train
