// SPDX-License-Identifier: Apache-2.0
//
// Transformer encoder-decoder with document-aware positional input and
// dependency-weighted encoder self-attention.
//
// Encoder input for token t of document k:
//   E_t = e_t + alpha * f_doc(k) + PE_token(t)
// Encoder self-attention per head, with the pair-weight matrix M broadcast
// over heads:
//   A = softmax(Q K^T / sqrt(d_k)),  A~ = M (.) A + A,  out = A~ V
// A~ is not renormalised. The decoder is a standard causal decoder with
// token-level positions only.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"
#include "mdsum/dependency.hpp"
#include "mdsum/encodings.hpp"
#include "mdsum/ops.hpp"

namespace mdsum::model {

struct ModelConfig {
    int d_model = 512;
    int heads = 8;
    int layers = 8;
    /// Feed-forward width; 0 means 4 * d_model.
    int d_ff = 0;
    int vocab_size = 0;
    double dropout = 0.1;
    enc::PositionalPlan positional;
    dep::MaskStrategy mask = dep::MaskStrategy::LearnedOneHot;
    int relation_capacity = static_cast<int>(dep::kDefaultRelationCapacity);
    int dep_hidden = 64;
    double leaky_slope = 0.01;
    int max_source_len = 2048;
    /// Over-long sources are cut to max_source_len when set, rejected otherwise.
    bool truncate = true;
    double ln_eps = 1e-6;

    int d_k() const { return d_model / heads; }
    int ff_width() const { return d_ff > 0 ? d_ff : 4 * d_model; }
    /// Throws ConfigError on inconsistent settings; also checks positional.d_model == d_model.
    void validate() const;

    nlohmann::ordered_json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

/// One encoder input: token ids, the 1-based document index of every token, and the
/// relation tensor over the same positions.
struct SourceInput {
    std::vector<int> tokens;
    std::vector<int> doc_index;
    dep::DepRelationTensor relations;
};

struct TrainingPair {
    SourceInput source;
    /// Summary token ids without start/end markers.
    std::vector<int> summary;
};

struct AttentionParams {
    num::Parameter wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FeedForwardParams {
    num::Parameter w1, b1, w2, b2;
};

struct NormParams {
    num::Parameter gain, bias;
};

struct EncoderLayerParams {
    AttentionParams self;
    NormParams norm1;
    FeedForwardParams ff;
    NormParams norm2;
};

struct DecoderLayerParams {
    AttentionParams self;
    NormParams norm1;
    AttentionParams cross;
    NormParams norm2;
    FeedForwardParams ff;
    NormParams norm3;
};

struct ModelParams {
    num::Parameter embedding;
    std::vector<EncoderLayerParams> encoder;
    std::vector<DecoderLayerParams> decoder;
    num::Parameter out_w, out_b;
    dep::DepEncoderParams dep;

    /// Embedding ~ N(0, 0.02^2); matrices Glorot-uniform; biases 0; norm gains 1.
    static ModelParams init(const ModelConfig& config, std::uint64_t seed);

    /// Every learnable parameter in a fixed order with unique names. The dependency
    /// encoder is included only for learned mask strategies.
    std::vector<num::Parameter*> all(const ModelConfig& config);
    std::size_t count(const ModelConfig& config);
};

/// Multi-head attention core on [h,T,d_k] projections. `mask`, when present, is the
/// [h,Tq,Tk] pair-weight tensor fused as A~ = M (.) A + A. `key_allowed` broadcasts as a
/// shape suffix of the [h,Tq,Tk] scores (a [Tk] padding mask or a [Tq,Tk] causal mask);
/// an empty tensor allows every key.
num::Var fused_attention(num::Var q, num::Var k, num::Var v, std::optional<num::Var> mask,
                         const num::Tensor& key_allowed);

class Model {
public:
    Model(ModelConfig config, std::uint64_t seed, dep::RelationVocab relations = {});
    Model(ModelConfig config, ModelParams params, dep::RelationVocab relations);

    const ModelConfig& config() const noexcept { return config_; }
    ModelParams& params() noexcept { return params_; }
    const ModelParams& params() const noexcept { return params_; }
    const dep::RelationVocab& relations() const noexcept { return relations_; }
    std::vector<num::Parameter*> parameters() { return params_.all(config_); }

    /// Applies the configured length policy (truncation or ConfigError).
    SourceInput fit_source(const SourceInput& source) const;

    /// [T,T] pair weights for the configured strategy; nullopt for MaskStrategy::None.
    std::optional<num::Var> dependency_mask(num::Tape& tape, const SourceInput& source);

    /// Encoder memory [T, d_model]. Dropout is active iff `rng` is non-null.
    num::Var encode(num::Tape& tape, const SourceInput& source, std::mt19937_64* rng = nullptr);
    /// Logits [len(prefix), vocab] for a decoder prefix that starts with the start token.
    num::Var decode(num::Tape& tape, std::span<const int> prefix, num::Var memory, std::mt19937_64* rng = nullptr);
    /// Teacher-forced mean token cross-entropy of the summary followed by the end token.
    num::Var loss(num::Tape& tape, const TrainingPair& pair, std::mt19937_64* rng = nullptr);

    /// Greedy decoding. The end token is masked out until min_len tokens exist; decoding
    /// stops at the end token or after max_len tokens. The end token is not returned.
    std::vector<int> generate(const SourceInput& source, int min_len, int max_len) const;

private:
    ModelConfig config_;
    ModelParams params_;
    dep::RelationVocab relations_;
    std::optional<dep::RelationWeightStrategy> fixed_weights_;
};

}  // namespace mdsum::model
