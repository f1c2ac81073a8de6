// SPDX-License-Identifier: Apache-2.0
//
// Dependency relation tensor and the pairwise attention weights built from it.
//
// For a token sequence of length T the relation tensor lists, for every pair
// (i, j) joined by a dependency arc, the index of the arc's relation label.
// Pairs without an arc carry no relation. A pair weight m_ij is then produced
// either by a small learned network over the relation one-hot or by a fixed
// arithmetic-sequence table, and is broadcast over attention heads.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mdsum/conllu.hpp"
#include "mdsum/ops.hpp"

namespace mdsum::dep {

inline constexpr std::size_t kDefaultRelationCapacity = 45;

class RelationVocab {
public:
    RelationVocab() = default;
    /// Labels in rank order (most frequent first). Throws ConfigError if they do not fit.
    RelationVocab(std::vector<std::string> labels, std::size_t capacity);

    /// Index of `label`, or unk() when it is not in the vocabulary.
    std::size_t index(const std::string& label) const;
    bool contains(const std::string& label) const { return index_.count(label) != 0; }
    const std::string& label(std::size_t i) const;

    /// Index reserved for unknown labels; follows the known labels.
    std::size_t unk() const noexcept { return labels_.size(); }
    std::size_t known() const noexcept { return labels_.size(); }
    /// Known labels plus UNK.
    std::size_t size() const noexcept { return labels_.size() + 1; }
    /// One-hot width N.
    std::size_t capacity() const noexcept { return capacity_; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t capacity_ = kDefaultRelationCapacity;
};

/// Ranks labels by corpus frequency (ties lexicographic) and keeps the top capacity-1.
RelationVocab build_relation_vocab(std::span<const DependencyParse> parses,
                                   std::size_t capacity = kDefaultRelationCapacity);

class DepRelationTensor {
public:
    explicit DepRelationTensor(std::size_t seq_len = 0) : seq_len_(seq_len) {}

    std::size_t seq_len() const noexcept { return seq_len_; }
    /// Relation index of pair (i, j), if the pair is related.
    std::optional<std::size_t> at(std::size_t i, std::size_t j) const;
    /// Sets (i, j); throws IndexError outside the sequence.
    void set(std::size_t i, std::size_t j, std::size_t relation);
    std::size_t entry_count() const noexcept { return entries_.size(); }
    /// Entries in row-major order.
    std::vector<num::PairRelation> entries() const;

private:
    std::size_t seq_len_ = 0;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> entries_;
};

/// Fills both (dependent, head) and (head, dependent) with the arc's relation and the
/// diagonal of every sentence root with vocab.index("root"). `sentence_offsets[s]` is
/// the position of sentence s's first token inside the sequence.
DepRelationTensor build_dep_tensor(const DependencyParse& parse, const RelationVocab& vocab,
                                   std::span<const std::size_t> sentence_offsets, std::size_t seq_len);
/// Sentences laid out back to back from position 0.
DepRelationTensor build_dep_tensor(const DependencyParse& parse, const RelationVocab& vocab);

/// Parameters of the relation-to-weight network.
///   two layers: m = W2^T LeakyReLU(W1^T onehot(r) + b1) + b2
///   one layer:  m = W1^T onehot(r) + b1   (W1 is [N x 1])
struct DepEncoderParams {
    num::Parameter w1;
    num::Parameter b1;
    num::Parameter w2;
    num::Parameter b2;
    double slope = 0.01;
    bool one_layer = false;

    /// Glorot-uniform weights and zero biases from `seed`.
    static DepEncoderParams init(std::size_t n_relations, std::size_t hidden, std::uint64_t seed, bool one_layer = false);
    std::size_t relations() const { return w1.value.extent(0); }
    std::vector<num::Parameter*> parameters();
};

/// Per-relation weights as an [N,1] column on the tape.
num::Var relation_scores(num::Tape& tape, DepEncoderParams& params);
/// Differentiable [T,T] weight matrix; unrelated pairs are exactly 0.
num::Var encode_pair_learned(num::Tape& tape, const DepRelationTensor& tensor, DepEncoderParams& params);
/// Same values computed directly from the parameter values, without a tape.
num::Tensor encode_pair_learned(const DepRelationTensor& tensor, const DepEncoderParams& params);

enum class MaskStrategy { None, LearnedOneHot, LearnedOneLayer, ArithOccurrence, ArithCore, ArithRoot };

MaskStrategy parse_mask_strategy(const std::string& name);
std::string mask_strategy_name(MaskStrategy strategy);
bool is_learned(MaskStrategy s);
bool is_fixed(MaskStrategy s);

/// Core dependents of clausal predicates, in table order (aliases share a slot).
const std::vector<std::vector<std::string>>& core_relation_slots();

struct RelationWeightStrategy {
    MaskStrategy kind = MaskStrategy::ArithOccurrence;
    /// Weight per vocab index. Known labels take the values {1, (N-1)/N, ..., 1/N}
    /// with N = vocab.known(); the UNK slot weighs 0.
    std::vector<double> weight_table;
};

/// Builds the arithmetic-sequence table for a fixed strategy:
///   ArithOccurrence: vocab rank order;
///   ArithCore: core relations present in the vocab first, then the rest by rank;
///   ArithRoot: "root" first, then the rest by rank.
RelationWeightStrategy build_weight_strategy(MaskStrategy kind, const RelationVocab& vocab);

/// [T,T] matrix of table weights for related pairs, 0 elsewhere.
num::Tensor encode_pair_fixed(const DepRelationTensor& tensor, const RelationWeightStrategy& strategy,
                              const RelationVocab& vocab);

/// Broadcasts m[T,T] to M[h,T,T].
num::Tensor stack_heads(const num::Tensor& m, std::size_t heads);

struct ParseStats {
    std::size_t sentences = 0;
    std::size_t tokens = 0;
    std::size_t arcs = 0;
    std::map<std::string, std::size_t> relation_counts;
    /// arcs-per-sentence -> number of sentences
    std::map<std::size_t, std::size_t> arc_histogram;

    void add(const DependencyParse& parse);
    /// Text report: totals, relation table by descending frequency, histogram.
    std::string to_text() const;
};

}  // namespace mdsum::dep
