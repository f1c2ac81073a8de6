// SPDX-License-Identifier: Apache-2.0

#include "mdsum/dependency.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mdsum/errors.hpp"

namespace mdsum::dep {

RelationVocab::RelationVocab(std::vector<std::string> labels, std::size_t capacity)
    : labels_(std::move(labels)), capacity_(capacity) {
    if (capacity_ < 2) throw ConfigError("relation vocabulary capacity must be >= 2");
    if (labels_.size() + 1 > capacity_)
        throw ConfigError(std::to_string(labels_.size()) + " relation labels plus UNK exceed capacity " +
                          std::to_string(capacity_));
    for (std::size_t i = 0; i < labels_.size(); ++i)
        if (!index_.emplace(labels_[i], i).second) throw ConfigError("duplicate relation label " + labels_[i]);
}

std::size_t RelationVocab::index(const std::string& label) const {
    auto it = index_.find(label);
    return it == index_.end() ? unk() : it->second;
}

const std::string& RelationVocab::label(std::size_t i) const {
    static const std::string unk_label = "<unk>";
    if (i == unk()) return unk_label;
    if (i > unk()) throw IndexError("relation index " + std::to_string(i) + " out of range");
    return labels_[i];
}

RelationVocab build_relation_vocab(std::span<const DependencyParse> parses, std::size_t capacity) {
    if (capacity < 2) throw ConfigError("relation vocabulary capacity must be >= 2");
    std::map<std::string, std::size_t> counts;
    for (const auto& p : parses)
        for (const auto& s : p.sentences)
            for (const auto& r : s.relations) ++counts[r];
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    // counts is already lexicographic, so a stable sort on frequency breaks ties by label.
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < ranked.size() && i + 1 < capacity; ++i) labels.push_back(ranked[i].first);
    return RelationVocab(std::move(labels), capacity);
}

std::optional<std::size_t> DepRelationTensor::at(std::size_t i, std::size_t j) const {
    auto it = entries_.find({i, j});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void DepRelationTensor::set(std::size_t i, std::size_t j, std::size_t relation) {
    if (i >= seq_len_ || j >= seq_len_)
        throw IndexError("relation pair (" + std::to_string(i) + "," + std::to_string(j) + ") outside sequence of " +
                         std::to_string(seq_len_));
    entries_[{i, j}] = relation;
}

std::vector<num::PairRelation> DepRelationTensor::entries() const {
    std::vector<num::PairRelation> out;
    out.reserve(entries_.size());
    for (const auto& [pair, r] : entries_) out.push_back({pair.first, pair.second, r});
    return out;
}

DepRelationTensor build_dep_tensor(const DependencyParse& parse, const RelationVocab& vocab,
                                   std::span<const std::size_t> sentence_offsets, std::size_t seq_len) {
    if (sentence_offsets.size() != parse.sentences.size())
        throw StructuralError(std::to_string(sentence_offsets.size()) + " offsets for " +
                              std::to_string(parse.sentences.size()) + " sentences");
    DepRelationTensor tensor(seq_len);
    const std::size_t root_rel = vocab.index("root");
    for (std::size_t s = 0; s < parse.sentences.size(); ++s) {
        const Sentence& sent = parse.sentences[s];
        const std::size_t off = sentence_offsets[s];
        if (off + sent.size() > seq_len)
            throw StructuralError("sentence " + std::to_string(s) + " at offset " + std::to_string(off) +
                                  " overflows sequence of " + std::to_string(seq_len));
        for (std::size_t d = 0; d < sent.size(); ++d) {
            if (sent.heads[d] == kRootHead) {
                tensor.set(off + d, off + d, root_rel);
                continue;
            }
            const std::size_t h = static_cast<std::size_t>(sent.heads[d]);
            const std::size_t r = vocab.index(sent.relations[d]);
            tensor.set(off + d, off + h, r);
            tensor.set(off + h, off + d, r);
        }
    }
    return tensor;
}

DepRelationTensor build_dep_tensor(const DependencyParse& parse, const RelationVocab& vocab) {
    std::vector<std::size_t> offsets;
    std::size_t pos = 0;
    for (const auto& s : parse.sentences) {
        offsets.push_back(pos);
        pos += s.size();
    }
    return build_dep_tensor(parse, vocab, offsets, pos);
}

namespace {

num::Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    num::Tensor t(num::Shape{fan_in, fan_out});
    for (double& v : t.data()) v = limit * (2.0 * num::uniform01(rng) - 1.0);
    return t;
}

}  // namespace

DepEncoderParams DepEncoderParams::init(std::size_t n_relations, std::size_t hidden, std::uint64_t seed,
                                        bool one_layer) {
    if (n_relations == 0 || hidden == 0) throw ConfigError("dependency encoder needs N >= 1 and H >= 1");
    std::mt19937_64 rng(seed);
    DepEncoderParams p;
    p.one_layer = one_layer;
    const std::size_t first_out = one_layer ? 1 : hidden;
    p.w1 = num::Parameter("dep.w1", glorot(n_relations, first_out, rng));
    p.b1 = num::Parameter("dep.b1", num::Tensor(num::Shape{first_out}));
    if (!one_layer) {
        p.w2 = num::Parameter("dep.w2", glorot(hidden, 1, rng));
        p.b2 = num::Parameter("dep.b2", num::Tensor(num::Shape{1}));
    }
    return p;
}

std::vector<num::Parameter*> DepEncoderParams::parameters() {
    if (one_layer) return {&w1, &b1};
    return {&w1, &b1, &w2, &b2};
}

num::Var relation_scores(num::Tape& tape, DepEncoderParams& params) {
    // Row r of W1 is W1^T onehot(r), so the whole one-hot batch is W1 itself.
    num::Var hidden = num::add(tape.param(params.w1), tape.param(params.b1));
    if (params.one_layer) return hidden;
    hidden = num::leaky_relu(hidden, params.slope);
    return num::add(num::matmul(hidden, tape.param(params.w2)), tape.param(params.b2));
}

num::Var encode_pair_learned(num::Tape& tape, const DepRelationTensor& tensor, DepEncoderParams& params) {
    const auto entries = tensor.entries();
    return num::scatter_pairs(relation_scores(tape, params), entries, tensor.seq_len());
}

num::Tensor encode_pair_learned(const DepRelationTensor& tensor, const DepEncoderParams& params) {
    const num::Tensor& w1 = params.w1.value;
    const num::Tensor& b1 = params.b1.value;
    const std::size_t hidden = w1.extent(1);
    num::Tensor m(num::Shape{tensor.seq_len(), tensor.seq_len()});
    for (const auto& e : tensor.entries()) {
        if (e.relation >= w1.extent(0)) throw IndexError("relation index beyond encoder width");
        double out = 0.0;
        if (params.one_layer) {
            out = w1.at(e.relation, 0) + b1[0];
        } else {
            out = params.b2.value[0];
            for (std::size_t k = 0; k < hidden; ++k) {
                double h = w1.at(e.relation, k) + b1[k];
                if (h < 0.0) h *= params.slope;
                out += params.w2.value.at(k, 0) * h;
            }
        }
        m.at(e.row, e.col) = out;
    }
    return m;
}

MaskStrategy parse_mask_strategy(const std::string& name) {
    if (name == "none") return MaskStrategy::None;
    if (name == "learned") return MaskStrategy::LearnedOneHot;
    if (name == "learned-one-layer") return MaskStrategy::LearnedOneLayer;
    if (name == "arith") return MaskStrategy::ArithOccurrence;
    if (name == "arith-core") return MaskStrategy::ArithCore;
    if (name == "arith-root") return MaskStrategy::ArithRoot;
    throw ConfigError("unknown mask strategy '" + name + "'");
}

std::string mask_strategy_name(MaskStrategy strategy) {
    switch (strategy) {
        case MaskStrategy::None: return "none";
        case MaskStrategy::LearnedOneHot: return "learned";
        case MaskStrategy::LearnedOneLayer: return "learned-one-layer";
        case MaskStrategy::ArithOccurrence: return "arith";
        case MaskStrategy::ArithCore: return "arith-core";
        case MaskStrategy::ArithRoot: return "arith-root";
    }
    return "?";
}

bool is_learned(MaskStrategy s) { return s == MaskStrategy::LearnedOneHot || s == MaskStrategy::LearnedOneLayer; }

bool is_fixed(MaskStrategy s) {
    return s == MaskStrategy::ArithOccurrence || s == MaskStrategy::ArithCore || s == MaskStrategy::ArithRoot;
}

const std::vector<std::vector<std::string>>& core_relation_slots() {
    static const std::vector<std::vector<std::string>> slots{
        {"nsubj"}, {"nsubjpass", "nsubj:pass"}, {"dobj", "obj"}, {"iobj"},
        {"csubj"}, {"csubjpass", "csubj:pass"}, {"ccomp"},       {"xcomp"},
    };
    return slots;
}

RelationWeightStrategy build_weight_strategy(MaskStrategy kind, const RelationVocab& vocab) {
    if (!is_fixed(kind)) throw ConfigError("no weight table for strategy " + mask_strategy_name(kind));
    std::vector<std::size_t> order;
    auto take = [&](std::size_t idx) {
        if (std::find(order.begin(), order.end(), idx) == order.end()) order.push_back(idx);
    };
    if (kind == MaskStrategy::ArithRoot && vocab.contains("root")) take(vocab.index("root"));
    if (kind == MaskStrategy::ArithCore)
        for (const auto& slot : core_relation_slots())
            for (const auto& label : slot)
                if (vocab.contains(label)) take(vocab.index(label));
    for (std::size_t i = 0; i < vocab.known(); ++i) take(i);

    RelationWeightStrategy strategy;
    strategy.kind = kind;
    strategy.weight_table.assign(vocab.size(), 0.0);
    const double n = static_cast<double>(order.size());
    for (std::size_t rank = 0; rank < order.size(); ++rank)
        strategy.weight_table[order[rank]] = (n - static_cast<double>(rank)) / n;
    return strategy;
}

num::Tensor encode_pair_fixed(const DepRelationTensor& tensor, const RelationWeightStrategy& strategy,
                              const RelationVocab& vocab) {
    if (strategy.weight_table.size() < vocab.size())
        throw ConfigError("weight table covers " + std::to_string(strategy.weight_table.size()) + " of " +
                          std::to_string(vocab.size()) + " relation slots");
    num::Tensor m(num::Shape{tensor.seq_len(), tensor.seq_len()});
    for (const auto& e : tensor.entries()) {
        if (e.relation >= strategy.weight_table.size())
            throw ConfigError("weight table has no entry for relation index " + std::to_string(e.relation));
        m.at(e.row, e.col) = strategy.weight_table[e.relation];
    }
    return m;
}

num::Tensor stack_heads(const num::Tensor& m, std::size_t heads) {
    if (heads == 0) throw ConfigError("stack_heads needs h >= 1");
    if (m.rank() != 2) throw DimensionError("stack_heads expects a matrix, got " + num::shape_string(m.shape()));
    num::Tensor out(num::Shape{heads, m.extent(0), m.extent(1)});
    for (std::size_t h = 0; h < heads; ++h) std::copy(m.data().begin(), m.data().end(), out.data().begin() + h * m.size());
    return out;
}

void ParseStats::add(const DependencyParse& parse) {
    for (const auto& s : parse.sentences) {
        ++sentences;
        tokens += s.size();
        arcs += s.size() - 1;
        ++arc_histogram[s.size() - 1];
        for (const auto& r : s.relations) ++relation_counts[r];
    }
}

std::string ParseStats::to_text() const {
    std::ostringstream os;
    os << "sentences\t" << sentences << "\ntokens\t" << tokens << "\narcs\t" << arcs << "\n\nrelation\tcount\n";
    std::vector<std::pair<std::string, std::size_t>> ranked(relation_counts.begin(), relation_counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [label, count] : ranked) os << label << '\t' << count << '\n';
    os << "\narcs_per_sentence\tsentences\n";
    for (const auto& [arcs_in, n] : arc_histogram) os << arcs_in << '\t' << n << '\n';
    return os.str();
}

}  // namespace mdsum::dep
