// SPDX-License-Identifier: Apache-2.0

#include "mdsum/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mdsum/errors.hpp"
#include "mdsum/vocab.hpp"

namespace mdsum::model {

using num::Parameter;
using num::Shape;
using num::Tape;
using num::Tensor;
using num::Var;

void ModelConfig::validate() const {
    if (d_model < 2 || d_model % 2 != 0) throw ConfigError("d_model must be even and >= 2");
    if (heads < 1 || d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (d_ff < 0) throw ConfigError("d_ff must be >= 0");
    if (vocab_size <= kReservedTokens) throw ConfigError("vocab_size must exceed the reserved tokens");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
    if (relation_capacity < 2) throw ConfigError("relation_capacity must be >= 2");
    if (dep_hidden < 1) throw ConfigError("dep_hidden must be >= 1");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must lie in (0,1)");
    if (max_source_len < 1) throw ConfigError("max_source_len must be >= 1");
    if (!(ln_eps > 0.0)) throw ConfigError("ln_eps must be positive");
    positional.validate();
    if (positional.d_model != d_model) throw ConfigError("positional plan width differs from d_model");
}

nlohmann::ordered_json ModelConfig::to_json() const {
    nlohmann::ordered_json j;
    j["d_model"] = d_model;
    j["heads"] = heads;
    j["layers"] = layers;
    j["d_ff"] = d_ff;
    j["vocab_size"] = vocab_size;
    j["dropout"] = dropout;
    j["doc_fn"] = positional.doc_fn.name();
    j["alpha"] = positional.alpha;
    j["mask"] = dep::mask_strategy_name(mask);
    j["relation_capacity"] = relation_capacity;
    j["dep_hidden"] = dep_hidden;
    j["leaky_slope"] = leaky_slope;
    j["max_source_len"] = max_source_len;
    j["truncate"] = truncate;
    j["ln_eps"] = ln_eps;
    return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.d_model = j.at("d_model").get<int>();
        c.heads = j.at("heads").get<int>();
        c.layers = j.at("layers").get<int>();
        c.d_ff = j.at("d_ff").get<int>();
        c.vocab_size = j.at("vocab_size").get<int>();
        c.dropout = j.at("dropout").get<double>();
        c.positional.doc_fn = enc::DocEncodingFunction::parse(j.at("doc_fn").get<std::string>());
        c.positional.alpha = j.at("alpha").get<double>();
        c.positional.d_model = c.d_model;
        c.mask = dep::parse_mask_strategy(j.at("mask").get<std::string>());
        c.relation_capacity = j.at("relation_capacity").get<int>();
        c.dep_hidden = j.at("dep_hidden").get<int>();
        c.leaky_slope = j.at("leaky_slope").get<double>();
        c.max_source_len = j.at("max_source_len").get<int>();
        c.truncate = j.at("truncate").get<bool>();
        c.ln_eps = j.at("ln_eps").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    return c;
}

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(Shape{fan_in, fan_out});
    for (double& v : t.data()) v = limit * (2.0 * num::uniform01(rng) - 1.0);
    return t;
}

Parameter zeros(std::string name, std::size_t n) { return Parameter(std::move(name), Tensor(Shape{n})); }

AttentionParams init_attention(const std::string& prefix, std::size_t d, std::mt19937_64& rng) {
    AttentionParams p;
    p.wq = Parameter(prefix + ".wq", glorot(d, d, rng));
    p.bq = zeros(prefix + ".bq", d);
    p.wk = Parameter(prefix + ".wk", glorot(d, d, rng));
    p.bk = zeros(prefix + ".bk", d);
    p.wv = Parameter(prefix + ".wv", glorot(d, d, rng));
    p.bv = zeros(prefix + ".bv", d);
    p.wo = Parameter(prefix + ".wo", glorot(d, d, rng));
    p.bo = zeros(prefix + ".bo", d);
    return p;
}

FeedForwardParams init_ff(const std::string& prefix, std::size_t d, std::size_t ff, std::mt19937_64& rng) {
    FeedForwardParams p;
    p.w1 = Parameter(prefix + ".w1", glorot(d, ff, rng));
    p.b1 = zeros(prefix + ".b1", ff);
    p.w2 = Parameter(prefix + ".w2", glorot(ff, d, rng));
    p.b2 = zeros(prefix + ".b2", d);
    return p;
}

NormParams init_norm(const std::string& prefix, std::size_t d) {
    return {Parameter(prefix + ".gain", Tensor(Shape{d}, 1.0)), zeros(prefix + ".bias", d)};
}

void append(std::vector<Parameter*>& out, AttentionParams& p) {
    for (auto* x : {&p.wq, &p.bq, &p.wk, &p.bk, &p.wv, &p.bv, &p.wo, &p.bo}) out.push_back(x);
}
void append(std::vector<Parameter*>& out, FeedForwardParams& p) {
    for (auto* x : {&p.w1, &p.b1, &p.w2, &p.b2}) out.push_back(x);
}
void append(std::vector<Parameter*>& out, NormParams& p) {
    out.push_back(&p.gain);
    out.push_back(&p.bias);
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    const auto d = static_cast<std::size_t>(config.d_model);
    const auto ff = static_cast<std::size_t>(config.ff_width());
    ModelParams p;
    Tensor emb(Shape{static_cast<std::size_t>(config.vocab_size), d});
    std::normal_distribution<double> normal(0.0, 0.02);
    for (double& v : emb.data()) v = normal(rng);
    p.embedding = Parameter("embedding", std::move(emb));
    for (int l = 0; l < config.layers; ++l) {
        const std::string pre = "enc." + std::to_string(l);
        EncoderLayerParams layer;
        layer.self = init_attention(pre + ".self", d, rng);
        layer.norm1 = init_norm(pre + ".norm1", d);
        layer.ff = init_ff(pre + ".ff", d, ff, rng);
        layer.norm2 = init_norm(pre + ".norm2", d);
        p.encoder.push_back(std::move(layer));
    }
    for (int l = 0; l < config.layers; ++l) {
        const std::string pre = "dec." + std::to_string(l);
        DecoderLayerParams layer;
        layer.self = init_attention(pre + ".self", d, rng);
        layer.norm1 = init_norm(pre + ".norm1", d);
        layer.cross = init_attention(pre + ".cross", d, rng);
        layer.norm2 = init_norm(pre + ".norm2", d);
        layer.ff = init_ff(pre + ".ff", d, ff, rng);
        layer.norm3 = init_norm(pre + ".norm3", d);
        p.decoder.push_back(std::move(layer));
    }
    p.out_w = Parameter("out.w", glorot(d, static_cast<std::size_t>(config.vocab_size), rng));
    p.out_b = zeros("out.b", static_cast<std::size_t>(config.vocab_size));
    const bool one_layer = config.mask == dep::MaskStrategy::LearnedOneLayer;
    p.dep = dep::DepEncoderParams::init(static_cast<std::size_t>(config.relation_capacity),
                                        static_cast<std::size_t>(config.dep_hidden), rng(), one_layer);
    p.dep.slope = config.leaky_slope;
    return p;
}

std::vector<Parameter*> ModelParams::all(const ModelConfig& config) {
    std::vector<Parameter*> out{&embedding};
    for (auto& layer : encoder) {
        append(out, layer.self);
        append(out, layer.norm1);
        append(out, layer.ff);
        append(out, layer.norm2);
    }
    for (auto& layer : decoder) {
        append(out, layer.self);
        append(out, layer.norm1);
        append(out, layer.cross);
        append(out, layer.norm2);
        append(out, layer.ff);
        append(out, layer.norm3);
    }
    out.push_back(&out_w);
    out.push_back(&out_b);
    if (dep::is_learned(config.mask))
        for (auto* p : dep.parameters()) out.push_back(p);
    return out;
}

std::size_t ModelParams::count(const ModelConfig& config) {
    std::size_t n = 0;
    for (auto* p : all(config)) n += p->value.size();
    return n;
}

Var fused_attention(Var q, Var k, Var v, std::optional<Var> mask, const Tensor& key_allowed) {
    const Shape& qs = q.shape();
    if (qs.size() != 3 || k.shape().size() != 3 || v.shape().size() != 3 || qs[0] != k.shape()[0] ||
        v.shape()[0] != k.shape()[0] || v.shape()[1] != k.shape()[1] ||
        qs[2] != k.shape()[2])
        throw DimensionError("fused_attention: incompatible Q " + num::shape_string(qs) + ", K " +
                             num::shape_string(k.shape()) + ", V " + num::shape_string(v.shape()));
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(qs[2]));
    Var scores = num::scale(num::matmul(q, num::transpose(k)), inv_sqrt_dk);
    Var attn = key_allowed.empty() ? num::softmax_rows(scores) : num::masked_softmax_rows(scores, key_allowed);
    if (mask) {
        const Shape& ms = mask->shape();
        const Shape& as = attn.shape();
        if (!(ms == as || (ms.size() == 2 && ms[0] == as[1] && ms[1] == as[2])))
            throw DimensionError("fused_attention: mask " + num::shape_string(ms) + " does not match attention " +
                                 num::shape_string(as));
        attn = num::add(num::mul(attn, *mask), attn);
    }
    return num::matmul(attn, v);
}

namespace {

Var linear(Tape& t, Var x, Parameter& w, Parameter& b) { return num::add(num::matmul(x, t.param(w)), t.param(b)); }

Var attention_block(Tape& t, Var query_in, Var kv_in, AttentionParams& p, std::size_t heads,
                    std::optional<Var> mask, const Tensor& key_allowed) {
    Var q = num::split_heads(linear(t, query_in, p.wq, p.bq), heads);
    Var k = num::split_heads(linear(t, kv_in, p.wk, p.bk), heads);
    Var v = num::split_heads(linear(t, kv_in, p.wv, p.bv), heads);
    Var ctx = num::merge_heads(fused_attention(q, k, v, mask, key_allowed));
    return linear(t, ctx, p.wo, p.bo);
}

Var feed_forward(Tape& t, Var x, FeedForwardParams& p, double rate, std::mt19937_64* rng) {
    Var h = num::relu(linear(t, x, p.w1, p.b1));
    if (rng) h = num::dropout(h, rate, *rng);
    return linear(t, h, p.w2, p.b2);
}

// Post-norm residual: LN(x + dropout(sublayer)).
Var residual_norm(Tape& t, Var x, Var sub, NormParams& n, double rate, std::mt19937_64* rng, double eps) {
    if (rng) sub = num::dropout(sub, rate, *rng);
    return num::layer_norm(num::add(x, sub), t.param(n.gain), t.param(n.bias), eps);
}

Tensor token_positions(std::size_t length, int d_model) {
    Tensor pe(Shape{length, static_cast<std::size_t>(d_model)});
    for (std::size_t t = 0; t < length; ++t) {
        const auto row = enc::token_positional_encoding(static_cast<int>(t), d_model);
        std::copy(row.begin(), row.end(), pe.data().begin() + static_cast<std::ptrdiff_t>(t * row.size()));
    }
    return pe;
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t seed, dep::RelationVocab relations)
    : Model(config, ModelParams::init(config, seed), std::move(relations)) {}

Model::Model(ModelConfig config, ModelParams params, dep::RelationVocab relations)
    : config_(std::move(config)), params_(std::move(params)), relations_(std::move(relations)) {
    config_.validate();
    if (relations_.capacity() != static_cast<std::size_t>(config_.relation_capacity))
        throw ConfigError("relation vocabulary capacity " + std::to_string(relations_.capacity()) +
                          " differs from relation_capacity " + std::to_string(config_.relation_capacity));
    if (params_.embedding.value.extent(0) != static_cast<std::size_t>(config_.vocab_size))
        throw ConfigError("embedding rows differ from vocab_size");
    if (dep::is_fixed(config_.mask)) fixed_weights_ = dep::build_weight_strategy(config_.mask, relations_);
}

SourceInput Model::fit_source(const SourceInput& source) const {
    if (source.tokens.size() != source.doc_index.size())
        throw DimensionError("source has " + std::to_string(source.tokens.size()) + " tokens but " +
                             std::to_string(source.doc_index.size()) + " document indices");
    if (source.relations.seq_len() != source.tokens.size())
        throw DimensionError("relation tensor covers " + std::to_string(source.relations.seq_len()) +
                             " positions for " + std::to_string(source.tokens.size()) + " tokens");
    const auto limit = static_cast<std::size_t>(config_.max_source_len);
    if (source.tokens.size() <= limit) return source;
    if (!config_.truncate)
        throw ConfigError("source of " + std::to_string(source.tokens.size()) + " tokens exceeds max_source_len " +
                          std::to_string(limit));
    SourceInput cut;
    cut.tokens.assign(source.tokens.begin(), source.tokens.begin() + static_cast<std::ptrdiff_t>(limit));
    cut.doc_index.assign(source.doc_index.begin(), source.doc_index.begin() + static_cast<std::ptrdiff_t>(limit));
    cut.relations = dep::DepRelationTensor(limit);
    for (const auto& e : source.relations.entries())
        if (e.row < limit && e.col < limit) cut.relations.set(e.row, e.col, e.relation);
    return cut;
}

std::optional<Var> Model::dependency_mask(Tape& tape, const SourceInput& source) {
    if (config_.mask == dep::MaskStrategy::None) return std::nullopt;
    if (dep::is_learned(config_.mask)) return dep::encode_pair_learned(tape, source.relations, params_.dep);
    return tape.constant(dep::encode_pair_fixed(source.relations, *fixed_weights_, relations_));
}

Var Model::encode(Tape& tape, const SourceInput& raw, std::mt19937_64* rng) {
    const SourceInput source = fit_source(raw);
    if (source.tokens.empty()) throw DimensionError("empty source");
    for (int k : source.doc_index)
        if (k < 1) throw DomainError("document index must be >= 1, got " + std::to_string(k));

    enc::PositionalPlan plan = config_.positional;
    plan.d_model = config_.d_model;
    Tensor pos(Shape{source.tokens.size(), static_cast<std::size_t>(config_.d_model)},
               enc::positional_rows(source.doc_index, plan));
    Var x = num::add(num::embedding(tape.param(params_.embedding), source.tokens), tape.constant(std::move(pos)));
    if (rng) x = num::dropout(x, config_.dropout, *rng);

    std::optional<Var> mask;
    if (auto m = dependency_mask(tape, source)) mask = num::stack_heads(*m, static_cast<std::size_t>(config_.heads));

    const Tensor all_keys;
    for (auto& layer : params_.encoder) {
        Var att = attention_block(tape, x, x, layer.self, static_cast<std::size_t>(config_.heads), mask, all_keys);
        x = residual_norm(tape, x, att, layer.norm1, config_.dropout, rng, config_.ln_eps);
        Var ff = feed_forward(tape, x, layer.ff, config_.dropout, rng);
        x = residual_norm(tape, x, ff, layer.norm2, config_.dropout, rng, config_.ln_eps);
    }
    return x;
}

Var Model::decode(Tape& tape, std::span<const int> prefix, Var memory, std::mt19937_64* rng) {
    if (prefix.empty()) throw DimensionError("decoder prefix is empty; decoding starts from the start token");
    if (memory.shape().size() != 2 || memory.shape()[0] == 0) throw DimensionError("empty encoder memory");
    const std::size_t n = prefix.size();
    Var y = num::add(num::embedding(tape.param(params_.embedding), prefix),
                     tape.constant(token_positions(n, config_.d_model)));
    if (rng) y = num::dropout(y, config_.dropout, *rng);

    Tensor causal(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) causal.at(i, j) = 1.0;
    const Tensor all_keys;
    const auto heads = static_cast<std::size_t>(config_.heads);
    for (auto& layer : params_.decoder) {
        Var self = attention_block(tape, y, y, layer.self, heads, std::nullopt, causal);
        y = residual_norm(tape, y, self, layer.norm1, config_.dropout, rng, config_.ln_eps);
        Var cross = attention_block(tape, y, memory, layer.cross, heads, std::nullopt, all_keys);
        y = residual_norm(tape, y, cross, layer.norm2, config_.dropout, rng, config_.ln_eps);
        Var ff = feed_forward(tape, y, layer.ff, config_.dropout, rng);
        y = residual_norm(tape, y, ff, layer.norm3, config_.dropout, rng, config_.ln_eps);
    }
    return linear(tape, y, params_.out_w, params_.out_b);
}

Var Model::loss(Tape& tape, const TrainingPair& pair, std::mt19937_64* rng) {
    std::vector<int> input{kBosId};
    input.insert(input.end(), pair.summary.begin(), pair.summary.end());
    std::vector<int> target(pair.summary.begin(), pair.summary.end());
    target.push_back(kEosId);
    Var memory = encode(tape, pair.source, rng);
    return num::cross_entropy(decode(tape, input, memory, rng), target, kPadId);
}

std::vector<int> Model::generate(const SourceInput& source, int min_len, int max_len) const {
    if (min_len > max_len) throw ConfigError("min_len exceeds max_len");
    // A gradient-free tape only reads parameter values.
    auto& self = const_cast<Model&>(*this);
    Tape tape(false);
    Var memory = self.encode(tape, source, nullptr);
    std::vector<int> prefix{kBosId};
    std::vector<int> out;
    while (static_cast<int>(out.size()) < max_len) {
        Tape step(false);
        Var mem = step.constant(memory.value());
        const Tensor& logits = self.decode(step, prefix, mem, nullptr).value();
        const std::size_t vocab = logits.extent(1);
        const double* row = logits.data().data() + (prefix.size() - 1) * vocab;
        int best = -1;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < vocab; ++j) {
            const int id = static_cast<int>(j);
            if (id == kPadId || id == kBosId) continue;
            if (id == kEosId && static_cast<int>(out.size()) < min_len) continue;
            if (row[j] > best_score) {
                best_score = row[j];
                best = id;
            }
        }
        if (best == kEosId) break;
        out.push_back(best);
        prefix.push_back(best);
    }
    return out;
}

}  // namespace mdsum::model
