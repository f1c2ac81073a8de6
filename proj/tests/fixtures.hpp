// SPDX-License-Identifier: Apache-2.0
//
// Shared test fixtures: toy configs, random samples and a plain reference
// transformer that shares the model's weights but none of its code paths.

#pragma once

#include <cmath>
#include <random>

#include "mdsum/model.hpp"
#include "mdsum/vocab.hpp"

namespace fixtures {

using namespace mdsum;

inline model::ModelConfig toy_config(int d_model = 8, int heads = 2, int layers = 1, int vocab = 12) {
    model::ModelConfig c;
    c.d_model = d_model;
    c.heads = heads;
    c.layers = layers;
    c.vocab_size = vocab;
    c.dropout = 0.0;
    c.positional = {enc::DocEncodingFunction::sin(), 0.1, d_model};
    c.mask = dep::MaskStrategy::LearnedOneHot;
    c.relation_capacity = 6;
    c.dep_hidden = 4;
    return c;
}

inline dep::RelationVocab toy_relations() { return dep::RelationVocab({"root", "nsubj", "obj", "amod"}, 6); }

/// Random source of `length` tokens split over `docs` documents with a few
/// symmetric relation entries inside each document.
inline model::TrainingPair random_pair(std::mt19937_64& rng, int vocab, std::size_t length, int docs,
                                       std::size_t summary_len, std::size_t arcs) {
    model::TrainingPair pair;
    pair.source.relations = dep::DepRelationTensor(length);
    for (std::size_t t = 0; t < length; ++t) {
        pair.source.tokens.push_back(kReservedTokens + static_cast<int>(rng() % (vocab - kReservedTokens)));
        pair.source.doc_index.push_back(1 + static_cast<int>(t * docs / length));
    }
    for (std::size_t a = 0; a < arcs; ++a) {
        const std::size_t i = rng() % length;
        std::size_t j = rng() % length;
        while (pair.source.doc_index[j] != pair.source.doc_index[i]) j = rng() % length;
        const std::size_t r = rng() % 4;
        pair.source.relations.set(i, j, r);
        pair.source.relations.set(j, i, r);
    }
    for (std::size_t s = 0; s < summary_len; ++s)
        pair.summary.push_back(kReservedTokens + static_cast<int>(rng() % (vocab - kReservedTokens)));
    return pair;
}

/// Plain transformer built from the same tape ops as the model, with token
/// positions only and unweighted attention. Shares kernels with the model, so
/// with both mechanisms switched off the two must agree bit for bit.
inline num::Tensor plain_logits(model::ModelConfig c, model::ModelParams& p, const model::SourceInput& src,
                                const std::vector<int>& prefix) {
    num::Tape t(false);
    const auto heads = static_cast<std::size_t>(c.heads);
    auto lin = [&](num::Var x, num::Parameter& w, num::Parameter& b) {
        return num::add(num::matmul(x, t.param(w)), t.param(b));
    };
    auto positions = [&](std::size_t n) {
        num::Tensor pe(num::Shape{n, static_cast<std::size_t>(c.d_model)});
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = enc::token_positional_encoding(static_cast<int>(i), c.d_model);
            std::copy(row.begin(), row.end(), pe.data().begin() + static_cast<std::ptrdiff_t>(i * row.size()));
        }
        return pe;
    };
    auto attend = [&](num::Var qin, num::Var kvin, model::AttentionParams& a, const num::Tensor& allowed) {
        num::Var q = num::split_heads(lin(qin, a.wq, a.bq), heads);
        num::Var k = num::split_heads(lin(kvin, a.wk, a.bk), heads);
        num::Var v = num::split_heads(lin(kvin, a.wv, a.bv), heads);
        num::Var s = num::scale(num::matmul(q, num::transpose(k)), 1.0 / std::sqrt(static_cast<double>(c.d_k())));
        num::Var attn = allowed.empty() ? num::softmax_rows(s) : num::masked_softmax_rows(s, allowed);
        return lin(num::merge_heads(num::matmul(attn, v)), a.wo, a.bo);
    };
    auto norm = [&](num::Var x, model::NormParams& n) {
        return num::layer_norm(x, t.param(n.gain), t.param(n.bias), c.ln_eps);
    };
    auto ffn = [&](num::Var x, model::FeedForwardParams& f) { return lin(num::relu(lin(x, f.w1, f.b1)), f.w2, f.b2); };

    const num::Tensor none;
    num::Var x = num::add(num::embedding(t.param(p.embedding), src.tokens), t.constant(positions(src.tokens.size())));
    for (auto& layer : p.encoder) {
        x = norm(num::add(x, attend(x, x, layer.self, none)), layer.norm1);
        x = norm(num::add(x, ffn(x, layer.ff)), layer.norm2);
    }
    const std::size_t n = prefix.size();
    num::Tensor causal(num::Shape{n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) causal.at(i, j) = 1.0;
    num::Var y = num::add(num::embedding(t.param(p.embedding), prefix), t.constant(positions(n)));
    for (auto& layer : p.decoder) {
        y = norm(num::add(y, attend(y, y, layer.self, causal)), layer.norm1);
        y = norm(num::add(y, attend(y, x, layer.cross, none)), layer.norm2);
        y = norm(num::add(y, ffn(y, layer.ff)), layer.norm3);
    }
    return lin(y, p.out_w, p.out_b).value();
}

/// Independent loop-level transformer over the model's weights: token positions
/// only, attention softmax(QK^T/sqrt(d_k))V computed head by head.
class LoopReference {
public:
    LoopReference(const model::ModelConfig& c, const model::ModelParams& p) : c_(c), p_(p) {}

    num::Tensor logits(const model::SourceInput& src, const std::vector<int>& prefix) const {
        const auto memory = encoder_rows(src.tokens);
        auto y = embed(prefix);
        for (const auto& layer : p_.decoder) {
            y = norm(add(y, attention(y, y, layer.self, true)), layer.norm1);
            y = norm(add(y, attention(y, memory, layer.cross, false)), layer.norm2);
            y = norm(add(y, ffn(y, layer.ff)), layer.norm3);
        }
        return to_tensor(affine(y, p_.out_w.value, p_.out_b.value));
    }

private:
    using M = std::vector<std::vector<double>>;

    M encoder_rows(const std::vector<int>& tokens) const {
        auto x = embed(tokens);
        for (const auto& layer : p_.encoder) {
            x = norm(add(x, attention(x, x, layer.self, false)), layer.norm1);
            x = norm(add(x, ffn(x, layer.ff)), layer.norm2);
        }
        return x;
    }

    static num::Tensor to_tensor(const M& m) {
        num::Tensor t(num::Shape{m.size(), m.empty() ? 0 : m[0].size()});
        for (std::size_t i = 0; i < m.size(); ++i)
            for (std::size_t j = 0; j < m[i].size(); ++j) t.at(i, j) = m[i][j];
        return t;
    }

    M embed(const std::vector<int>& ids) const {
        const std::size_t d = static_cast<std::size_t>(c_.d_model);
        M x(ids.size(), std::vector<double>(d));
        for (std::size_t t = 0; t < ids.size(); ++t)
            for (std::size_t j = 0; j < d; ++j) {
                const double angle =
                    static_cast<double>(t) / std::pow(10000.0, 2.0 * static_cast<double>(j / 2) / c_.d_model);
                const double pe = j % 2 == 0 ? std::sin(angle) : std::cos(angle);
                x[t][j] = p_.embedding.value.at(static_cast<std::size_t>(ids[t]), j) + pe;
            }
        return x;
    }

    static M add(const M& a, const M& b) {
        M out = a;
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < a[i].size(); ++j) out[i][j] += b[i][j];
        return out;
    }

    static M affine(const M& x, const num::Tensor& w, const num::Tensor& b) {
        M out(x.size(), std::vector<double>(w.extent(1)));
        for (std::size_t i = 0; i < x.size(); ++i)
            for (std::size_t j = 0; j < w.extent(1); ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < w.extent(0); ++k) s += x[i][k] * w.at(k, j);
                out[i][j] = s + b[j];
            }
        return out;
    }

    M norm(const M& x, const model::NormParams& n) const {
        M out = x;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = static_cast<double>(x[i].size());
            double mean = 0.0, var = 0.0;
            for (double v : x[i]) mean += v;
            mean /= d;
            for (double v : x[i]) var += (v - mean) * (v - mean);
            var /= d;
            for (std::size_t j = 0; j < x[i].size(); ++j)
                out[i][j] = (x[i][j] - mean) / std::sqrt(var + c_.ln_eps) * n.gain.value[j] + n.bias.value[j];
        }
        return out;
    }

    M ffn(const M& x, const model::FeedForwardParams& f) const {
        M h = affine(x, f.w1.value, f.b1.value);
        for (auto& row : h)
            for (double& v : row) v = std::max(v, 0.0);
        return affine(h, f.w2.value, f.b2.value);
    }

    M attention(const M& qin, const M& kvin, const model::AttentionParams& a, bool causal) const {
        const M q = affine(qin, a.wq.value, a.bq.value);
        const M k = affine(kvin, a.wk.value, a.bk.value);
        const M v = affine(kvin, a.wv.value, a.bv.value);
        const std::size_t dk = static_cast<std::size_t>(c_.d_k());
        M ctx(q.size(), std::vector<double>(static_cast<std::size_t>(c_.d_model)));
        for (int h = 0; h < c_.heads; ++h) {
            const std::size_t off = static_cast<std::size_t>(h) * dk;
            for (std::size_t i = 0; i < q.size(); ++i) {
                const std::size_t visible = causal ? i + 1 : k.size();
                std::vector<double> w(visible);
                double peak = -1e300;
                for (std::size_t j = 0; j < visible; ++j) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < dk; ++c) s += q[i][off + c] * k[j][off + c];
                    w[j] = s / std::sqrt(static_cast<double>(dk));
                    peak = std::max(peak, w[j]);
                }
                double z = 0.0;
                for (double& x : w) z += (x = std::exp(x - peak));
                for (std::size_t j = 0; j < visible; ++j)
                    for (std::size_t c = 0; c < dk; ++c) ctx[i][off + c] += w[j] / z * v[j][off + c];
            }
        }
        return affine(ctx, a.wo.value, a.bo.value);
    }

    const model::ModelConfig& c_;
    const model::ModelParams& p_;
};

}  // namespace fixtures
