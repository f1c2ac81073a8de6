// SPDX-License-Identifier: Apache-2.0
//
// Token and document positional encodings.
//
// Every source token carries two positions: its index inside the
// concatenated input and the 1-based index k of the document it came from.
// The document index is turned into one scalar by a DocEncodingFunction,
// scaled by alpha and added to every coordinate of the sinusoidal token
// encoding.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mdsum::enc {

enum class DocFnKind { Sin, Cos, IterSinCos, IterSinCosScaled, Linear, SameEncoding, Random };

class DocEncodingFunction {
public:
    static DocEncodingFunction sin() { return DocEncodingFunction(DocFnKind::Sin); }
    static DocEncodingFunction cos() { return DocEncodingFunction(DocFnKind::Cos); }
    /// sin(k) for odd k, cos(k) for even k.
    static DocEncodingFunction iter_sin_cos() { return DocEncodingFunction(DocFnKind::IterSinCos); }
    /// Same alternation with argument 0.1·k.
    static DocEncodingFunction iter_sin_cos_scaled() { return DocEncodingFunction(DocFnKind::IterSinCosScaled); }
    static DocEncodingFunction linear(double slope);
    static DocEncodingFunction same_encoding() { return DocEncodingFunction(DocFnKind::SameEncoding); }
    /// Uniform [0,1) per document index, reproducible from the seed.
    static DocEncodingFunction random(std::uint64_t seed);

    /// Accepts sin, cos, iter-sincos, iter-sincos-0.1, same, linear:<c>, y=<c>x, random[:<seed>].
    static DocEncodingFunction parse(std::string_view text);

    DocFnKind kind() const noexcept { return kind_; }
    double slope() const noexcept { return slope_; }
    std::uint64_t seed() const noexcept { return seed_; }

    /// f_doc(k) for a 1-based document index; throws DomainError for k < 1.
    double operator()(int k) const;

    /// Canonical spelling accepted by parse().
    std::string name() const;

    friend bool operator==(const DocEncodingFunction&, const DocEncodingFunction&) = default;

private:
    explicit DocEncodingFunction(DocFnKind kind) : kind_(kind) {}

    DocFnKind kind_ = DocFnKind::Sin;
    double slope_ = 1.0;
    std::uint64_t seed_ = 0;
};

struct PositionalPlan {
    DocEncodingFunction doc_fn = DocEncodingFunction::sin();
    double alpha = 0.1;
    int d_model = 512;

    /// Throws ConfigError unless alpha >= 0 and d_model is even and >= 2.
    void validate() const;
};

/// PE[2i] = sin(pos / 10000^(2i/d)), PE[2i+1] = cos(pos / 10000^(2i/d)).
std::vector<double> token_positional_encoding(int pos, int d_model);

double doc_positional_encoding(int k, const DocEncodingFunction& fn);

enum class ProtocolRule { Uniqueness, Bounded, Magnitude };

std::string_view rule_name(ProtocolRule rule);

struct ProtocolViolation {
    ProtocolRule rule;
    std::string detail;
};

struct ProtocolVerdict {
    bool pass = true;
    std::vector<ProtocolViolation> violations;

    bool violates(ProtocolRule rule) const;
    /// Multi-line "key: value" rendering used by the CLI.
    std::string to_text() const;
};

/// Checks the three admissibility rules for a document encoding over k = 1..q_max:
///  - Uniqueness: no two documents closer than 1e-9.
///  - Bounded: |f(k)| must not grow strictly over the window and end above 10x the token bound.
///  - Magnitude: max |f(k)| must stay within 5x the token bound.
ProtocolVerdict validate_protocol(const DocEncodingFunction& fn, int q_max = 10, double token_pe_bound = 1.0);

/// out[j] = alpha * doc_scalar + token_pe[j].
std::vector<double> fuse_positional(double doc_scalar, const std::vector<double>& token_pe, double alpha);

/// E = Pos + e, elementwise; throws DimensionError on length mismatch.
std::vector<double> embed_input(const std::vector<double>& token_embedding, const std::vector<double>& fused_pos);

/// Fused positional rows for a token sequence: row t uses position t and document doc_index[t].
std::vector<double> positional_rows(const std::vector<int>& doc_index, const PositionalPlan& plan);

}  // namespace mdsum::enc
