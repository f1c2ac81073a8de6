// SPDX-License-Identifier: Apache-2.0

#include "mdsum/encodings.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mdsum/errors.hpp"

namespace mdsum::enc {

DocEncodingFunction DocEncodingFunction::linear(double slope) {
    DocEncodingFunction f(DocFnKind::Linear);
    f.slope_ = slope;
    return f;
}

DocEncodingFunction DocEncodingFunction::random(std::uint64_t seed) {
    DocEncodingFunction f(DocFnKind::Random);
    f.seed_ = seed;
    return f;
}

namespace {

double parse_number(std::string_view text, std::string_view whole) {
    try {
        std::size_t used = 0;
        const std::string s(text);
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad document encoding function '" + std::string(whole) + "'");
    }
}

std::string format_number(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

DocEncodingFunction DocEncodingFunction::parse(std::string_view text) {
    if (text == "sin") return sin();
    if (text == "cos") return cos();
    if (text == "iter-sincos") return iter_sin_cos();
    if (text == "iter-sincos-0.1") return iter_sin_cos_scaled();
    if (text == "same") return same_encoding();
    if (text == "random") return random(0);
    if (text.starts_with("random:"))
        return random(static_cast<std::uint64_t>(parse_number(text.substr(7), text)));
    if (text.starts_with("linear:")) return linear(parse_number(text.substr(7), text));
    if (text.starts_with("y=") && text.ends_with("x")) {
        const auto coef = text.substr(2, text.size() - 3);
        return linear(coef.empty() ? 1.0 : parse_number(coef, text));
    }
    throw ConfigError("unknown document encoding function '" + std::string(text) + "'");
}

std::string DocEncodingFunction::name() const {
    switch (kind_) {
        case DocFnKind::Sin: return "sin";
        case DocFnKind::Cos: return "cos";
        case DocFnKind::IterSinCos: return "iter-sincos";
        case DocFnKind::IterSinCosScaled: return "iter-sincos-0.1";
        case DocFnKind::Linear: return "linear:" + format_number(slope_);
        case DocFnKind::SameEncoding: return "same";
        case DocFnKind::Random: return "random:" + std::to_string(seed_);
    }
    return "?";
}

double DocEncodingFunction::operator()(int k) const {
    if (k < 1) throw DomainError("document index must be >= 1, got " + std::to_string(k));
    const double x = static_cast<double>(k);
    switch (kind_) {
        case DocFnKind::Sin: return std::sin(x);
        case DocFnKind::Cos: return std::cos(x);
        case DocFnKind::IterSinCos: return k % 2 == 1 ? std::sin(x) : std::cos(x);
        case DocFnKind::IterSinCosScaled: return k % 2 == 1 ? std::sin(0.1 * x) : std::cos(0.1 * x);
        case DocFnKind::Linear: return slope_ * x;
        case DocFnKind::SameEncoding: return 1.0;
        case DocFnKind::Random: {
            // One fresh engine per (seed, k): the value depends on nothing else.
            std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                              static_cast<std::uint32_t>(k)};
            std::mt19937_64 engine(seq);
            return static_cast<double>(engine() >> 11) * 0x1.0p-53;
        }
    }
    return 0.0;
}

void PositionalPlan::validate() const {
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
    if (d_model < 2 || d_model % 2 != 0) throw ConfigError("d_model must be even and >= 2");
}

std::vector<double> token_positional_encoding(int pos, int d_model) {
    if (d_model < 2 || d_model % 2 != 0)
        throw ConfigError("token positional encoding needs an even d_model, got " + std::to_string(d_model));
    std::vector<double> pe(static_cast<std::size_t>(d_model));
    for (int i = 0; i < d_model / 2; ++i) {
        const double angle = pos / std::pow(10000.0, 2.0 * i / d_model);
        pe[2 * i] = std::sin(angle);
        pe[2 * i + 1] = std::cos(angle);
    }
    return pe;
}

double doc_positional_encoding(int k, const DocEncodingFunction& fn) { return fn(k); }

std::string_view rule_name(ProtocolRule rule) {
    switch (rule) {
        case ProtocolRule::Uniqueness: return "Uniqueness";
        case ProtocolRule::Bounded: return "Bounded";
        case ProtocolRule::Magnitude: return "Magnitude";
    }
    return "?";
}

bool ProtocolVerdict::violates(ProtocolRule rule) const {
    return std::any_of(violations.begin(), violations.end(), [rule](const auto& v) { return v.rule == rule; });
}

std::string ProtocolVerdict::to_text() const {
    std::ostringstream os;
    os << "pass: " << (pass ? "true" : "false") << '\n';
    os << "violations: " << violations.size() << '\n';
    for (const auto& v : violations) os << "  - rule: " << rule_name(v.rule) << "\n    detail: " << v.detail << '\n';
    return os.str();
}

ProtocolVerdict validate_protocol(const DocEncodingFunction& fn, int q_max, double token_pe_bound) {
    if (q_max < 2) throw ConfigError("validate_protocol: q_max must be >= 2");
    if (!(token_pe_bound > 0.0)) throw ConfigError("validate_protocol: token_pe_bound must be positive");
    std::vector<double> values;
    for (int k = 1; k <= q_max; ++k) values.push_back(fn(k));

    ProtocolVerdict verdict;
    auto flag = [&](ProtocolRule rule, std::string detail) {
        verdict.violations.push_back({rule, std::move(detail)});
    };

    for (int a = 0; a < q_max && !verdict.violates(ProtocolRule::Uniqueness); ++a)
        for (int b = a + 1; b < q_max; ++b)
            if (std::abs(values[a] - values[b]) < 1e-9) {
                std::ostringstream os;
                os << "documents " << a + 1 << " and " << b + 1 << " share encoding " << values[a];
                flag(ProtocolRule::Uniqueness, os.str());
                break;
            }

    bool growing = true;
    for (int k = 1; k < q_max; ++k) growing = growing && std::abs(values[k]) > std::abs(values[k - 1]);
    const double last = std::abs(values.back());
    if (growing && last > 10.0 * token_pe_bound) {
        std::ostringstream os;
        os << "|f(k)| increases on every step up to " << last << " at k=" << q_max << " (limit "
           << 10.0 * token_pe_bound << ")";
        flag(ProtocolRule::Bounded, os.str());
    }

    double peak = 0.0;
    for (double v : values) peak = std::max(peak, std::abs(v));
    if (peak > 5.0 * token_pe_bound) {
        std::ostringstream os;
        os << "max |f(k)| = " << peak << " exceeds " << 5.0 * token_pe_bound;
        flag(ProtocolRule::Magnitude, os.str());
    }

    verdict.pass = verdict.violations.empty();
    return verdict;
}

std::vector<double> fuse_positional(double doc_scalar, const std::vector<double>& token_pe, double alpha) {
    std::vector<double> out(token_pe.size());
    const double shift = alpha * doc_scalar;
    for (std::size_t j = 0; j < token_pe.size(); ++j) out[j] = shift + token_pe[j];
    return out;
}

std::vector<double> embed_input(const std::vector<double>& token_embedding, const std::vector<double>& fused_pos) {
    if (token_embedding.size() != fused_pos.size())
        throw DimensionError("embed_input: embedding has " + std::to_string(token_embedding.size()) +
                             " values, positional encoding " + std::to_string(fused_pos.size()));
    std::vector<double> out(token_embedding.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = fused_pos[j] + token_embedding[j];
    return out;
}

std::vector<double> positional_rows(const std::vector<int>& doc_index, const PositionalPlan& plan) {
    const std::size_t d = static_cast<std::size_t>(plan.d_model);
    std::vector<double> rows;
    rows.reserve(doc_index.size() * d);
    for (std::size_t t = 0; t < doc_index.size(); ++t) {
        const auto pe = token_positional_encoding(static_cast<int>(t), plan.d_model);
        const auto fused = fuse_positional(plan.doc_fn(doc_index[t]), pe, plan.alpha);
        rows.insert(rows.end(), fused.begin(), fused.end());
    }
    return rows;
}

}  // namespace mdsum::enc
