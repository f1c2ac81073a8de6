// SPDX-License-Identifier: Apache-2.0

#include "mdsum/rouge.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "mdsum/errors.hpp"

namespace mdsum::eval {

namespace {

using Unit = std::vector<std::string>;
using Counts = std::map<Unit, std::size_t>;

Counts ngrams(const Tokens& t, std::size_t n) {
    Counts c;
    if (t.size() < n) return c;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++c[Unit(t.begin() + static_cast<long>(i), t.begin() + static_cast<long>(i + n))];
    return c;
}

Counts skip_units(const Tokens& t) {
    Counts c = ngrams(t, 1);
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = i + 1; j < t.size(); ++j) ++c[Unit{t[i], t[j]}];
    return c;
}

std::size_t total(const Counts& c) {
    std::size_t s = 0;
    for (const auto& [unit, n] : c) s += n;
    return s;
}

RougeScore score(const Counts& cand, const Counts& ref) {
    std::size_t match = 0;
    for (const auto& [unit, n] : cand)
        if (auto it = ref.find(unit); it != ref.end()) match += std::min(n, it->second);
    const std::size_t nc = total(cand), nr = total(ref);
    RougeScore s;
    s.degenerate = nc == 0 || nr == 0;
    s.precision = nc ? static_cast<double>(match) / static_cast<double>(nc) : 0.0;
    s.recall = nr ? static_cast<double>(match) / static_cast<double>(nr) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

void accumulate(RougeScore& into, const RougeScore& s) {
    into.precision += s.precision;
    into.recall += s.recall;
    into.f1 += s.f1;
    into.degenerate = into.degenerate || s.degenerate;
}

void divide(RougeScore& s, double n) {
    s.precision /= n;
    s.recall /= n;
    s.f1 /= n;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

RougeScore rouge_n(const Tokens& candidate, const Tokens& reference, int n) {
    if (n != 1 && n != 2) throw DomainError("rouge_n: n must be 1 or 2");
    return score(ngrams(candidate, static_cast<std::size_t>(n)), ngrams(reference, static_cast<std::size_t>(n)));
}

RougeScore rouge_su(const Tokens& candidate, const Tokens& reference) {
    return score(skip_units(candidate), skip_units(reference));
}

RougeReport evaluate_corpus(std::span<const std::pair<Tokens, Tokens>> pairs) {
    if (pairs.empty()) throw UsageError("evaluate_corpus: no summary pairs");
    RougeReport r;
    for (const auto& [cand, ref] : pairs) {
        const auto a = rouge_n(cand, ref, 1), b = rouge_n(cand, ref, 2), c = rouge_su(cand, ref);
        accumulate(r.rouge1, a);
        accumulate(r.rouge2, b);
        accumulate(r.rouge_su, c);
        if (a.degenerate || b.degenerate || c.degenerate) ++r.degenerate;
    }
    r.samples = pairs.size();
    const double n = static_cast<double>(pairs.size());
    divide(r.rouge1, n);
    divide(r.rouge2, n);
    divide(r.rouge_su, n);
    return r;
}

std::string RougeReport::to_text() const {
    std::string out = "metric\tprecision\trecall\tf1\n";
    for (const auto& [name, s] : {std::pair{"ROUGE-1", &rouge1}, std::pair{"ROUGE-2", &rouge2}, std::pair{"ROUGE-SU", &rouge_su}})
        out += std::string(name) + "\t" + fmt(s->precision) + "\t" + fmt(s->recall) + "\t" + fmt(s->f1) + "\n";
    return out;
}

std::string RougeReport::to_structured_text() const {
    std::string out = "samples = " + std::to_string(samples) + "\ndegenerate_samples = " + std::to_string(degenerate) + "\n";
    for (const auto& [name, s] : {std::pair{"rouge1", &rouge1}, std::pair{"rouge2", &rouge2}, std::pair{"rouge_su", &rouge_su}}) {
        out += std::string(name) + ".precision = " + fmt(s->precision) + "\n";
        out += std::string(name) + ".recall = " + fmt(s->recall) + "\n";
        out += std::string(name) + ".f1 = " + fmt(s->f1) + "\n";
    }
    return out;
}

}  // namespace mdsum::eval
