// SPDX-License-Identifier: Apache-2.0
//
// ROUGE-1, ROUGE-2 and ROUGE-SU (unigrams plus skip-bigrams with unlimited
// gap) over clipped unit multisets.

#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mdsum::eval {

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    /// Set when a side has no units, so the corresponding ratio is undefined and reported 0.
    bool degenerate = false;
};

struct RougeReport {
    RougeScore rouge1, rouge2, rouge_su;
    std::size_t samples = 0;
    /// Samples where any metric was degenerate.
    std::size_t degenerate = 0;

    /// Tab-separated lines: metric, precision, recall, f1.
    std::string to_text() const;
    /// key = value lines.
    std::string to_structured_text() const;
};

using Tokens = std::vector<std::string>;

RougeScore rouge_n(const Tokens& candidate, const Tokens& reference, int n);
RougeScore rouge_su(const Tokens& candidate, const Tokens& reference);

/// Per-sample scores averaged without weights. Throws UsageError on an empty list.
RougeReport evaluate_corpus(std::span<const std::pair<Tokens, Tokens>> pairs);

}  // namespace mdsum::eval
