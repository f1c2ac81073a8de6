// SPDX-License-Identifier: Apache-2.0
//
// Reader and writer for CoNLL-U dependency parses.

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mdsum::dep {

/// Head value of the token attached to the artificial root.
inline constexpr int kRootHead = -1;

struct Sentence {
    std::vector<std::string> tokens;
    /// 0-based head index within the sentence, or kRootHead.
    std::vector<int> heads;
    std::vector<std::string> relations;

    std::size_t size() const noexcept { return tokens.size(); }
};

struct DependencyParse {
    std::vector<Sentence> sentences;

    std::size_t token_count() const noexcept;
    /// Non-root arcs, i.e. tokens minus sentences.
    std::size_t arc_count() const noexcept;
};

/// Parses 10-column tab-separated CoNLL-U. Comment lines and multiword or empty-node
/// lines are skipped. Throws ParseError (with line number) for malformed lines and
/// StructuralError for out-of-range heads or a sentence without exactly one root.
DependencyParse load_conllu(std::string_view text);
DependencyParse load_conllu_file(const std::string& path);

/// Minimal CoNLL-U rendering: ID, FORM, HEAD and DEPREL filled, other columns "_".
std::string write_conllu(const DependencyParse& parse);

}  // namespace mdsum::dep
