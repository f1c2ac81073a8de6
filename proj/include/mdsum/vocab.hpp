// SPDX-License-Identifier: Apache-2.0
//
// Word-level vocabulary with reserved control tokens.

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mdsum {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kDocId = 2;  // document separator
inline constexpr int kBosId = 3;  // start of summary
inline constexpr int kEosId = 4;  // end of summary
inline constexpr int kReservedTokens = 5;

/// Lowercases ASCII letters and splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
public:
    /// Only the reserved tokens.
    Vocabulary();
    /// Reserved tokens followed by `words` in order; throws ConfigError on duplicates.
    explicit Vocabulary(const std::vector<std::string>& words);

    /// Counts words over `texts`, keeps the most frequent (ties lexicographic) up to
    /// max_size entries including the reserved ones.
    static Vocabulary build(std::span<const std::string> texts, std::size_t max_size);

    int id(const std::string& word) const;
    const std::string& word(int id) const;
    std::size_t size() const noexcept { return words_.size(); }
    const std::vector<std::string>& words() const noexcept { return words_; }

    std::vector<int> encode(std::span<const std::string> tokens) const;
    /// Space-joined words, stopping at the first end-of-summary token.
    std::string decode(std::span<const int> ids) const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace mdsum
