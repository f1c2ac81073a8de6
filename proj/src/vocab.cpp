// SPDX-License-Identifier: Apache-2.0

#include "mdsum/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "mdsum/errors.hpp"

namespace mdsum {

namespace {
const std::vector<std::string> kReserved{"<pad>", "<unk>", "<doc>", "<s>", "</s>"};
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
    words_ = kReserved;
    words_.insert(words_.end(), words.begin(), words.end());
    for (std::size_t i = 0; i < words_.size(); ++i)
        if (!index_.emplace(words_[i], static_cast<int>(i)).second)
            throw ConfigError("duplicate vocabulary entry '" + words_[i] + "'");
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, std::size_t max_size) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : texts)
        for (auto& w : tokenize(t)) ++counts[w];
    for (const auto& r : kReserved) counts.erase(r);
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> words;
    for (const auto& [w, n] : ranked) {
        if (words.size() + kReservedTokens >= max_size) break;
        words.push_back(w);
    }
    return Vocabulary(words);
}

int Vocabulary::id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::word(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= words_.size())
        throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(words_.size()));
    return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kEosId) break;
        if (!out.empty()) out.push_back(' ');
        out += word(id);
    }
    return out;
}

}  // namespace mdsum
