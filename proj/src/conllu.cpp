// SPDX-License-Identifier: Apache-2.0

#include "mdsum/conllu.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mdsum/errors.hpp"

namespace mdsum::dep {

std::size_t DependencyParse::token_count() const noexcept {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.size();
    return n;
}

std::size_t DependencyParse::arc_count() const noexcept { return token_count() - sentences.size(); }

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        cols.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
        if (tab == std::string_view::npos) break;
        start = tab + 1;
    }
    return cols;
}

bool parse_int(std::string_view text, int& out) {
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc() && ptr == end;
}

struct SentenceBuilder {
    Sentence sentence;
    std::vector<int> raw_heads;  // 1-based as read, 0 for root
    int first_line = 0;

    bool empty() const { return sentence.tokens.empty(); }

    Sentence finish() {
        const int n = static_cast<int>(sentence.tokens.size());
        int roots = 0;
        for (int i = 0; i < n; ++i) {
            const int h = raw_heads[i];
            if (h < 0 || h > n)
                throw StructuralError("sentence starting at line " + std::to_string(first_line) + ": head " +
                                      std::to_string(h) + " of token " + std::to_string(i + 1) + " out of range");
            if (h == i + 1)
                throw StructuralError("sentence starting at line " + std::to_string(first_line) + ": token " +
                                      std::to_string(i + 1) + " is its own head");
            if (h == 0) ++roots;
            sentence.heads.push_back(h == 0 ? kRootHead : h - 1);
        }
        if (roots != 1)
            throw StructuralError("sentence starting at line " + std::to_string(first_line) + " has " +
                                  std::to_string(roots) + " root tokens");
        Sentence done = std::move(sentence);
        *this = SentenceBuilder{};
        return done;
    }
};

}  // namespace

DependencyParse load_conllu(std::string_view text) {
    DependencyParse parse;
    SentenceBuilder current;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        if (line.empty()) {
            if (!current.empty()) parse.sentences.push_back(current.finish());
            if (nl == text.size()) break;
            continue;
        }
        if (line.front() == '#') continue;

        const auto cols = split_tabs(line);
        if (cols.size() != 10)
            throw ParseError("expected 10 tab-separated columns, found " + std::to_string(cols.size()), line_no);
        const auto id = cols[0];
        // Multiword token ranges (1-2) and empty nodes (1.1) carry no tree arc.
        if (id.find('-') != std::string_view::npos || id.find('.') != std::string_view::npos) continue;

        int id_value = 0, head = 0;
        if (!parse_int(id, id_value)) throw ParseError("bad token id '" + std::string(id) + "'", line_no);
        if (id_value != static_cast<int>(current.sentence.size()) + 1)
            throw ParseError("token id " + std::to_string(id_value) + " out of sequence", line_no);
        if (!parse_int(cols[6], head)) throw ParseError("bad head '" + std::string(cols[6]) + "'", line_no);
        if (cols[1].empty() || cols[7].empty()) throw ParseError("empty FORM or DEPREL column", line_no);

        if (current.empty()) current.first_line = line_no;
        current.sentence.tokens.emplace_back(cols[1]);
        current.sentence.relations.emplace_back(cols[7]);
        current.raw_heads.push_back(head);
        if (nl == text.size()) break;
    }
    if (!current.empty()) parse.sentences.push_back(current.finish());
    return parse;
}

DependencyParse load_conllu_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_conllu(buf.str());
}

std::string write_conllu(const DependencyParse& parse) {
    std::ostringstream os;
    for (const auto& s : parse.sentences) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            const int head = s.heads[i] == kRootHead ? 0 : s.heads[i] + 1;
            os << i + 1 << '\t' << s.tokens[i] << "\t_\t_\t_\t_\t" << head << '\t' << s.relations[i] << "\t_\t_\n";
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace mdsum::dep
