// SPDX-License-Identifier: Apache-2.0

#include "mdsum/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mdsum/errors.hpp"
#include "mdsum/ops.hpp"

namespace mdsum::data {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(num::uniform01(rng) * static_cast<double>(n)));
}

}  // namespace

std::vector<dep::DependencyParse> CorpusSample::dependency_parses() const {
    if (!has_parses()) throw StructuralError("sample " + id + " has no parses");
    std::vector<dep::DependencyParse> out;
    for (std::size_t k = 0; k < parses.size(); ++k) {
        try {
            out.push_back(dep::load_conllu(parses[k]));
        } catch (const Error& e) {
            throw StructuralError("sample " + id + " document " + std::to_string(k + 1) + ": " + e.what());
        }
    }
    return out;
}

void validate_sample(const CorpusSample& s) {
    if (s.id.empty()) throw StructuralError("sample with empty id");
    const std::size_t q = s.documents.size();
    if (q < kMinDocuments || q > kMaxDocuments)
        throw StructuralError("sample " + s.id + " has " + std::to_string(q) + " documents, expected 2 to 10");
    if (!s.has_parses()) return;
    if (s.parses.size() != q)
        throw StructuralError("sample " + s.id + " has " + std::to_string(s.parses.size()) + " parses for " +
                              std::to_string(q) + " documents");
    const auto parsed = s.dependency_parses();
    for (std::size_t k = 0; k < q; ++k) {
        const auto tokens = tokenize(s.documents[k]);
        if (parsed[k].token_count() != tokens.size())
            throw StructuralError("sample " + s.id + " document " + std::to_string(k + 1) + ": parse has " +
                                  std::to_string(parsed[k].token_count()) + " tokens, text has " +
                                  std::to_string(tokens.size()));
    }
}

std::string parse_file_name(const std::string& id, std::size_t doc_index) {
    return id + "." + std::to_string(doc_index) + ".conllu";
}

std::string corpus_record(const CorpusSample& s) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["documents"] = s.documents;
    j["summary"] = s.summary;
    std::vector<std::string> files;
    for (std::size_t k = 0; k < s.parses.size(); ++k) files.push_back(parse_file_name(s.id, k + 1));
    j["parses"] = files;
    return j.dump();
}

CorpusSample parse_record(const std::string& line, const fs::path& dir) {
    CorpusSample s;
    try {
        const auto j = nlohmann::json::parse(line);
        for (const auto& [key, value] : j.items())
            if (key != "id" && key != "documents" && key != "summary" && key != "parses")
                throw StructuralError("unknown corpus field '" + key + "'");
        s.id = j.at("id").get<std::string>();
        s.documents = j.at("documents").get<std::vector<std::string>>();
        s.summary = j.at("summary").get<std::string>();
        for (const auto& f : j.value("parses", std::vector<std::string>{})) s.parses.push_back(read_file(dir / f));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("corpus record: ") + e.what());
    }
    validate_sample(s);
    return s;
}

std::vector<CorpusSample> read_corpus(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open corpus " + file.string());
    std::vector<CorpusSample> out;
    std::set<std::string> ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(parse_record(line, file.parent_path()));
        } catch (const ParseError& e) {
            throw ParseError(e.what(), line_no);
        } catch (const StructuralError& e) {
            throw StructuralError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!ids.insert(out.back().id).second)
            throw StructuralError("line " + std::to_string(line_no) + ": duplicate sample id " + out.back().id);
    }
    return out;
}

void write_corpus(std::span<const CorpusSample> samples, const fs::path& file) {
    std::set<std::string> ids;
    for (const auto& s : samples) {
        validate_sample(s);
        if (!ids.insert(s.id).second) throw StructuralError("duplicate sample id " + s.id);
    }
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::string text;
    for (const auto& s : samples) {
        text += corpus_record(s) + "\n";
        for (std::size_t k = 0; k < s.parses.size(); ++k)
            write_file(file.parent_path() / parse_file_name(s.id, k + 1), s.parses[k]);
    }
    write_file(file, text);
}

namespace {

enum class Slot { Det, Adj, Noun, Verb, Adv, Punct };

// Sentence shapes; "the"/"a" fill Det, "today" fills Adv.
const std::vector<std::vector<Slot>>& templates() {
    using S = Slot;
    static const std::vector<std::vector<Slot>> t{
        {S::Det, S::Adj, S::Noun, S::Verb, S::Det, S::Noun, S::Punct},
        {S::Det, S::Noun, S::Verb, S::Det, S::Noun, S::Adv, S::Punct},
        {S::Det, S::Noun, S::Verb, S::Punct},
        {S::Det, S::Adj, S::Noun, S::Verb, S::Det, S::Adj, S::Noun, S::Punct},
    };
    return t;
}

struct WordPools {
    std::vector<std::string> nouns, verbs, adjs;
};

WordPools make_pools(std::size_t vocab_size) {
    // Reserved ids plus the fixed words: the, a, today, ".", and the keyword.
    const std::size_t fixed = kReservedTokens + 5;
    const std::size_t content = vocab_size > fixed + 3 ? vocab_size - fixed : 3;
    WordPools p;
    const std::size_t n_nouns = std::max<std::size_t>(1, content / 2);
    const std::size_t n_verbs = std::max<std::size_t>(1, (content - n_nouns) / 2);
    const std::size_t n_adjs = std::max<std::size_t>(1, content - n_nouns - n_verbs);
    for (std::size_t i = 0; i < n_nouns; ++i) p.nouns.push_back("n" + std::to_string(i));
    for (std::size_t i = 0; i < n_verbs; ++i) p.verbs.push_back("v" + std::to_string(i));
    for (std::size_t i = 0; i < n_adjs; ++i) p.adjs.push_back("j" + std::to_string(i));
    return p;
}

dep::Sentence make_sentence(std::mt19937_64& rng, const WordPools& pools, bool salient) {
    const auto& shape = templates()[pick(rng, templates().size())];
    dep::Sentence s;
    bool seen_verb = false;
    auto push = [&](std::string word, std::string relation) {
        s.heads.push_back(s.tokens.empty() ? dep::kRootHead : static_cast<int>(s.tokens.size()) - 1);
        s.relations.push_back(s.tokens.empty() ? "root" : std::move(relation));
        s.tokens.push_back(std::move(word));
    };
    if (salient) push(kSalientKeyword, "root");
    for (Slot slot : shape) {
        switch (slot) {
        case Slot::Det: push(pick(rng, 2) == 0 ? "the" : "a", "det"); break;
        case Slot::Adj: push(pools.adjs[pick(rng, pools.adjs.size())], "amod"); break;
        case Slot::Noun: push(pools.nouns[pick(rng, pools.nouns.size())], seen_verb ? "obj" : "nsubj"); break;
        case Slot::Verb:
            push(pools.verbs[pick(rng, pools.verbs.size())], "dep");
            seen_verb = true;
            break;
        case Slot::Adv: push("today", "advmod"); break;
        case Slot::Punct: push(".", "punct"); break;
        }
    }
    return s;
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

}  // namespace

SynthCorpus synth_corpus(const SynthOptions& o) {
    if (o.samples < 1) throw ConfigError("synth_corpus: need at least one sample");
    if (o.min_docs < kMinDocuments || o.max_docs > kMaxDocuments || o.min_docs > o.max_docs)
        throw ConfigError("synth_corpus: document range must lie within [2, 10]");
    std::mt19937_64 rng(o.seed);
    const auto pools = make_pools(o.vocab_size);
    SynthCorpus out;
    for (std::size_t i = 0; i < o.samples; ++i) {
        CorpusSample sample;
        sample.id = "s" + std::to_string(i);
        const std::size_t q = o.min_docs + pick(rng, o.max_docs - o.min_docs + 1);
        std::vector<std::string> salient;
        for (std::size_t k = 0; k < q; ++k) {
            const std::size_t n_sent = 2 + pick(rng, 2);
            const std::size_t key = pick(rng, n_sent);
            dep::DependencyParse parse;
            std::vector<std::string> words;
            for (std::size_t j = 0; j < n_sent; ++j) {
                auto sentence = make_sentence(rng, pools, j == key);
                if (j == key) salient.push_back(join(sentence.tokens));
                words.insert(words.end(), sentence.tokens.begin(), sentence.tokens.end());
                out.sentences += 1;
                out.tokens += sentence.size();
                out.arcs += sentence.size() - 1;
                parse.sentences.push_back(std::move(sentence));
            }
            sample.documents.push_back(join(words));
            sample.parses.push_back(dep::write_conllu(parse));
        }
        sample.summary = join(salient);
        out.samples.push_back(std::move(sample));
    }
    return out;
}

Vocabulary build_vocabulary(std::span<const CorpusSample> samples, std::size_t max_size) {
    std::vector<std::string> texts;
    for (const auto& s : samples) {
        texts.insert(texts.end(), s.documents.begin(), s.documents.end());
        texts.push_back(s.summary);
    }
    return Vocabulary::build(texts, max_size);
}

dep::RelationVocab build_relations(std::span<const CorpusSample> samples, std::size_t capacity) {
    std::vector<dep::DependencyParse> parses;
    for (const auto& s : samples) {
        if (!s.has_parses()) continue;
        auto p = s.dependency_parses();
        parses.insert(parses.end(), p.begin(), p.end());
    }
    return dep::build_relation_vocab(parses, capacity);
}

model::SourceInput make_source(const CorpusSample& sample, const Vocabulary& vocab, const dep::RelationVocab& relations,
                               bool with_parses) {
    model::SourceInput src;
    std::vector<std::vector<std::size_t>> offsets(sample.documents.size());
    for (std::size_t k = 0; k < sample.documents.size(); ++k) {
        const int doc = static_cast<int>(k + 1);
        src.tokens.push_back(kDocId);
        src.doc_index.push_back(doc);
        const auto words = tokenize(sample.documents[k]);
        offsets[k].push_back(src.tokens.size());
        for (int id : vocab.encode(words)) {
            src.tokens.push_back(id);
            src.doc_index.push_back(doc);
        }
    }
    src.relations = dep::DepRelationTensor(src.tokens.size());
    if (!with_parses) return src;
    const auto parses = sample.dependency_parses();
    if (parses.size() != sample.documents.size())
        throw StructuralError("sample " + sample.id + ": parse count differs from document count");
    for (std::size_t k = 0; k < parses.size(); ++k) {
        std::vector<std::size_t> sentence_offsets;
        std::size_t pos = offsets[k][0];
        for (const auto& s : parses[k].sentences) {
            sentence_offsets.push_back(pos);
            pos += s.size();
        }
        const std::size_t end = k + 1 < parses.size() ? offsets[k + 1][0] - 1 : src.tokens.size();
        if (pos != end)
            throw StructuralError("sample " + sample.id + " document " + std::to_string(k + 1) +
                                  ": parse does not cover the document tokens");
        const auto part = dep::build_dep_tensor(parses[k], relations, sentence_offsets, src.tokens.size());
        for (const auto& e : part.entries()) src.relations.set(e.row, e.col, e.relation);
    }
    return src;
}

model::TrainingPair make_pair(const CorpusSample& sample, const Vocabulary& vocab, const dep::RelationVocab& relations,
                              bool with_parses) {
    model::TrainingPair pair;
    pair.source = make_source(sample, vocab, relations, with_parses);
    pair.summary = vocab.encode(tokenize(sample.summary));
    return pair;
}

}  // namespace mdsum::data
