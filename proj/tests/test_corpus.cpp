// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mdsum/corpus.hpp"
#include "mdsum/errors.hpp"
#include "mdsum/run.hpp"

using namespace mdsum;
using namespace mdsum::data;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / "mdsum_corpus_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::size_t count_word(const std::string& text, const std::string& word) {
    std::size_t n = 0;
    for (const auto& w : tokenize(text)) n += w == word;
    return n;
}

}  // namespace

TEST_CASE("synthetic corpus construction") {
    SynthOptions o;
    o.samples = 1;
    o.seed = 4;
    const auto one = synth_corpus(o);
    REQUIRE(one.samples.size() == 1);
    const auto& s = one.samples[0];
    CHECK(s.documents.size() == 2);
    CHECK(count_word(s.summary, kSalientKeyword) == 2);
    for (const auto& doc : s.documents) CHECK(count_word(doc, kSalientKeyword) == 1);
    CHECK_NOTHROW(validate_sample(s));

    o.samples = 20;
    o.max_docs = 5;
    const auto a = synth_corpus(o), b = synth_corpus(o);
    std::size_t arcs = 0, tokens = 0, sentences = 0;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(corpus_record(a.samples[i]) == corpus_record(b.samples[i]));
        CHECK(a.samples[i].parses == b.samples[i].parses);
        const auto& docs = a.samples[i].documents;
        CHECK(docs.size() >= 2);
        CHECK(docs.size() <= 5);
        for (const auto& p : a.samples[i].dependency_parses()) {
            arcs += p.arc_count();
            tokens += p.token_count();
            sentences += p.sentences.size();
        }
        // Salient sentences appear in document order.
        std::string expected;
        for (const auto& doc : docs) {
            const auto at = doc.find(kSalientKeyword);
            const auto end = doc.find(" .", at);
            expected += (expected.empty() ? "" : " ") + doc.substr(at, end + 2 - at);
        }
        CHECK(a.samples[i].summary == expected);
    }
    CHECK(arcs == a.arcs);
    CHECK(tokens == a.tokens);
    CHECK(sentences == a.sentences);

    o.vocab_size = 200;
    o.samples = 32;
    o.max_docs = 2;
    CHECK(build_vocabulary(synth_corpus(o).samples, 200).size() <= 200);
    o.min_docs = 1;
    CHECK_THROWS_AS(synth_corpus(o), ConfigError);
}

TEST_CASE("corpus files round trip byte for byte") {
    SynthOptions o;
    o.samples = 5;
    o.max_docs = 3;
    o.seed = 8;
    const auto corpus = synth_corpus(o);
    const auto d1 = fresh_dir("rt1"), d2 = fresh_dir("rt2");
    write_corpus(corpus.samples, d1 / "corpus.jsonl");
    const auto back = read_corpus(d1 / "corpus.jsonl");
    REQUIRE(back.size() == corpus.samples.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].id == corpus.samples[i].id);
        CHECK(back[i].documents == corpus.samples[i].documents);
        CHECK(back[i].summary == corpus.samples[i].summary);
        CHECK(back[i].parses == corpus.samples[i].parses);
    }
    write_corpus(back, d2 / "corpus.jsonl");
    for (const auto& entry : fs::directory_iterator(d1))
        CHECK(slurp(entry.path()) == slurp(d2 / entry.path().filename()));
}

TEST_CASE("corpus validation") {
    CorpusSample s{"x", {"a b", "c"}, "a", {}};
    CHECK_NOTHROW(validate_sample(s));
    s.documents = {"a b"};
    CHECK_THROWS_AS(validate_sample(s), StructuralError);
    s.documents = {"a b", "c"};
    s.parses = {"1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n\n"};
    CHECK_THROWS_AS(validate_sample(s), StructuralError);
    s.parses.push_back("1\tc\t_\t_\t_\t_\t0\troot\t_\t_\n\n");
    CHECK_THROWS_AS(validate_sample(s), StructuralError);  // document 1 has two tokens

    const auto dir = fresh_dir("dup");
    std::ofstream(dir / "c.jsonl") << R"({"id":"a","documents":["x","y"],"summary":"x","parses":[]})" << "\n"
                                   << R"({"id":"a","documents":["x","y"],"summary":"y","parses":[]})" << "\n";
    CHECK_THROWS_AS(read_corpus(dir / "c.jsonl"), StructuralError);
    std::ofstream(dir / "d.jsonl") << R"({"id":"a","documents":["x","y"],"summary":"x","extra":1})" << "\n";
    CHECK_THROWS_AS(read_corpus(dir / "d.jsonl"), StructuralError);
    std::ofstream(dir / "e.jsonl") << "{not json\n";
    CHECK_THROWS_AS(read_corpus(dir / "e.jsonl"), ParseError);
}

TEST_CASE("source layout marks documents and carries parse relations") {
    CorpusSample s{"x",
                   {"dogs bark", "cats sleep ."},
                   "dogs",
                   {"1\tdogs\t_\t_\t_\t_\t2\tnsubj\t_\t_\n2\tbark\t_\t_\t_\t_\t0\troot\t_\t_\n\n",
                    "1\tcats\t_\t_\t_\t_\t2\tnsubj\t_\t_\n2\tsleep\t_\t_\t_\t_\t0\troot\t_\t_\n3\t.\t_\t_\t_\t_\t2\tpunct\t_\t_\n\n"}};
    const auto vocab = build_vocabulary(std::span<const CorpusSample>(&s, 1), 100);
    const auto rel = build_relations(std::span<const CorpusSample>(&s, 1), 45);
    const auto src = make_source(s, vocab, rel, true);
    CHECK(src.tokens.size() == 7);
    CHECK(src.tokens[0] == kDocId);
    CHECK(src.tokens[3] == kDocId);
    CHECK(src.doc_index == std::vector<int>{1, 1, 1, 2, 2, 2, 2});
    CHECK(src.relations.at(1, 2) == rel.index("nsubj"));
    CHECK(src.relations.at(2, 1) == rel.index("nsubj"));
    CHECK(src.relations.at(2, 2) == rel.index("root"));
    CHECK(src.relations.at(5, 5) == rel.index("root"));
    CHECK(src.relations.at(6, 5) == rel.index("punct"));
    CHECK_FALSE(src.relations.at(0, 1));
    CHECK(src.relations.entry_count() == 3 + 5);
    CHECK(make_source(s, vocab, rel, false).relations.entry_count() == 0);
}

TEST_CASE("run config schema") {
    nlohmann::json j = {{"corpus", "c.jsonl"}, {"output_dir", "out"}, {"d_model", 16}, {"heads", 2}};
    const auto c = run::RunConfig::from_json(j, "/base");
    CHECK(c.corpus == fs::path("/base/c.jsonl"));
    CHECK(c.model.d_model == 16);
    CHECK(c.model.positional.d_model == 16);
    CHECK(c.train.milestones() == std::vector<long>{16000, 24000});
    j["warmup_steps"] = 10;
    CHECK(run::RunConfig::from_json(j).train.milestones() == std::vector<long>{20, 30});
    j["mystery"] = 1;
    CHECK_THROWS_AS(run::RunConfig::from_json(j), ConfigError);
    j.erase("mystery");
    j["heads"] = 3;
    CHECK_THROWS_AS(run::RunConfig::from_json(j), ConfigError);
    j["heads"] = 2;
    j.erase("corpus");
    CHECK_THROWS_AS(run::RunConfig::from_json(j), ConfigError);
}

TEST_CASE("training pipeline writes artifacts and resumes") {
    const auto dir = fresh_dir("pipeline");
    SynthOptions o;
    o.samples = 6;
    o.vocab_size = 60;
    const auto corpus = synth_corpus(o);
    write_corpus(corpus.samples, dir / "corpus.jsonl");

    nlohmann::json j = {{"corpus", "corpus.jsonl"}, {"output_dir", "out"}, {"d_model", 8},  {"heads", 2},
                        {"layers", 1},             {"max_steps", 6},      {"warmup_steps", 2}, {"accumulation", 2},
                        {"dep_hidden", 4},         {"seed", 3}};
    auto cfg = run::RunConfig::from_json(j, dir);
    const auto art = run::train(cfg);
    CHECK(fs::exists(art.checkpoint));
    CHECK(fs::exists(art.trace));
    CHECK(art.trace_entries.size() == 6);
    CHECK(slurp(art.log).find("config {") != std::string::npos);

    cfg.train.max_steps = 8;
    const auto more = run::train(cfg);
    CHECK(more.trace_entries.size() == 2);
    CHECK(more.trace_entries.front().step == 7);

    const auto cp = train::load_checkpoint(art.checkpoint);
    CHECK(cp.step == 8);
    const auto summary = run::generate(cp, corpus.samples[0], 2, 10);
    CHECK(tokenize(summary).size() >= 2);
    CHECK(tokenize(summary).size() <= 10);

    auto other = cfg;
    other.model.d_model = 16;
    other.model.positional.d_model = 16;
    CHECK_THROWS_AS(run::train(other), ConfigError);
}
