// SPDX-License-Identifier: Apache-2.0
//
// mdsum command-line tool.
//
// Exit status: 0 success, 1 usage or configuration error (including a failed
// protocol check), 2 runtime failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mdsum/checkpoint.hpp"
#include "mdsum/corpus.hpp"
#include "mdsum/encodings.hpp"
#include "mdsum/errors.hpp"
#include "mdsum/rouge.hpp"
#include "mdsum/run.hpp"

namespace fs = std::filesystem;
using namespace mdsum;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error("cannot open " + p.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

int cmd_train(const fs::path& config) {
    const auto cfg = run::RunConfig::load(config);
    const auto art = run::train(cfg, &std::cout);
    std::cout << "checkpoint\t" << art.checkpoint.string() << "\ntrace\t" << art.trace.string() << "\n";
    return kOk;
}

int cmd_generate(const fs::path& checkpoint, const fs::path& input, int min_len, int max_len) {
    const auto cp = train::load_checkpoint(checkpoint);
    for (const auto& sample : data::read_corpus(input))
        std::cout << run::generate(cp, sample, min_len, max_len) << "\n";
    return kOk;
}

int cmd_score(const fs::path& candidates, const fs::path& references, fs::path report) {
    const auto cand = read_lines(candidates), ref = read_lines(references);
    if (cand.size() != ref.size())
        throw Error("candidates have " + std::to_string(cand.size()) + " lines, references " + std::to_string(ref.size()));
    std::vector<std::pair<eval::Tokens, eval::Tokens>> pairs;
    for (std::size_t i = 0; i < cand.size(); ++i) pairs.emplace_back(tokenize(cand[i]), tokenize(ref[i]));
    const auto r = eval::evaluate_corpus(pairs);
    std::cout << r.to_text();
    if (report.empty()) report = fs::path(candidates).concat(".rouge.txt");
    std::ofstream out(report);
    if (!out) throw Error("cannot write " + report.string());
    out << r.to_structured_text();
    return kOk;
}

int cmd_inspect(const std::string& fn_name, double alpha, int docs, int dmodel, int per_doc) {
    enc::PositionalPlan plan{enc::DocEncodingFunction::parse(fn_name), alpha, dmodel};
    plan.validate();
    if (docs < 1 || per_doc < 1) throw UsageError("--docs and --tokens-per-doc must be >= 1");
    std::cout << "doc\tf_doc\n";
    for (int k = 1; k <= docs; ++k) std::printf("%d\t%.6f\n", k, enc::doc_positional_encoding(k, plan.doc_fn));
    std::cout << "\ndoc\tpos\tfused";
    std::cout << "\n";
    int pos = 0;
    for (int k = 1; k <= docs; ++k)
        for (int i = 0; i < per_doc; ++i, ++pos) {
            const auto fused = enc::fuse_positional(enc::doc_positional_encoding(k, plan.doc_fn),
                                                    enc::token_positional_encoding(pos, dmodel), alpha);
            std::printf("%d\t%d", k, pos);
            for (double v : fused) std::printf("\t%.6f", v);
            std::printf("\n");
        }
    return kOk;
}

int cmd_validate(const std::string& fn_name, int qmax, double bound) {
    const auto verdict = enc::validate_protocol(enc::DocEncodingFunction::parse(fn_name), qmax, bound);
    std::cout << verdict.to_text();
    return verdict.pass ? kOk : kUsage;
}

int cmd_parse_stats(const fs::path& input) {
    dep::ParseStats stats;
    if (input.extension() == ".conllu") {
        stats.add(dep::load_conllu_file(input.string()));
    } else {
        for (const auto& s : data::read_corpus(input)) {
            if (!s.has_parses()) throw StructuralError("sample " + s.id + " has no parses");
            for (const auto& p : s.dependency_parses()) stats.add(p);
        }
    }
    std::cout << stats.to_text();
    return kOk;
}

int cmd_synth(const fs::path& out, const data::SynthOptions& o) {
    const auto corpus = data::synth_corpus(o);
    data::write_corpus(corpus.samples, out);
    std::cout << "samples\t" << corpus.samples.size() << "\nsentences\t" << corpus.sentences << "\ntokens\t"
              << corpus.tokens << "\narcs\t" << corpus.arcs << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-document summarization with document-aware positions and dependency-weighted attention"};
    app.require_subcommand(1);

    fs::path config;
    auto* train = app.add_subcommand("train", "Train a model from a run config");
    train->add_option("--config", config, "Run config (JSON)")->required();

    fs::path checkpoint, input;
    int min_len = 2, max_len = 50;
    auto* gen = app.add_subcommand("generate", "Greedy summaries for the samples of a corpus file");
    gen->add_option("--checkpoint", checkpoint)->required();
    gen->add_option("--input", input, "Corpus file with one or more samples")->required();
    gen->add_option("--min-len", min_len);
    gen->add_option("--max-len", max_len);

    fs::path candidates, references, report;
    auto* score = app.add_subcommand("score", "ROUGE-1/2/SU of line-aligned summaries");
    score->add_option("--candidates", candidates)->required();
    score->add_option("--references", references)->required();
    score->add_option("--report", report, "Structured report file (default <candidates>.rouge.txt)");

    std::string doc_fn = "sin";
    double alpha = 0.1, bound = 1.0;
    int docs = 3, dmodel = 8, per_doc = 1, qmax = 10;
    auto* inspect = app.add_subcommand("inspect-encodings", "Print document scalars and fused positional vectors");
    inspect->add_option("--doc-fn", doc_fn);
    inspect->add_option("--alpha", alpha);
    inspect->add_option("--docs", docs);
    inspect->add_option("--dmodel", dmodel);
    inspect->add_option("--tokens-per-doc", per_doc);

    auto* validate = app.add_subcommand("validate-protocol", "Check a document encoding function");
    validate->add_option("--doc-fn", doc_fn)->required();
    validate->add_option("--qmax", qmax);
    validate->add_option("--bound", bound, "Token encoding bound");

    fs::path stats_input;
    auto* stats = app.add_subcommand("parse-stats", "Relation frequencies and arc histogram");
    stats->add_option("corpus", stats_input, "Corpus file or .conllu file")->required();

    fs::path synth_out = "corpus.jsonl";
    data::SynthOptions synth_opts;
    auto* synth = app.add_subcommand("synth-corpus", "Write a synthetic corpus with parses");
    synth->add_option("--out", synth_out);
    synth->add_option("--samples", synth_opts.samples);
    synth->add_option("--min-docs", synth_opts.min_docs);
    synth->add_option("--max-docs", synth_opts.max_docs);
    synth->add_option("--vocab", synth_opts.vocab_size);
    synth->add_option("--seed", synth_opts.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kUsage;
    }

    try {
        if (*train) return cmd_train(config);
        if (*gen) return cmd_generate(checkpoint, input, min_len, max_len);
        if (*score) return cmd_score(candidates, references, report);
        if (*inspect) return cmd_inspect(doc_fn, alpha, docs, dmodel, per_doc);
        if (*validate) return cmd_validate(doc_fn, qmax, bound);
        if (*stats) return cmd_parse_stats(stats_input);
        if (*synth) return cmd_synth(synth_out, synth_opts);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    std::cerr << app.help();
    return kUsage;
}
