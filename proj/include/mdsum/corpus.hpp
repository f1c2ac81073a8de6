// SPDX-License-Identifier: Apache-2.0
//
// Corpus files, the synthetic corpus generator and conversion of samples to
// model inputs.
//
// A corpus is a JSON Lines file with one record per sample:
//   {"id":..., "documents":[...], "summary":..., "parses":["<id>.1.conllu", ...]}
// Parse files live next to the corpus file. "parses" is empty when the
// sample carries no dependency parses.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mdsum/conllu.hpp"
#include "mdsum/dependency.hpp"
#include "mdsum/model.hpp"
#include "mdsum/vocab.hpp"

namespace mdsum::data {

inline constexpr std::size_t kMinDocuments = 2;
inline constexpr std::size_t kMaxDocuments = 10;

struct CorpusSample {
    std::string id;
    std::vector<std::string> documents;
    std::string summary;
    /// CoNLL-U text per document, or empty.
    std::vector<std::string> parses;

    bool has_parses() const noexcept { return !parses.empty(); }
    /// Parsed form of every document; throws when the sample has none.
    std::vector<dep::DependencyParse> dependency_parses() const;
};

/// Throws StructuralError on a bad document count, missing parses or a parse whose
/// token count differs from the tokenized document.
void validate_sample(const CorpusSample& sample);

std::string parse_file_name(const std::string& id, std::size_t doc_index);

/// One record line without the trailing newline.
std::string corpus_record(const CorpusSample& sample);
/// Parses a record; parse files are read relative to `dir`.
CorpusSample parse_record(const std::string& line, const std::filesystem::path& dir);

std::vector<CorpusSample> read_corpus(const std::filesystem::path& file);
/// Writes the record file and its sibling parse files. Ids must be unique.
void write_corpus(std::span<const CorpusSample> samples, const std::filesystem::path& file);

struct SynthOptions {
    std::size_t samples = 32;
    std::size_t min_docs = 2;
    std::size_t max_docs = 2;
    /// Target vocabulary size including the reserved tokens.
    std::size_t vocab_size = 200;
    std::uint64_t seed = 0;
};

struct SynthCorpus {
    std::vector<CorpusSample> samples;
    /// Ground truth of the generated parses.
    std::size_t sentences = 0;
    std::size_t tokens = 0;
    std::size_t arcs = 0;
};

/// Template sentences over a word pool sized to the target vocabulary. Every document
/// holds one salient sentence that starts with the keyword "notably"; the summary is the
/// salient sentences in document order. Parses are left-headed chains.
SynthCorpus synth_corpus(const SynthOptions& options);

inline constexpr const char* kSalientKeyword = "notably";

Vocabulary build_vocabulary(std::span<const CorpusSample> samples, std::size_t max_size);
dep::RelationVocab build_relations(std::span<const CorpusSample> samples, std::size_t capacity);

/// Encoder input: each document is preceded by the document separator, which takes that
/// document's index. Relations are filled when `with_parses` is set.
model::SourceInput make_source(const CorpusSample& sample, const Vocabulary& vocab, const dep::RelationVocab& relations,
                               bool with_parses);
model::TrainingPair make_pair(const CorpusSample& sample, const Vocabulary& vocab, const dep::RelationVocab& relations,
                              bool with_parses);

}  // namespace mdsum::data
