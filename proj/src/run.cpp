// SPDX-License-Identifier: Apache-2.0

#include "mdsum/run.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <ostream>
#include <set>

#include "mdsum/errors.hpp"

namespace mdsum::run {

namespace fs = std::filesystem;

void RunConfig::validate() const {
    if (corpus.empty()) throw ConfigError("run config: corpus is required");
    if (output_dir.empty()) throw ConfigError("run config: output_dir is required");
    if (vocab_size <= static_cast<std::size_t>(kReservedTokens)) throw ConfigError("run config: vocab_size too small");
    auto m = model;
    m.vocab_size = static_cast<int>(vocab_size);
    m.validate();
    train.validate();
}

nlohmann::ordered_json RunConfig::to_json() const {
    nlohmann::ordered_json j;
    j["corpus"] = corpus.string();
    j["output_dir"] = output_dir.string();
    j["vocab_size"] = vocab_size;
    j["seed"] = seed;
    const auto m = model.to_json();
    for (const auto& [k, v] : m.items())
        if (k != "vocab_size") j[k] = v;
    const auto t = train.to_json();
    for (const auto& [k, v] : t.items())
        if (k != "seed") j[k] = v;
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j, const fs::path& base) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    RunConfig c;
    const auto defaults = c.to_json();
    std::set<std::string> known;
    for (const auto& [k, v] : defaults.items()) known.insert(k);
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw ConfigError("run config: unknown key '" + k + "'");

    nlohmann::json merged = defaults;
    for (const auto& [k, v] : j.items()) merged[k] = v;
    try {
        c.corpus = merged.at("corpus").get<std::string>();
        c.output_dir = merged.at("output_dir").get<std::string>();
        c.vocab_size = merged.at("vocab_size").get<std::size_t>();
        c.seed = merged.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    merged["vocab_size"] = static_cast<int>(c.vocab_size);
    c.model = model::ModelConfig::from_json(merged);
    c.model.vocab_size = 0;
    c.train = train::TrainConfig::from_json(merged);
    c.train.seed = c.seed;
    if (!j.contains("decay_milestones")) c.train.decay_milestones.reset();
    if (!base.empty()) {
        if (!c.corpus.empty() && c.corpus.is_relative()) c.corpus = base / c.corpus;
        if (!c.output_dir.empty() && c.output_dir.is_relative()) c.output_dir = base / c.output_dir;
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config " + file.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + file.string() + ": " + e.what());
    }
    return from_json(j, file.parent_path());
}

namespace {

std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

class Log {
public:
    Log(const fs::path& path, std::ostream* echo) : out_(path, std::ios::app), echo_(echo) {
        if (!out_) throw Error("cannot open log " + path.string());
    }
    void line(const std::string& msg) {
        const std::string text = timestamp() + " " + msg + "\n";
        out_ << text << std::flush;
        if (echo_) *echo_ << text << std::flush;
    }

private:
    std::ofstream out_;
    std::ostream* echo_;
};

}  // namespace

RunArtifacts train(const RunConfig& config, std::ostream* echo) {
    config.validate();
    fs::create_directories(config.output_dir);
    RunArtifacts art;
    art.checkpoint = config.output_dir / kCheckpointFile;
    art.trace = config.output_dir / kTraceFile;
    art.log = config.output_dir / kLogFile;
    Log log(art.log, echo);
    log.line("config " + config.to_json().dump());

    const auto samples = data::read_corpus(config.corpus);
    if (samples.empty()) throw ConfigError("corpus " + config.corpus.string() + " is empty");
    const bool with_parses = config.model.mask != dep::MaskStrategy::None;

    std::optional<train::Checkpoint> resume;
    if (fs::exists(art.checkpoint)) resume = train::load_checkpoint(art.checkpoint);

    Vocabulary vocab;
    dep::RelationVocab relations;
    model::ModelConfig mc = config.model;
    if (resume) {
        vocab = Vocabulary(std::vector<std::string>(resume->vocabulary.begin() + kReservedTokens, resume->vocabulary.end()));
        relations = dep::RelationVocab(resume->relations, resume->relation_capacity);
        mc.vocab_size = static_cast<int>(vocab.size());
        if (resume->model.to_json() != mc.to_json())
            throw ConfigError("checkpoint in " + config.output_dir.string() + " was trained with a different model config");
    } else {
        vocab = data::build_vocabulary(samples, config.vocab_size);
        if (with_parses) relations = data::build_relations(samples, static_cast<std::size_t>(mc.relation_capacity));
        else relations = dep::RelationVocab({}, static_cast<std::size_t>(mc.relation_capacity));
        mc.vocab_size = static_cast<int>(vocab.size());
    }
    log.line("corpus " + std::to_string(samples.size()) + " samples, vocabulary " + std::to_string(vocab.size()) +
             ", relations " + std::to_string(relations.known()));

    std::vector<model::TrainingPair> pairs;
    for (const auto& s : samples) pairs.push_back(data::make_pair(s, vocab, relations, with_parses));

    model::Model model(mc, config.seed, relations);
    train::Trainer trainer(model, config.train);
    if (resume) {
        trainer.restore(*resume);
        log.line("resumed at step " + std::to_string(trainer.step()));
    }
    art.trace_entries = trainer.run(pairs, {art.checkpoint, art.trace, vocab.words()});
    if (!fs::exists(art.checkpoint)) train::save_checkpoint(trainer.snapshot(vocab.words()), art.checkpoint);
    log.line("finished at step " + std::to_string(trainer.step()) +
             (art.trace_entries.empty() ? std::string() : ", last loss " + train::format_trace_line(art.trace_entries.back())));
    return art;
}

std::string generate(const train::Checkpoint& cp, const data::CorpusSample& sample, int min_len, int max_len) {
    if (cp.vocabulary.size() < static_cast<std::size_t>(kReservedTokens))
        throw CheckpointError("section 'vocab': missing reserved tokens");
    const Vocabulary vocab(std::vector<std::string>(cp.vocabulary.begin() + kReservedTokens, cp.vocabulary.end()));
    const auto model = train::restore_model(cp);
    const bool with_parses = cp.model.mask != dep::MaskStrategy::None;
    const auto source = data::make_source(sample, vocab, model.relations(), with_parses);
    return vocab.decode(model.generate(source, min_len, max_len));
}

}  // namespace mdsum::run
