// SPDX-License-Identifier: Apache-2.0

#include "mdsum/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "mdsum/errors.hpp"

namespace mdsum::train {

using num::Shape;
using num::Tensor;

namespace {

constexpr char kMagic[8] = {'M', 'D', 'S', 'U', 'M', 'C', 'K', 'P'};

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes.insert(bytes.end(), s.begin(), s.end());
    }
    void raw(const std::vector<std::uint8_t>& b) { bytes.insert(bytes.end(), b.begin(), b.end()); }

    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size, std::string section)
        : data_(data), size_(size), section_(std::move(section)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    const std::uint8_t* take(std::size_t n) {
        need(n);
        const std::uint8_t* p = data_ + pos_;
        pos_ += n;
        return p;
    }
    bool done() const { return pos_ == size_; }
    [[noreturn]] void fail(const std::string& what) const {
        throw CheckpointError("section '" + section_ + "': " + what);
    }

private:
    void need(std::size_t n) const {
        if (size_ - pos_ < n) fail("truncated");
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::string section_;
};

std::vector<std::uint8_t> tensor_block(const std::vector<std::string>& names, const std::vector<Tensor>& tensors) {
    Writer w;
    w.u64(tensors.size());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        w.str(names[i]);
        w.u32(static_cast<std::uint32_t>(tensors[i].shape().size()));
        for (std::size_t e : tensors[i].shape()) w.u64(e);
    }
    for (const Tensor& t : tensors)
        for (double v : t.data()) w.f64(v);
    return w.bytes;
}

std::vector<NamedTensor> read_tensor_block(Reader& r) {
    const std::uint64_t count = r.u64();
    std::vector<NamedTensor> out;
    std::vector<Shape> shapes;
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const std::uint32_t rank = r.u32();
        if (rank > 8) r.fail("implausible rank for " + name);
        Shape shape(rank);
        for (auto& e : shape) e = r.u64();
        out.push_back({std::move(name), Tensor()});
        shapes.push_back(std::move(shape));
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t n = num::shape_volume(shapes[i]);
        std::vector<double> values(n);
        for (double& v : values) v = r.f64();
        out[i].value = Tensor(shapes[i], std::move(values));
    }
    if (!r.done()) r.fail("trailing bytes");
    return out;
}

std::vector<std::uint8_t> text(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& cp) {
    std::vector<std::pair<std::string, std::vector<std::uint8_t>>> sections;

    nlohmann::ordered_json config;
    config["model"] = cp.model.to_json();
    config["train"] = cp.train.to_json();
    sections.emplace_back("config", text(config.dump()));

    nlohmann::json vocab = cp.vocabulary;
    sections.emplace_back("vocab", text(vocab.dump()));

    nlohmann::ordered_json rel;
    rel["capacity"] = cp.relation_capacity;
    rel["labels"] = cp.relations;
    sections.emplace_back("relations", text(rel.dump()));

    std::vector<std::string> names;
    std::vector<Tensor> values;
    for (const auto& p : cp.params) {
        names.push_back(p.name);
        values.push_back(p.value);
    }
    sections.emplace_back("params", tensor_block(names, values));
    sections.emplace_back("adam_m", tensor_block(names, cp.adam_m));
    sections.emplace_back("adam_v", tensor_block(names, cp.adam_v));

    Writer step;
    step.u64(static_cast<std::uint64_t>(cp.step));
    sections.emplace_back("step", step.bytes);
    sections.emplace_back("rng", text(cp.rng_state));

    Writer w;
    w.bytes.insert(w.bytes.end(), std::begin(kMagic), std::end(kMagic));
    w.u32(cp.version);
    w.u32(static_cast<std::uint32_t>(sections.size()));
    for (const auto& [name, payload] : sections) {
        w.str(name);
        w.u64(payload.size());
        w.raw(payload);
    }
    return w.bytes;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader header(bytes.data(), bytes.size(), "header");
    const std::uint8_t* magic = header.take(sizeof kMagic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) header.fail("bad magic bytes");
    Checkpoint cp;
    cp.version = header.u32();
    if (cp.version != kCheckpointVersion)
        header.fail("unsupported version " + std::to_string(cp.version) + ", expected " +
                    std::to_string(kCheckpointVersion));
    const std::uint32_t count = header.u32();
    std::map<std::string, std::pair<const std::uint8_t*, std::size_t>> sections;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = header.str();
        const std::uint64_t len = header.u64();
        Reader probe(nullptr, 0, name);
        if (len > bytes.size()) probe.fail("truncated");
        const std::uint8_t* payload = header.take(static_cast<std::size_t>(len));
        if (!sections.emplace(name, std::make_pair(payload, static_cast<std::size_t>(len))).second)
            probe.fail("duplicated");
    }
    if (!header.done()) header.fail("trailing bytes");

    auto section = [&](const std::string& name) {
        auto it = sections.find(name);
        if (it == sections.end()) throw CheckpointError("section '" + name + "': missing");
        return Reader(it->second.first, it->second.second, name);
    };
    auto json_of = [&](const std::string& name) {
        Reader r = section(name);
        auto it = sections.find(name);
        try {
            return nlohmann::json::parse(it->second.first, it->second.first + it->second.second);
        } catch (const nlohmann::json::exception& e) {
            r.fail(e.what());
        }
    };

    try {
        const auto config = json_of("config");
        cp.model = model::ModelConfig::from_json(config.at("model"));
        cp.train = TrainConfig::from_json(config.at("train"));
        cp.model.validate();
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("section 'config': ") + e.what());
    }
    try {
        cp.vocabulary = json_of("vocab").get<std::vector<std::string>>();
        const auto rel = json_of("relations");
        cp.relation_capacity = rel.at("capacity").get<std::size_t>();
        cp.relations = rel.at("labels").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("section 'vocab/relations': ") + e.what());
    }

    Reader params = section("params");
    cp.params = read_tensor_block(params);
    for (const char* name : {"adam_m", "adam_v"}) {
        Reader r = section(name);
        auto block = read_tensor_block(r);
        if (block.size() != cp.params.size()) r.fail("entry count differs from params");
        auto& dest = std::string(name) == "adam_m" ? cp.adam_m : cp.adam_v;
        for (std::size_t i = 0; i < block.size(); ++i) {
            if (block[i].name != cp.params[i].name || block[i].value.shape() != cp.params[i].value.shape())
                r.fail("entry " + block[i].name + " does not match params");
            dest.push_back(std::move(block[i].value));
        }
    }

    // Shape table must agree with a freshly initialised model of the stored configuration.
    {
        auto reference = model::ModelParams::init(cp.model, 0);
        auto expected = reference.all(cp.model);
        if (expected.size() != cp.params.size()) params.fail("parameter count differs from configuration");
        for (std::size_t i = 0; i < expected.size(); ++i)
            if (expected[i]->name != cp.params[i].name || expected[i]->value.shape() != cp.params[i].value.shape())
                params.fail("entry " + cp.params[i].name + " " + num::shape_string(cp.params[i].value.shape()) +
                            " does not match configuration");
    }

    Reader step = section("step");
    cp.step = static_cast<long>(step.u64());
    if (!step.done()) step.fail("trailing bytes");
    auto rng = sections.find("rng");
    if (rng == sections.end()) throw CheckpointError("section 'rng': missing");
    cp.rng_state.assign(reinterpret_cast<const char*>(rng->second.first), rng->second.second);
    return cp;
}

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(cp);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

model::Model restore_model(const Checkpoint& cp) {
    auto params = model::ModelParams::init(cp.model, 0);
    auto slots = params.all(cp.model);
    if (slots.size() != cp.params.size()) throw CheckpointError("section 'params': parameter count differs from configuration");
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]->name != cp.params[i].name || slots[i]->value.shape() != cp.params[i].value.shape())
            throw CheckpointError("section 'params': entry " + cp.params[i].name + " does not match configuration");
        slots[i]->value = cp.params[i].value;
    }
    return model::Model(cp.model, std::move(params), dep::RelationVocab(cp.relations, cp.relation_capacity));
}

}  // namespace mdsum::train
