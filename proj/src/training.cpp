// SPDX-License-Identifier: Apache-2.0

#include "mdsum/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mdsum/checkpoint.hpp"
#include "mdsum/errors.hpp"

namespace mdsum::train {

using num::Parameter;
using num::Tensor;

std::vector<long> TrainConfig::milestones() const {
    if (decay_milestones) return *decay_milestones;
    return {2 * warmup_steps, 3 * warmup_steps};
}

void TrainConfig::validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0,1)");
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("base_lr must be positive");
    if (warmup_steps < 1) throw ConfigError("warmup_steps must be >= 1");
    if (!(decay_factor > 0.0)) throw ConfigError("decay_factor must be positive");
    if (accumulation < 1) throw ConfigError("accumulation must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
    for (long m : milestones())
        if (m < 1) throw ConfigError("decay milestones must be >= 1");
}

nlohmann::ordered_json TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    j["eps"] = eps;
    j["base_lr"] = base_lr;
    j["warmup_steps"] = warmup_steps;
    j["decay_milestones"] = milestones();
    j["decay_factor"] = decay_factor;
    j["accumulation"] = accumulation;
    j["max_steps"] = max_steps;
    j["seed"] = seed;
    j["batch_size"] = batch_size;
    j["checkpoint_every"] = checkpoint_every;
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.beta1 = j.at("beta1").get<double>();
        c.beta2 = j.at("beta2").get<double>();
        c.eps = j.at("eps").get<double>();
        c.base_lr = j.at("base_lr").get<double>();
        c.warmup_steps = j.at("warmup_steps").get<long>();
        c.decay_milestones = j.at("decay_milestones").get<std::vector<long>>();
        c.decay_factor = j.at("decay_factor").get<double>();
        c.accumulation = j.at("accumulation").get<int>();
        c.max_steps = j.at("max_steps").get<long>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.batch_size = j.at("batch_size").get<int>();
        c.checkpoint_every = j.at("checkpoint_every").get<long>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    return c;
}

double lr_at(long step, const TrainConfig& cfg) {
    if (step < 1) throw DomainError("lr_at: step must be >= 1");
    if (step <= cfg.warmup_steps)
        return cfg.base_lr * (static_cast<double>(step) / static_cast<double>(cfg.warmup_steps));
    int passed = 0;
    for (long m : cfg.milestones())
        if (m <= step) ++passed;
    return cfg.base_lr * std::pow(cfg.decay_factor, passed);
}

AdamState AdamState::zeros(std::span<Parameter* const> params) {
    AdamState s;
    for (const Parameter* p : params) {
        s.m.emplace_back(p->value.shape());
        s.v.emplace_back(p->value.shape());
    }
    return s;
}

void adam_step(std::span<Parameter* const> params, AdamState& state, long step, double lr, const TrainConfig& cfg) {
    if (step < 1) throw DomainError("adam_step: step must be >= 1");
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw DimensionError("adam_step: moment count differs from parameter count");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Parameter& p = *params[i];
        if (p.grad.shape() != p.value.shape() || state.m[i].shape() != p.value.shape() ||
            state.v[i].shape() != p.value.shape())
            throw DimensionError("adam_step: shape mismatch for " + p.name);
        if (!p.grad.all_finite()) throw NumericError("non-finite gradient in parameter " + p.name);
    }
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto value = params[i]->value.data();
        const auto grad = params[i]->grad.data();
        auto m = state.m[i].data();
        auto v = state.v[i].data();
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double g = grad[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[j] / c1;
            const double v_hat = v[j] / c2;
            value[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

std::string format_trace_line(const TraceEntry& e) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%ld\t%.17g\t%.17g", e.step, e.lr, e.loss);
    return buf;
}

std::vector<std::size_t> epoch_order(std::span<const model::TrainingPair> corpus, std::uint64_t seed, long epoch,
                                     std::size_t bucket) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    if (bucket < 1) bucket = 1;

    std::vector<std::vector<std::size_t>> buckets;
    for (std::size_t start = 0; start < order.size(); start += bucket) {
        std::vector<std::size_t> b(order.begin() + static_cast<long>(start),
                                   order.begin() + static_cast<long>(std::min(order.size(), start + bucket)));
        std::stable_sort(b.begin(), b.end(), [&](std::size_t x, std::size_t y) {
            return corpus[x].source.tokens.size() < corpus[y].source.tokens.size();
        });
        buckets.push_back(std::move(b));
    }
    std::shuffle(buckets.begin(), buckets.end(), rng);
    std::vector<std::size_t> out;
    out.reserve(order.size());
    for (const auto& b : buckets) out.insert(out.end(), b.begin(), b.end());
    return out;
}

Trainer::Trainer(model::Model& model, TrainConfig cfg)
    : model_(model), cfg_(std::move(cfg)), params_(model.parameters()), adam_(AdamState::zeros(params_)),
      rng_(cfg_.seed) {
    cfg_.validate();
}

double Trainer::update(std::span<const std::vector<const model::TrainingPair*>> micro_batches) {
    if (micro_batches.empty()) throw DomainError("update: no micro-batches");
    for (Parameter* p : params_) p->zero_grad();
    double total = 0.0;
    for (const auto& batch : micro_batches) {
        if (batch.empty()) throw DomainError("update: empty micro-batch");
        const double share = 1.0 / static_cast<double>(batch.size());
        double batch_loss = 0.0;
        for (const model::TrainingPair* pair : batch) {
            num::Tape tape;
            auto loss = model_.loss(tape, *pair, model_.config().dropout > 0.0 ? &rng_ : nullptr);
            const double value = loss.value().item();
            if (!std::isfinite(value)) throw NumericError("non-finite loss");
            tape.backward(num::scale(loss, share));
            batch_loss += value * share;
        }
        total += batch_loss;
    }
    const double inv = 1.0 / static_cast<double>(micro_batches.size());
    for (Parameter* p : params_)
        for (double& g : p->grad.data()) g *= inv;
    const long next = step_ + 1;
    adam_step(params_, adam_, next, lr_at(next, cfg_), cfg_);
    step_ = next;
    return total * inv;
}

std::vector<TraceEntry> Trainer::run(std::span<const model::TrainingPair> corpus, const RunOutputs& out) {
    if (corpus.empty()) throw DomainError("train: empty corpus");
    std::vector<TraceEntry> trace;
    std::ofstream trace_file;
    if (!out.trace.empty()) {
        trace_file.open(out.trace, std::ios::app);
        if (!trace_file) throw Error("cannot open loss trace " + out.trace.string());
    }
    auto checkpoint = [&] {
        if (!out.checkpoint.empty()) save_checkpoint(snapshot(out.vocabulary), out.checkpoint);
    };

    const std::size_t per_update = static_cast<std::size_t>(cfg_.accumulation) * static_cast<std::size_t>(cfg_.batch_size);
    const std::size_t bucket = static_cast<std::size_t>(cfg_.batch_size) * 8;
    // The sample cursor is a pure function of the step, so resumed runs draw the same data.
    std::size_t cursor = static_cast<std::size_t>(step_) * per_update;
    long cached_epoch = -1;
    std::vector<std::size_t> order;
    auto draw = [&]() -> const model::TrainingPair* {
        const long epoch = static_cast<long>(cursor / corpus.size());
        if (epoch != cached_epoch) {
            order = epoch_order(corpus, cfg_.seed, epoch, bucket);
            cached_epoch = epoch;
        }
        return &corpus[order[cursor++ % corpus.size()]];
    };

    while (step_ < cfg_.max_steps) {
        std::vector<std::vector<const model::TrainingPair*>> micro(static_cast<std::size_t>(cfg_.accumulation));
        for (auto& b : micro)
            for (int i = 0; i < cfg_.batch_size; ++i) b.push_back(draw());
        double loss = 0.0;
        try {
            loss = update(micro);
        } catch (const NumericError& e) {
            throw NumericError("training aborted at step " + std::to_string(step_ + 1) + ": " + e.what() +
                               (out.checkpoint.empty() ? "" : "; last good checkpoint kept at " + out.checkpoint.string()));
        }
        TraceEntry entry{step_, lr_at(step_, cfg_), loss};
        trace.push_back(entry);
        if (trace_file) trace_file << format_trace_line(entry) << '\n' << std::flush;
        if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0 && step_ < cfg_.max_steps) checkpoint();
    }
    checkpoint();
    return trace;
}

Checkpoint Trainer::snapshot(std::vector<std::string> vocabulary) const {
    Checkpoint cp;
    cp.model = model_.config();
    cp.train = cfg_;
    cp.vocabulary = std::move(vocabulary);
    cp.relations = model_.relations().labels();
    cp.relation_capacity = model_.relations().capacity();
    for (const Parameter* p : params_) cp.params.push_back({p->name, p->value});
    cp.adam_m = adam_.m;
    cp.adam_v = adam_.v;
    cp.step = step_;
    std::ostringstream os;
    os << rng_;
    cp.rng_state = os.str();
    return cp;
}

void Trainer::restore(const Checkpoint& cp) {
    if (cp.params.size() != params_.size()) throw CheckpointError("section 'params': parameter count differs from model");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (cp.params[i].name != params_[i]->name || cp.params[i].value.shape() != params_[i]->value.shape())
            throw CheckpointError("section 'params': entry " + cp.params[i].name + " does not match the model");
        params_[i]->value = cp.params[i].value;
        params_[i]->zero_grad();
    }
    if (cp.adam_m.size() != params_.size() || cp.adam_v.size() != params_.size())
        throw CheckpointError("section 'adam': moment count differs from parameter count");
    adam_.m = cp.adam_m;
    adam_.v = cp.adam_v;
    step_ = cp.step;
    std::istringstream is(cp.rng_state);
    is >> rng_;
    if (!is) throw CheckpointError("section 'rng': unreadable generator state");
}

}  // namespace mdsum::train
