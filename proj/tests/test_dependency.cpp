// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>

#include "mdsum/conllu.hpp"
#include "mdsum/dependency.hpp"
#include "mdsum/errors.hpp"
#include "mdsum/grad_check.hpp"

using namespace mdsum;
using namespace mdsum::dep;

namespace {

const char* kDogsBark =
    "# text = dogs bark\n"
    "1\tdogs\tdog\tNOUN\t_\t_\t2\tnsubj\t_\t_\n"
    "2\tbark\tbark\tVERB\t_\t_\t0\troot\t_\t_\n"
    "\n";

// Random tree: tokens are attached in a shuffled order, each to one already in the tree.
DependencyParse random_parse(std::mt19937_64& rng, int sentences) {
    static const std::vector<std::string> labels{"nsubj", "obj", "amod", "det", "advmod"};
    DependencyParse p;
    for (int s = 0; s < sentences; ++s) {
        const int n = 1 + static_cast<int>(rng() % 7);
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        Sentence sent;
        sent.heads.assign(n, kRootHead);
        sent.relations.assign(n, "root");
        for (int i = 0; i < n; ++i) sent.tokens.push_back("t" + std::to_string(i));
        for (int placed = 1; placed < n; ++placed) {
            const int token = order[placed];
            sent.heads[token] = order[rng() % placed];
            sent.relations[token] = labels[rng() % labels.size()];
        }
        p.sentences.push_back(sent);
    }
    return p;
}

}  // namespace

TEST_CASE("load_conllu examples") {
    const auto parse = load_conllu(kDogsBark);
    REQUIRE(parse.sentences.size() == 1);
    const auto& s = parse.sentences[0];
    CHECK(s.tokens == std::vector<std::string>{"dogs", "bark"});
    CHECK(s.heads == std::vector<int>{1, kRootHead});
    CHECK(s.relations == std::vector<std::string>{"nsubj", "root"});

    CHECK(load_conllu("").sentences.empty());

    try {
        load_conllu("1\tdogs\t_\t_\t_\t_\t0\troot\t_\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 1);
    }
}

TEST_CASE("load_conllu skips multiword ranges and empty nodes") {
    const char* text =
        "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n"
        "1\tdo\t_\t_\t_\t_\t0\troot\t_\t_\n"
        "2\tn't\t_\t_\t_\t_\t1\tadvmod\t_\t_\n"
        "2.1\tx\t_\t_\t_\t_\t_\t_\t_\t_\n"
        "\n"
        "1\tyes\t_\t_\t_\t_\t0\troot\t_\t_\n";
    const auto parse = load_conllu(text);
    REQUIRE(parse.sentences.size() == 2);
    CHECK(parse.sentences[0].size() == 2);
    CHECK(parse.sentences[1].heads == std::vector<int>{kRootHead});
}

TEST_CASE("load_conllu structural errors") {
    CHECK_THROWS_AS(load_conllu("1\ta\t_\t_\t_\t_\t5\troot\t_\t_\n"), StructuralError);
    CHECK_THROWS_AS(load_conllu("1\ta\t_\t_\t_\t_\t2\tdep\t_\t_\n2\tb\t_\t_\t_\t_\t1\tdep\t_\t_\n"), StructuralError);
    CHECK_THROWS_AS(load_conllu("1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n2\tb\t_\t_\t_\t_\t0\troot\t_\t_\n"), StructuralError);
    CHECK_THROWS_AS(load_conllu("1\ta\t_\t_\t_\t_\tx\troot\t_\t_\n"), ParseError);
    CHECK_THROWS_AS(load_conllu("3\ta\t_\t_\t_\t_\t0\troot\t_\t_\n"), ParseError);
}

TEST_CASE("write_conllu round-trips through the reader") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_parse(rng, 3);
        const auto back = load_conllu(write_conllu(p));
        REQUIRE(back.sentences.size() == p.sentences.size());
        for (std::size_t s = 0; s < p.sentences.size(); ++s) {
            CHECK(back.sentences[s].heads == p.sentences[s].heads);
            CHECK(back.sentences[s].relations == p.sentences[s].relations);
        }
    }
}

TEST_CASE("build_relation_vocab ranks by frequency") {
    DependencyParse p;
    Sentence s;
    auto add = [&](const std::string& rel, int n) {
        for (int i = 0; i < n; ++i) {
            s.tokens.push_back("w");
            s.heads.push_back(0);
            s.relations.push_back(rel);
        }
    };
    add("root", 5);
    add("nsubj", 3);
    add("obj", 1);
    p.sentences.push_back(s);
    const DependencyParse corpus[] = {p};

    const auto vocab = build_relation_vocab(corpus, 45);
    CHECK(vocab.index("root") == 0);
    CHECK(vocab.index("nsubj") == 1);
    CHECK(vocab.index("obj") == 2);
    CHECK(vocab.unk() == 3);
    CHECK(vocab.index("xcomp") == vocab.unk());
    CHECK(vocab.capacity() == 45);

    const auto small = build_relation_vocab(corpus, 2);
    CHECK(small.known() == 1);
    CHECK(small.index("root") == 0);
    CHECK(small.index("nsubj") == small.unk());
}

TEST_CASE("build_relation_vocab breaks frequency ties lexicographically") {
    DependencyParse p;
    p.sentences.push_back({{"a", "b", "c"}, {kRootHead, 0, 0}, {"root", "zeta", "alpha"}});
    const DependencyParse corpus[] = {p};
    const auto vocab = build_relation_vocab(corpus);
    CHECK(vocab.labels() == std::vector<std::string>{"alpha", "root", "zeta"});
}

TEST_CASE("build_dep_tensor examples") {
    const auto parse = load_conllu(kDogsBark);
    const DependencyParse corpus[] = {parse};
    const auto vocab = build_relation_vocab(corpus);
    const auto t = build_dep_tensor(parse, vocab);
    CHECK(t.seq_len() == 2);
    CHECK(t.entry_count() == 3);
    CHECK(t.at(0, 1) == vocab.index("nsubj"));
    CHECK(t.at(1, 0) == vocab.index("nsubj"));
    CHECK(t.at(1, 1) == vocab.index("root"));
    CHECK_FALSE(t.at(0, 0).has_value());

    DependencyParse two;
    two.sentences = {parse.sentences[0], parse.sentences[0]};
    const auto t2 = build_dep_tensor(two, vocab);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 2; j < 4; ++j) {
            CHECK_FALSE(t2.at(i, j).has_value());
            CHECK_FALSE(t2.at(j, i).has_value());
        }

    CHECK(build_dep_tensor(DependencyParse{}, vocab).entry_count() == 0);

    const std::size_t bad_offsets[] = {1};
    CHECK_THROWS_AS(build_dep_tensor(parse, vocab, bad_offsets, 2), StructuralError);
}

TEST_CASE("relation tensor is symmetric and its mask sparsity matches the arc count") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        const auto parse = random_parse(rng, 1 + static_cast<int>(rng() % 4));
        const DependencyParse corpus[] = {parse};
        const auto vocab = build_relation_vocab(corpus);
        const auto t = build_dep_tensor(parse, vocab);
        for (const auto& e : t.entries()) CHECK(t.at(e.col, e.row) == e.relation);

        auto params = DepEncoderParams::init(vocab.capacity(), 8, 5 + trial);
        params.b2.value[0] = 0.25;  // keeps every learned weight away from zero
        const auto m = encode_pair_learned(t, params);
        std::size_t nonzero = 0;
        for (double v : m.data()) nonzero += v != 0.0;
        CHECK(nonzero == 2 * parse.arc_count() + parse.sentences.size());

        const auto fixed = encode_pair_fixed(t, build_weight_strategy(MaskStrategy::ArithOccurrence, vocab), vocab);
        nonzero = 0;
        for (double v : fixed.data()) nonzero += v != 0.0;
        CHECK(nonzero == 2 * parse.arc_count() + parse.sentences.size());
    }
}

TEST_CASE("encode_pair_learned examples") {
    DepRelationTensor t(3);
    t.set(0, 1, 0);
    t.set(1, 0, 0);
    t.set(2, 2, 1);

    auto zero = DepEncoderParams::init(2, 1, 1);
    for (auto* p : zero.parameters()) p->value.fill(0.0);
    const auto zero_m = encode_pair_learned(t, zero);
    for (double v : zero_m.data()) CHECK(v == 0.0);

    DepEncoderParams p = DepEncoderParams::init(2, 1, 1);
    p.w1.value = num::Tensor::matrix({{0.5}, {-1.0}});
    p.b1.value = num::Tensor::vector({0.1});
    p.w2.value = num::Tensor::matrix({{2.0}});
    p.b2.value = num::Tensor::vector({0.0});
    const auto m = encode_pair_learned(t, p);
    CHECK(m.at(0, 1) == doctest::Approx(1.2).epsilon(1e-14));
    CHECK(m.at(2, 2) == doctest::Approx(-0.018).epsilon(1e-14));
    CHECK(m.at(0, 0) == 0.0);
    CHECK(m.at(1, 2) == 0.0);

    num::Tape tape;
    const auto on_tape = encode_pair_learned(tape, t, p).value();
    CHECK(num::max_abs_diff(on_tape, m) <= 1e-15);
}

TEST_CASE("encode_pair_learned gradients match finite differences") {
    std::mt19937_64 rng(8);
    const auto parse = random_parse(rng, 3);
    const DependencyParse corpus[] = {parse};
    const auto vocab = build_relation_vocab(corpus, 10);
    const auto t = build_dep_tensor(parse, vocab);
    auto params = DepEncoderParams::init(vocab.capacity(), 4, 77);
    for (double& v : params.b1.value.data()) v = 0.3 * (num::uniform01(rng) - 0.5);
    num::Tensor weights(num::Shape{t.seq_len(), t.seq_len()});
    for (double& v : weights.data()) v = num::uniform01(rng) - 0.5;

    for (auto* target : params.parameters()) {
        const num::Tensor saved = target->value;
        auto report = num::grad_check(
            [&](num::Tape& tape, num::Var x) {
                // Route the probed tensor into the parameter slot on this tape.
                num::Var w1 = target == &params.w1 ? x : tape.param(params.w1);
                num::Var b1 = target == &params.b1 ? x : tape.param(params.b1);
                num::Var w2 = target == &params.w2 ? x : tape.param(params.w2);
                num::Var b2 = target == &params.b2 ? x : tape.param(params.b2);
                num::Var h = num::leaky_relu(num::add(w1, b1), params.slope);
                num::Var scores = num::add(num::matmul(h, w2), b2);
                const auto entries = t.entries();
                return num::sum(num::mul(num::scatter_pairs(scores, entries, t.seq_len()), tape.constant(weights)));
            },
            saved);
        CHECK_MESSAGE(report.passed, target->name << " rel err " << report.max_rel_error);
    }

    // And through the public entry point, parameter by parameter.
    for (auto* target : params.parameters()) {
        target->zero_grad();
    }
    num::Tape tape;
    auto m = encode_pair_learned(tape, t, params);
    tape.backward(num::sum(num::mul(m, tape.constant(weights))));
    double total = 0.0;
    for (auto* target : params.parameters())
        for (double g : target->grad.data()) total += std::abs(g);
    CHECK(total > 0.0);
}

TEST_CASE("one-layer encoder equals the two-layer network with identity activation") {
    std::mt19937_64 rng(21);
    const auto parse = random_parse(rng, 4);
    const DependencyParse corpus[] = {parse};
    const auto vocab = build_relation_vocab(corpus);
    const auto t = build_dep_tensor(parse, vocab);

    auto one = DepEncoderParams::init(vocab.capacity(), 1, 3, true);
    one.b1.value[0] = 0.7;
    // Two-layer twin: W1 shifted so every pre-activation is positive, LeakyReLU is then identity.
    auto two = DepEncoderParams::init(vocab.capacity(), 1, 3);
    const double shift = 10.0;
    two.w1.value = one.w1.value;
    two.b1.value = num::Tensor::vector({one.b1.value[0] + shift});
    two.w2.value = num::Tensor::matrix({{1.0}});
    two.b2.value = num::Tensor::vector({-shift});
    const auto a = encode_pair_learned(t, one);
    const auto b = encode_pair_learned(t, two);
    CHECK(num::max_abs_diff(a, b) <= 1e-12);

    num::Tape tape;
    CHECK(num::max_abs_diff(encode_pair_learned(tape, t, one).value(), a) <= 1e-15);
}

TEST_CASE("encode_pair_fixed examples") {
    const RelationVocab vocab({"root", "nsubj", "obj"}, 45);
    DepRelationTensor t(3);
    t.set(0, 0, vocab.index("root"));
    t.set(0, 1, vocab.index("nsubj"));
    t.set(1, 0, vocab.index("nsubj"));
    t.set(1, 2, vocab.index("obj"));
    t.set(2, 1, vocab.index("obj"));

    const auto occ = build_weight_strategy(MaskStrategy::ArithOccurrence, vocab);
    CHECK(occ.weight_table[0] == 1.0);
    CHECK(occ.weight_table[1] == doctest::Approx(2.0 / 3.0));
    CHECK(occ.weight_table[2] == doctest::Approx(1.0 / 3.0));
    CHECK(occ.weight_table[vocab.unk()] == 0.0);

    const auto root = build_weight_strategy(MaskStrategy::ArithRoot, vocab);
    const auto m = encode_pair_fixed(t, root, vocab);
    CHECK(m.at(0, 0) == 1.0);
    CHECK(m.at(0, 1) == doctest::Approx(2.0 / 3.0));
    CHECK(m.at(2, 2) == 0.0);
    CHECK(m.at(0, 2) == 0.0);

    RelationWeightStrategy broken{MaskStrategy::ArithOccurrence, {1.0}};
    CHECK_THROWS_AS(encode_pair_fixed(t, broken, vocab), ConfigError);
    CHECK_THROWS_AS(build_weight_strategy(MaskStrategy::LearnedOneHot, vocab), ConfigError);
}

TEST_CASE("root and core strategies reorder the sequence") {
    const RelationVocab vocab({"det", "amod", "obj", "root", "nsubj"}, 45);
    const auto root = build_weight_strategy(MaskStrategy::ArithRoot, vocab);
    CHECK(root.weight_table[vocab.index("root")] == 1.0);
    CHECK(root.weight_table[vocab.index("det")] == doctest::Approx(4.0 / 5.0));

    const auto core = build_weight_strategy(MaskStrategy::ArithCore, vocab);
    CHECK(core.weight_table[vocab.index("nsubj")] == 1.0);
    CHECK(core.weight_table[vocab.index("obj")] == doctest::Approx(4.0 / 5.0));
    CHECK(core.weight_table[vocab.index("det")] == doctest::Approx(3.0 / 5.0));
    CHECK(core.weight_table[vocab.index("root")] == doctest::Approx(1.0 / 5.0));
}

TEST_CASE("fixed weights lie on the arithmetic grid") {
    std::mt19937_64 rng(44);
    for (auto kind : {MaskStrategy::ArithOccurrence, MaskStrategy::ArithCore, MaskStrategy::ArithRoot}) {
        const auto parse = random_parse(rng, 5);
        const DependencyParse corpus[] = {parse};
        const auto vocab = build_relation_vocab(corpus);
        const auto strategy = build_weight_strategy(kind, vocab);
        const double n = static_cast<double>(vocab.known());
        std::set<double> seen;
        const auto m = encode_pair_fixed(build_dep_tensor(parse, vocab), strategy, vocab);
        for (double v : m.data()) {
            const double scaled = v * n;
            CHECK(std::abs(scaled - std::round(scaled)) < 1e-9);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        // The table is a bijection from known labels onto {1/N, ..., 1}.
        for (std::size_t i = 0; i < vocab.known(); ++i) seen.insert(std::round(strategy.weight_table[i] * n));
        CHECK(seen.size() == vocab.known());
        CHECK(*seen.begin() == 1.0);
        CHECK(*seen.rbegin() == n);
    }
}

TEST_CASE("stack_heads broadcasts") {
    num::Tensor m(num::Shape{4, 4});
    m.at(2, 3) = 1.2;
    CHECK(stack_heads(m, 1).storage() == m.storage());
    const auto M = stack_heads(m, 4);
    for (std::size_t k = 0; k < 4; ++k) CHECK(M[k * 16 + 2 * 4 + 3] == 1.2);
    for (std::size_t i = 0; i < 16; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) s += M[k * 16 + i];
        CHECK(s == 4.0 * m[i]);
    }
    CHECK_THROWS_AS(stack_heads(m, 0), ConfigError);
}

TEST_CASE("parse statistics") {
    ParseStats stats;
    stats.add(load_conllu(kDogsBark));
    stats.add(load_conllu(kDogsBark));
    CHECK(stats.sentences == 2);
    CHECK(stats.arcs == 2);
    CHECK(stats.relation_counts.at("nsubj") == 2);
    CHECK(stats.arc_histogram.at(1) == 2);
    CHECK(stats.to_text().find("arcs\t2") != std::string::npos);
}
