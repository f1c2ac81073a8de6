// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "mdsum/encodings.hpp"
#include "mdsum/errors.hpp"

using namespace mdsum;
using namespace mdsum::enc;

TEST_CASE("token positional encoding") {
    CHECK(token_positional_encoding(0, 4) == std::vector<double>{0, 1, 0, 1});
    // 30-digit mpmath evaluation of sin(1), cos(1), sin(0.01), cos(0.01).
    const std::vector<double> expected{0.841470984807896507, 0.540302305868139717, 0.00999983333416666468,
                                       0.999950000416665278};
    const auto pe = token_positional_encoding(1, 4);
    for (std::size_t j = 0; j < 4; ++j) CHECK(pe[j] == doctest::Approx(expected[j]).epsilon(1e-12));
    for (int pos = 0; pos < 500; pos += 7)
        for (double v : token_positional_encoding(pos, 4)) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    CHECK_THROWS_AS(token_positional_encoding(0, 5), ConfigError);
}

TEST_CASE("document positional encoding") {
    CHECK(doc_positional_encoding(1, DocEncodingFunction::sin()) == doctest::Approx(0.841470984807896507));
    CHECK(doc_positional_encoding(3, DocEncodingFunction::linear(10)) == 30.0);
    for (int k : {1, 2, 7, 100}) CHECK(doc_positional_encoding(k, DocEncodingFunction::same_encoding()) == 1.0);
    CHECK(doc_positional_encoding(3, DocEncodingFunction::iter_sin_cos()) == std::sin(3.0));
    CHECK(doc_positional_encoding(4, DocEncodingFunction::iter_sin_cos()) == std::cos(4.0));
    CHECK(doc_positional_encoding(3, DocEncodingFunction::iter_sin_cos_scaled()) == std::sin(0.1 * 3));
    CHECK(doc_positional_encoding(2, DocEncodingFunction::iter_sin_cos_scaled()) == std::cos(0.1 * 2));
    CHECK_THROWS_AS(doc_positional_encoding(0, DocEncodingFunction::sin()), DomainError);
}

TEST_CASE("random document encoding is seeded and in [0,1)") {
    const auto a = DocEncodingFunction::random(17);
    const auto b = DocEncodingFunction::random(17);
    const auto c = DocEncodingFunction::random(18);
    bool any_differs = false;
    for (int k = 1; k <= 10; ++k) {
        CHECK(a(k) == b(k));
        CHECK(a(k) >= 0.0);
        CHECK(a(k) < 1.0);
        any_differs = any_differs || a(k) != c(k);
    }
    CHECK(any_differs);
}

TEST_CASE("parse document encoding names") {
    CHECK(DocEncodingFunction::parse("sin") == DocEncodingFunction::sin());
    CHECK(DocEncodingFunction::parse("y=10x") == DocEncodingFunction::linear(10));
    CHECK(DocEncodingFunction::parse("y=x") == DocEncodingFunction::linear(1));
    CHECK(DocEncodingFunction::parse("linear:2.5").slope() == 2.5);
    CHECK(DocEncodingFunction::parse("random:9") == DocEncodingFunction::random(9));
    for (const auto& fn : {DocEncodingFunction::cos(), DocEncodingFunction::iter_sin_cos(),
                           DocEncodingFunction::iter_sin_cos_scaled(), DocEncodingFunction::same_encoding(),
                           DocEncodingFunction::linear(5), DocEncodingFunction::random(3)})
        CHECK(DocEncodingFunction::parse(fn.name()) == fn);
    CHECK_THROWS_AS(DocEncodingFunction::parse("tan"), ConfigError);
    CHECK_THROWS_AS(DocEncodingFunction::parse("linear:abc"), ConfigError);
}

TEST_CASE("validate_protocol examples") {
    CHECK(validate_protocol(DocEncodingFunction::sin(), 10).pass);

    const auto same = validate_protocol(DocEncodingFunction::same_encoding(), 10);
    CHECK_FALSE(same.pass);
    REQUIRE(same.violations.size() == 1);
    CHECK(same.violations[0].rule == ProtocolRule::Uniqueness);

    const auto ten = validate_protocol(DocEncodingFunction::linear(10), 10);
    CHECK_FALSE(ten.pass);
    CHECK(ten.violates(ProtocolRule::Bounded));
    CHECK(ten.violates(ProtocolRule::Magnitude));
    CHECK_FALSE(ten.violates(ProtocolRule::Uniqueness));
    CHECK(ten.to_text().find("rule: Bounded") != std::string::npos);

    CHECK_THROWS_AS(validate_protocol(DocEncodingFunction::sin(), 1), ConfigError);
}

TEST_CASE("protocol separates the admissible family from the rejected one") {
    for (const auto& fn : {DocEncodingFunction::sin(), DocEncodingFunction::cos(), DocEncodingFunction::iter_sin_cos(),
                           DocEncodingFunction::iter_sin_cos_scaled(), DocEncodingFunction::random(1)})
        CHECK_MESSAGE(validate_protocol(fn, 10).pass, fn.name());
    for (const auto& fn : {DocEncodingFunction::same_encoding(), DocEncodingFunction::linear(1),
                           DocEncodingFunction::linear(2), DocEncodingFunction::linear(5),
                           DocEncodingFunction::linear(10)})
        CHECK_FALSE_MESSAGE(validate_protocol(fn, 10).pass, fn.name());
}

TEST_CASE("sin encodings of up to ten documents are well separated") {
    for (int q = 2; q <= 10; ++q) {
        std::vector<double> v;
        for (int k = 1; k <= q; ++k) v.push_back(std::sin(static_cast<double>(k)));
        std::sort(v.begin(), v.end());
        double gap = 1e9;
        for (std::size_t i = 1; i < v.size(); ++i) gap = std::min(gap, v[i] - v[i - 1]);
        // Enumerated with mpmath: the q=10 minimum gap is 0.06783.
        CHECK(gap > 0.05);
    }
}

TEST_CASE("fuse_positional examples") {
    const std::vector<double> pe{0, 1, 0, 1};
    CHECK(fuse_positional(0.84147, pe, 0.0) == pe);
    const auto fused = fuse_positional(0.84147, pe, 0.1);
    const std::vector<double> expected{0.084147, 1.084147, 0.084147, 1.084147};
    for (std::size_t j = 0; j < 4; ++j) CHECK(fused[j] == doctest::Approx(expected[j]).epsilon(1e-12));
    const auto full = fuse_positional(0.84147, pe, 1.0);
    const std::vector<double> expected_full{0.84147, 1.84147, 0.84147, 1.84147};
    for (std::size_t j = 0; j < 4; ++j) CHECK(full[j] == doctest::Approx(expected_full[j]).epsilon(1e-12));
}

TEST_CASE("fuse_positional is linear in alpha") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> t(8);
        for (double& v : t) v = u(rng);
        const double d = u(rng), a1 = u(rng) + 1, a2 = u(rng) + 1;
        const auto f1 = fuse_positional(d, t, a1), f2 = fuse_positional(d, t, a2), f12 = fuse_positional(d, t, a1 + a2);
        for (std::size_t j = 0; j < t.size(); ++j) CHECK(std::abs(f1[j] + f2[j] - t[j] - f12[j]) <= 1e-12);
    }
}

TEST_CASE("embed_input examples") {
    CHECK(embed_input({1, 2}, {0, 0}) == std::vector<double>{1, 2});
    const auto e = embed_input({1, 2}, {0.1, 0.1});
    CHECK(e[0] == doctest::Approx(1.1));
    CHECK(e[1] == doctest::Approx(2.1));
    const std::vector<double> emb{0.3, -0.2, 0.5, 0.9};
    const auto pe = token_positional_encoding(3, 4);
    const auto via_zero = embed_input(emb, fuse_positional(0.0, pe, 0.1));
    for (std::size_t j = 0; j < 4; ++j) CHECK(via_zero[j] == emb[j] + pe[j]);
    CHECK_THROWS_AS(embed_input({1, 2}, {1}), DimensionError);
}

TEST_CASE("permuting documents permutes their scalars but keeps the multiset") {
    const PositionalPlan plan{DocEncodingFunction::sin(), 0.1, 4};
    const std::vector<int> order{1, 1, 2, 2, 2, 3};
    const std::vector<int> permuted{3, 3, 1, 1, 1, 2};
    std::vector<double> a, b;
    for (int k = 1; k <= 3; ++k) a.push_back(plan.doc_fn(k));
    for (int k : {3, 1, 2}) b.push_back(plan.doc_fn(k));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
    // Token positions are unchanged; only the per-token document shift moves.
    const auto r1 = positional_rows(order, plan), r2 = positional_rows(permuted, plan);
    CHECK(r1.size() == r2.size());
    CHECK(r1[0] - 0.1 * std::sin(1.0) == doctest::Approx(r2[0] - 0.1 * std::sin(3.0)));
}

TEST_CASE("positional plan validation") {
    CHECK_NOTHROW(PositionalPlan{}.validate());
    CHECK_THROWS_AS((PositionalPlan{DocEncodingFunction::sin(), -0.1, 8}.validate()), ConfigError);
    CHECK_THROWS_AS((PositionalPlan{DocEncodingFunction::sin(), 0.1, 7}.validate()), ConfigError);
}
