// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations on Tape Vars. Every op checks its shapes, records
// its output on the tape of its inputs and registers a backward rule.
//
// Broadcasting is limited to one form: in add() and mul() the second operand
// may have a shape equal to a suffix of the first operand's shape.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mdsum/tape.hpp"

namespace mdsum::num {

/// Batched contraction a[..,m,k] x b[..,k,n]. A rank-2 operand broadcasts over the other's batch.
Var matmul(Var a, Var b);
/// Swaps the two trailing dimensions.
Var transpose(Var x);

Var add(Var a, Var b);
/// Elementwise (Hadamard) product.
Var mul(Var a, Var b);
Var scale(Var x, double factor);
/// Sum of all elements, as a one-element tensor.
Var sum(Var x);

/// Softmax over the trailing dimension, with max-subtraction.
Var softmax_rows(Var x);
/// Softmax over the trailing dimension restricted to positions where `allowed` is nonzero.
/// `allowed` broadcasts as a shape suffix of x; disallowed positions get probability 0.
Var masked_softmax_rows(Var x, const Tensor& allowed);

Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-6);
Var leaky_relu(Var x, double slope = 0.01);
Var relu(Var x);
/// Inverted dropout with a mask drawn from `rng`. rate == 0 returns x unchanged.
Var dropout(Var x, double rate, std::mt19937_64& rng);

/// Gathers rows of table[V,d] for each id; out is [len(ids), d].
Var embedding(Var table, std::span<const int> ids);

/// [T, h*dk] -> [h, T, dk]
Var split_heads(Var x, std::size_t heads);
/// [h, T, dk] -> [T, h*dk]
Var merge_heads(Var x);
/// Broadcasts a [T,T] matrix to [h,T,T].
Var stack_heads(Var m, std::size_t heads);

struct PairRelation {
    std::size_t row = 0;
    std::size_t col = 0;
    std::size_t relation = 0;
};

/// Builds a [n,n] matrix whose listed entries take scores[relation]; all other entries are 0.
Var scatter_pairs(Var scores, std::span<const PairRelation> pairs, std::size_t n);

/// Mean negative log-softmax over positions whose target differs from pad_id.
Var cross_entropy(Var logits, std::span<const int> targets, int pad_id);

/// Uniform draw in [0,1) from the top 53 bits of one engine output.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace mdsum::num
