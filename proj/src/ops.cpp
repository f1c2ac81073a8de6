// SPDX-License-Identifier: Apache-2.0

#include "mdsum/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mdsum/errors.hpp"

namespace mdsum::num {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::string pair_shapes(const Tensor& a, const Tensor& b) {
    return shape_string(a.shape()) + " and " + shape_string(b.shape());
}

// True when `suffix` equals the trailing dimensions of `full`.
bool is_suffix(const Shape& full, const Shape& suffix) {
    if (suffix.size() > full.size()) return false;
    return std::equal(suffix.rbegin(), suffix.rend(), full.rbegin());
}

Shape batch_dims(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

void require_rank_at_least(const Tensor& t, std::size_t r, const char* op) {
    if (t.rank() < r)
        throw DimensionError(std::string(op) + ": expected rank >= " + std::to_string(r) + ", got " +
                             shape_string(t.shape()));
}

}  // namespace

Var matmul(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_rank_at_least(A, 2, "matmul");
    require_rank_at_least(B, 2, "matmul");
    const std::size_t m = A.extent(-2), k = A.extent(-1), k2 = B.extent(-2), n = B.extent(-1);
    if (k != k2) throw DimensionError("matmul: inner extents differ for " + pair_shapes(A, B));

    Shape out_batch;
    if (A.rank() == 2) out_batch = batch_dims(B.shape());
    else if (B.rank() == 2) out_batch = batch_dims(A.shape());
    else if (batch_dims(A.shape()) == batch_dims(B.shape())) out_batch = batch_dims(A.shape());
    else throw DimensionError("matmul: batch extents not broadcastable for " + pair_shapes(A, B));

    const std::size_t batches = shape_volume(out_batch);
    const std::size_t a_stride = A.rank() == 2 ? 0 : m * k;
    const std::size_t b_stride = B.rank() == 2 ? 0 : k * n;

    Shape out_shape = out_batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor C(out_shape);
    for (std::size_t bi = 0; bi < batches; ++bi) {
        MutMap c(C.data().data() + bi * m * n, m, n);
        c.noalias() = ConstMap(A.data().data() + bi * a_stride, m, k) * ConstMap(B.data().data() + bi * b_stride, k, n);
    }

    return a.tape().record(std::move(C), {a, b}, [a, b, m, k, n, batches, a_stride, b_stride](Tape& t, std::size_t out) {
        const Tensor& dC = t.grad(out);
        const Tensor& Av = t.value(a.id());
        const Tensor& Bv = t.value(b.id());
        for (std::size_t bi = 0; bi < batches; ++bi) {
            ConstMap dc(dC.data().data() + bi * m * n, m, n);
            if (t.requires_grad(a.id())) {
                MutMap da(t.grad(a.id()).data().data() + bi * a_stride, m, k);
                da.noalias() += dc * ConstMap(Bv.data().data() + bi * b_stride, k, n).transpose();
            }
            if (t.requires_grad(b.id())) {
                MutMap db(t.grad(b.id()).data().data() + bi * b_stride, k, n);
                db.noalias() += ConstMap(Av.data().data() + bi * a_stride, m, k).transpose() * dc;
            }
        }
    });
}

Var transpose(Var x) {
    const Tensor& X = x.value();
    require_rank_at_least(X, 2, "transpose");
    const std::size_t r = X.extent(-2), c = X.extent(-1);
    const std::size_t batches = X.size() / (r * c);
    Shape out_shape = X.shape();
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
    Tensor Y(out_shape);
    for (std::size_t bi = 0; bi < batches; ++bi)
        MutMap(Y.data().data() + bi * r * c, c, r) = ConstMap(X.data().data() + bi * r * c, r, c).transpose();
    return x.tape().record(std::move(Y), {x}, [x, r, c, batches](Tape& t, std::size_t out) {
        const Tensor& dY = t.grad(out);
        Tensor& dX = t.grad(x.id());
        for (std::size_t bi = 0; bi < batches; ++bi)
            MutMap(dX.data().data() + bi * r * c, r, c) += ConstMap(dY.data().data() + bi * r * c, c, r).transpose();
    });
}

Var add(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (!is_suffix(A.shape(), B.shape()) || B.empty())
        throw DimensionError("add: cannot broadcast " + pair_shapes(A, B));
    const std::size_t inner = B.size();
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i % inner];
    return a.tape().record(std::move(C), {a, b}, [a, b, inner](Tape& t, std::size_t out) {
        const Tensor& dC = t.grad(out);
        if (t.requires_grad(a.id())) {
            Tensor& dA = t.grad(a.id());
            for (std::size_t i = 0; i < dC.size(); ++i) dA[i] += dC[i];
        }
        if (t.requires_grad(b.id())) {
            Tensor& dB = t.grad(b.id());
            for (std::size_t i = 0; i < dC.size(); ++i) dB[i % inner] += dC[i];
        }
    });
}

Var mul(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (!is_suffix(A.shape(), B.shape()) || B.empty())
        throw DimensionError("mul: cannot broadcast " + pair_shapes(A, B));
    const std::size_t inner = B.size();
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C[i] *= B[i % inner];
    return a.tape().record(std::move(C), {a, b}, [a, b, inner](Tape& t, std::size_t out) {
        const Tensor& dC = t.grad(out);
        const Tensor& Av = t.value(a.id());
        const Tensor& Bv = t.value(b.id());
        if (t.requires_grad(a.id())) {
            Tensor& dA = t.grad(a.id());
            for (std::size_t i = 0; i < dC.size(); ++i) dA[i] += dC[i] * Bv[i % inner];
        }
        if (t.requires_grad(b.id())) {
            Tensor& dB = t.grad(b.id());
            for (std::size_t i = 0; i < dC.size(); ++i) dB[i % inner] += dC[i] * Av[i];
        }
    });
}

Var scale(Var x, double factor) {
    Tensor Y = x.value();
    for (double& v : Y.data()) v *= factor;
    return x.tape().record(std::move(Y), {x}, [x, factor](Tape& t, std::size_t out) {
        const Tensor& dY = t.grad(out);
        Tensor& dX = t.grad(x.id());
        for (std::size_t i = 0; i < dY.size(); ++i) dX[i] += factor * dY[i];
    });
}

Var sum(Var x) {
    double total = 0.0;
    for (double v : x.value().data()) total += v;
    return x.tape().record(Tensor::scalar(total), {x}, [x](Tape& t, std::size_t out) {
        const double g = t.grad(out)[0];
        for (double& v : t.grad(x.id()).data()) v += g;
    });
}

namespace {

// Shared softmax kernel; `allowed` may be null (everything allowed).
Var softmax_impl(Var x, const Tensor* allowed) {
    const Tensor& X = x.value();
    if (X.rank() == 0 || X.extent(-1) == 0) throw DimensionError("softmax_rows: empty trailing dimension");
    const std::size_t n = X.extent(-1);
    const std::size_t rows = X.size() / n;
    std::size_t mask_size = 0;
    if (allowed) {
        if (allowed->empty() || !is_suffix(X.shape(), allowed->shape()) || allowed->size() % n != 0)
            throw DimensionError("masked_softmax_rows: mask " + shape_string(allowed->shape()) +
                                 " does not broadcast onto " + shape_string(X.shape()));
        mask_size = allowed->size();
    }
    Tensor Y(X.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = X.data().data() + r * n;
        double* out = Y.data().data() + r * n;
        const double* keep = allowed ? allowed->data().data() + (r * n) % mask_size : nullptr;
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (!keep || keep[j] != 0.0) peak = std::max(peak, in[j]);
        if (!std::isfinite(peak)) throw DimensionError("masked_softmax_rows: row with no allowed position");
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out[j] = (!keep || keep[j] != 0.0) ? std::exp(in[j] - peak) : 0.0;
            total += out[j];
        }
        for (std::size_t j = 0; j < n; ++j) out[j] /= total;
    }
    return x.tape().record(std::move(Y), {x}, [x, n, rows](Tape& t, std::size_t out) {
        const Tensor& dY = t.grad(out);
        const Tensor& Yv = t.value(out);
        Tensor& dX = t.grad(x.id());
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = Yv.data().data() + r * n;
            const double* dy = dY.data().data() + r * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
            double* dx = dX.data().data() + r * n;
            for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
        }
    });
}

}  // namespace

Var softmax_rows(Var x) { return softmax_impl(x, nullptr); }

Var masked_softmax_rows(Var x, const Tensor& allowed) { return softmax_impl(x, &allowed); }

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor& X = x.value();
    const Tensor& G = gain.value();
    const Tensor& Bt = bias.value();
    if (X.rank() == 0) throw DimensionError("layer_norm: scalar input");
    const std::size_t d = X.extent(-1);
    if (d < 2) throw DimensionError("layer_norm: trailing extent must be >= 2, got " + shape_string(X.shape()));
    if (G.shape() != Shape{d} || Bt.shape() != Shape{d})
        throw DimensionError("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                             pair_shapes(G, Bt));
    if (!(eps > 0.0)) throw DomainError("layer_norm: eps must be positive");
    const std::size_t rows = X.size() / d;
    Tensor Y(X.shape());
    Tensor xhat(X.shape());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = X.data().data() + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += in[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (in[j] - mean) * inv_std[r];
            xhat[r * d + j] = h;
            Y[r * d + j] = h * G[j] + Bt[j];
        }
    }
    return x.tape().record(
        std::move(Y), {x, gain, bias},
        [x, gain, bias, d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t out) {
            const Tensor& dY = t.grad(out);
            const Tensor& Gv = t.value(gain.id());
            if (t.requires_grad(gain.id()) || t.requires_grad(bias.id())) {
                const bool want_gain = t.requires_grad(gain.id());
                const bool want_bias = t.requires_grad(bias.id());
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) {
                        if (want_gain) t.grad(gain.id())[j] += dY[r * d + j] * xhat[r * d + j];
                        if (want_bias) t.grad(bias.id())[j] += dY[r * d + j];
                    }
            }
            if (!t.requires_grad(x.id())) return;
            Tensor& dX = t.grad(x.id());
            const double inv_d = 1.0 / static_cast<double>(d);
            for (std::size_t r = 0; r < rows; ++r) {
                double mean_g = 0.0, mean_gx = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double g = dY[r * d + j] * Gv[j];
                    mean_g += g;
                    mean_gx += g * xhat[r * d + j];
                }
                mean_g *= inv_d;
                mean_gx *= inv_d;
                for (std::size_t j = 0; j < d; ++j) {
                    const double g = dY[r * d + j] * Gv[j];
                    dX[r * d + j] += inv_std[r] * (g - mean_g - xhat[r * d + j] * mean_gx);
                }
            }
        });
}

Var leaky_relu(Var x, double slope) {
    if (!(slope > 0.0 && slope < 1.0)) throw DomainError("leaky_relu: slope must lie in (0,1)");
    Tensor Y = x.value();
    for (double& v : Y.data())
        if (v < 0.0) v *= slope;
    return x.tape().record(std::move(Y), {x}, [x, slope](Tape& t, std::size_t out) {
        const Tensor& dY = t.grad(out);
        const Tensor& Xv = t.value(x.id());
        Tensor& dX = t.grad(x.id());
        for (std::size_t i = 0; i < dY.size(); ++i) dX[i] += Xv[i] >= 0.0 ? dY[i] : slope * dY[i];
    });
}

Var relu(Var x) {
    Tensor Y = x.value();
    for (double& v : Y.data()) v = std::max(v, 0.0);
    return x.tape().record(std::move(Y), {x}, [x](Tape& t, std::size_t out) {
        const Tensor& dY = t.grad(out);
        const Tensor& Xv = t.value(x.id());
        Tensor& dX = t.grad(x.id());
        for (std::size_t i = 0; i < dY.size(); ++i)
            if (Xv[i] > 0.0) dX[i] += dY[i];
    });
}

Var dropout(Var x, double rate, std::mt19937_64& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw DomainError("dropout: rate must lie in [0,1)");
    if (rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.value().size());
    for (double& m : mask) m = uniform01(rng) < rate ? 0.0 : keep_scale;
    Tensor Y = x.value();
    for (std::size_t i = 0; i < Y.size(); ++i) Y[i] *= mask[i];
    return x.tape().record(std::move(Y), {x}, [x, mask = std::move(mask)](Tape& t, std::size_t out) {
        const Tensor& dY = t.grad(out);
        Tensor& dX = t.grad(x.id());
        for (std::size_t i = 0; i < dY.size(); ++i) dX[i] += mask[i] * dY[i];
    });
}

Var embedding(Var table, std::span<const int> ids) {
    const Tensor& W = table.value();
    if (W.rank() != 2) throw DimensionError("embedding: table must be rank 2, got " + shape_string(W.shape()));
    const std::size_t vocab = W.extent(0), d = W.extent(1);
    std::vector<int> rows(ids.begin(), ids.end());
    Tensor Y(Shape{rows.size(), d});
    for (std::size_t t = 0; t < rows.size(); ++t) {
        if (rows[t] < 0 || static_cast<std::size_t>(rows[t]) >= vocab)
            throw IndexError("embedding: id " + std::to_string(rows[t]) + " outside [0," + std::to_string(vocab) + ")");
        std::copy_n(W.data().data() + static_cast<std::size_t>(rows[t]) * d, d, Y.data().data() + t * d);
    }
    return table.tape().record(std::move(Y), {table}, [table, d, rows = std::move(rows)](Tape& t, std::size_t out) {
        const Tensor& dY = t.grad(out);
        Tensor& dW = t.grad(table.id());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            double* dst = dW.data().data() + static_cast<std::size_t>(rows[r]) * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += dY[r * d + j];
        }
    });
}

Var split_heads(Var x, std::size_t heads) {
    const Tensor& X = x.value();
    if (X.rank() != 2 || heads == 0 || X.extent(1) % heads != 0)
        throw DimensionError("split_heads: cannot split " + shape_string(X.shape()) + " into " +
                             std::to_string(heads) + " heads");
    const std::size_t T = X.extent(0), d = X.extent(1), dk = d / heads;
    Tensor Y(Shape{heads, T, dk});
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < T; ++t)
            std::copy_n(X.data().data() + t * d + h * dk, dk, Y.data().data() + (h * T + t) * dk);
    return x.tape().record(std::move(Y), {x}, [x, heads, T, d, dk](Tape& t, std::size_t out) {
        const Tensor& dY = t.grad(out);
        Tensor& dX = t.grad(x.id());
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t s = 0; s < T; ++s)
                for (std::size_t j = 0; j < dk; ++j) dX[s * d + h * dk + j] += dY[(h * T + s) * dk + j];
    });
}

Var merge_heads(Var x) {
    const Tensor& X = x.value();
    if (X.rank() != 3) throw DimensionError("merge_heads: expected [h,T,dk], got " + shape_string(X.shape()));
    const std::size_t heads = X.extent(0), T = X.extent(1), dk = X.extent(2), d = heads * dk;
    Tensor Y(Shape{T, d});
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < T; ++t)
            std::copy_n(X.data().data() + (h * T + t) * dk, dk, Y.data().data() + t * d + h * dk);
    return x.tape().record(std::move(Y), {x}, [x, heads, T, d, dk](Tape& t, std::size_t out) {
        const Tensor& dY = t.grad(out);
        Tensor& dX = t.grad(x.id());
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t s = 0; s < T; ++s)
                for (std::size_t j = 0; j < dk; ++j) dX[(h * T + s) * dk + j] += dY[s * d + h * dk + j];
    });
}

Var stack_heads(Var m, std::size_t heads) {
    const Tensor& M = m.value();
    if (M.rank() != 2 || heads == 0)
        throw DimensionError("stack_heads: expected a matrix and h >= 1, got " + shape_string(M.shape()));
    const std::size_t plane = M.size();
    Tensor Y(Shape{heads, M.extent(0), M.extent(1)});
    for (std::size_t h = 0; h < heads; ++h) std::copy_n(M.data().data(), plane, Y.data().data() + h * plane);
    return m.tape().record(std::move(Y), {m}, [m, heads, plane](Tape& t, std::size_t out) {
        const Tensor& dY = t.grad(out);
        Tensor& dM = t.grad(m.id());
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < plane; ++i) dM[i] += dY[h * plane + i];
    });
}

Var scatter_pairs(Var scores, std::span<const PairRelation> pairs, std::size_t n) {
    const Tensor& S = scores.value();
    const std::size_t n_rel = S.size();
    std::vector<PairRelation> entries(pairs.begin(), pairs.end());
    Tensor Y(Shape{n, n});
    for (const auto& p : entries) {
        if (p.row >= n || p.col >= n)
            throw IndexError("scatter_pairs: pair (" + std::to_string(p.row) + "," + std::to_string(p.col) +
                             ") outside " + std::to_string(n) + "x" + std::to_string(n));
        if (p.relation >= n_rel)
            throw IndexError("scatter_pairs: relation " + std::to_string(p.relation) + " outside [0," +
                             std::to_string(n_rel) + ")");
        Y.at(p.row, p.col) = S[p.relation];
    }
    return scores.tape().record(std::move(Y), {scores}, [scores, n, entries = std::move(entries)](Tape& t, std::size_t out) {
        const Tensor& dY = t.grad(out);
        Tensor& dS = t.grad(scores.id());
        for (const auto& p : entries) dS[p.relation] += dY[p.row * n + p.col];
    });
}

Var cross_entropy(Var logits, std::span<const int> targets, int pad_id) {
    const Tensor& L = logits.value();
    if (L.rank() != 2) throw DimensionError("cross_entropy: logits must be [T,V], got " + shape_string(L.shape()));
    const std::size_t T = L.extent(0), V = L.extent(1);
    if (targets.size() != T)
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(T) +
                             " logit rows");
    std::vector<int> tgt(targets.begin(), targets.end());
    std::size_t supervised = 0;
    for (int id : tgt) {
        if (id == pad_id) continue;
        if (id < 0 || static_cast<std::size_t>(id) >= V)
            throw IndexError("cross_entropy: target " + std::to_string(id) + " outside [0," + std::to_string(V) + ")");
        ++supervised;
    }
    if (supervised == 0) throw DomainError("cross_entropy: no supervised positions");

    Tensor probs(Shape{T, V});
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        if (tgt[t] == pad_id) continue;
        const double* row = L.data().data() + t * V;
        const double peak = *std::max_element(row, row + V);
        double z = 0.0;
        for (std::size_t j = 0; j < V; ++j) z += std::exp(row[j] - peak);
        const double log_z = peak + std::log(z);
        total += log_z - row[tgt[t]];
        for (std::size_t j = 0; j < V; ++j) probs[t * V + j] = std::exp(row[j] - log_z);
    }
    const double inv_count = 1.0 / static_cast<double>(supervised);
    return logits.tape().record(
        Tensor::scalar(total * inv_count), {logits},
        [logits, T, V, pad_id, inv_count, tgt = std::move(tgt), probs = std::move(probs)](Tape& t, std::size_t out) {
            const double g = t.grad(out)[0] * inv_count;
            Tensor& dL = t.grad(logits.id());
            for (std::size_t s = 0; s < T; ++s) {
                if (tgt[s] == pad_id) continue;
                for (std::size_t j = 0; j < V; ++j) dL[s * V + j] += g * probs[s * V + j];
                dL[s * V + static_cast<std::size_t>(tgt[s])] -= g;
            }
        });
}

}  // namespace mdsum::num
