// SPDX-License-Identifier: Apache-2.0

#include "mdsum/tape.hpp"

#include "mdsum/errors.hpp"

namespace mdsum::num {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Tensor Var::grad() const {
    if (tape_->has_grad(id_)) return tape_->grad(id_);
    return Tensor(shape());
}

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
    if (!value.all_finite()) throw NumericError("non-finite constant of shape " + shape_string(value.shape()));
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    if (!value.all_finite()) throw NumericError("non-finite leaf of shape " + shape_string(value.shape()));
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && grad_enabled_;
    return push(std::move(n));
}

Var Tape::param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    if (!p.value.all_finite()) throw NumericError("parameter " + p.name + " holds non-finite values");
    Node n;
    n.param = &p;
    n.requires_grad = grad_enabled_;
    Var v = push(std::move(n));
    param_nodes_.emplace(&p, v.id());
    return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    if (!value.all_finite()) throw NumericError("op produced non-finite values, shape " + shape_string(value.shape()));
    Node n;
    n.value = std::move(value);
    if (grad_enabled_) {
        for (const Var& in : inputs) {
            if (in.tape_ != this) throw Error("op mixes Vars from different tapes");
            n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
        }
        if (n.requires_grad) n.backward = std::move(backward);
    }
    return push(std::move(n));
}

const Tensor& Tape::value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param ? n.param->value : n.value;
}

Tensor& Tape::grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.param) {
        if (n.param->grad.shape() != n.param->value.shape()) n.param->grad = Tensor(n.param->value.shape());
        return n.param->grad;
    }
    if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

bool Tape::has_grad(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param ? !n.param->grad.empty() : !n.grad.empty();
}

void Tape::backward(Var loss) {
    if (loss.tape_ != this) throw Error("backward on a Var from another tape");
    if (value(loss.id_).size() != 1)
        throw DimensionError("backward needs a scalar loss, got " + shape_string(value(loss.id_).shape()));
    if (!nodes_[loss.id_].requires_grad) return;
    grad(loss.id_)[0] += 1.0;
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
        Node& n = nodes_[i];
        // Op nodes own private grad buffers; an unallocated one was never reached.
        if (n.backward && has_grad(i)) n.backward(*this, i);
    }
}

}  // namespace mdsum::num
