// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation tape.
//
// A Tape records every operation applied to its Vars in creation order.
// Calling backward() on a scalar Var replays the recorded backward rules in
// reverse order. Parameters are long-lived leaves owned outside the tape;
// their gradients accumulate into Parameter::grad across backward passes
// until the owner clears them.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <unordered_map>

#include "mdsum/tensor.hpp"

namespace mdsum::num {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
    void zero_grad() { grad = Tensor(value.shape()); }
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
    /// Gradient accumulated by the last backward pass (zeros if unreached).
    Tensor grad() const;

    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    /// Backward rule of one op: reads the output gradient, accumulates into inputs.
    using BackwardFn = std::function<void(Tape&, std::size_t out)>;

    /// With gradients disabled no backward rules are kept and parameters bind as constants.
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const noexcept { return grad_enabled_; }

    Var constant(Tensor value);
    Var leaf(Tensor value, bool requires_grad = true);
    /// Binds a parameter; repeated calls with the same parameter return the same Var.
    Var param(Parameter& p);

    /// Records an op output. `inputs` decide whether the output requires a gradient.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

    /// Seeds d(loss)=1 and replays backward rules in reverse recorded order.
    void backward(Var loss);

    const Tensor& value(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    /// Gradient buffer of a node, allocated (zeroed) on first access.
    Tensor& grad(std::size_t id);
    bool has_grad(std::size_t id) const;

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Parameter* param = nullptr;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;
    };

    Var push(Node node);

    bool grad_enabled_ = true;
    // deque keeps references to existing nodes stable while ops append.
    std::deque<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

}  // namespace mdsum::num
