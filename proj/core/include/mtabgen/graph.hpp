#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mtabgen/tensor.hpp"

namespace mtabgen {

// Trainable tensor with gradient and optimizer state.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor moment1;
    Tensor moment2;
    int64_t step = 0;

    Parameter(std::string n, Tensor init)
        : name(std::move(n)),
          value(std::move(init)),
          grad(Tensor::zeros(value.shape())),
          moment1(Tensor::zeros(value.shape())),
          moment2(Tensor::zeros(value.shape())) {}

    void zero_grad() { grad.fill(0.0); }
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Per-row key validity for padded attention; 1 = real token, 0 = pad.
struct KeyMask {
    size_t batch = 0;
    size_t len = 0;
    std::vector<uint8_t> valid;

    bool is_valid(size_t row, size_t key) const { return valid[row * len + key] != 0; }
};

// Reverse-mode tape. Operations append nodes; the tape order is a topological
// order, so backward() is a single reverse sweep that visits each recorded op
// once. Gradients of bound Parameters accumulate into Parameter::grad.
class Graph {
public:
    using CustomBackward = std::function<void(const Tensor& out_grad,
                                              const std::vector<const Tensor*>& in_values,
                                              const std::vector<Tensor*>& in_grads)>;

    Var constant(Tensor t);
    Var param(Parameter& p);

    // out = x * W + bias, x with any leading shape flattened to rows.
    Var linear(Var x, Var weight, Var bias);
    // Row gather: out[i] = table[codes[i]]. Backward scatter-adds.
    Var embedding(Var table, std::vector<int> codes);
    Var layer_norm(Var x, Var gain, Var shift, double eps = 1e-5);
    Var relu(Var x);
    Var mish(Var x);
    Var softmax_rows(Var x);
    Var add(Var a, Var b);
    // out = c1 * x + c2 elementwise.
    Var affine(Var x, double c1, double c2);
    Var scale(Var x, double c) { return affine(x, c, 0.0); }
    // [b,L,d] + broadcast of [b,d] over L.
    Var add_bias_tokens(Var x, Var per_row);
    // Grouped matmul over leading axis; transpose_b treats B as [g,m,k].
    Var bmm(Var a, Var b, bool transpose_b = false);
    // [b,L,d] -> [b*h, L, d/h] and back.
    Var split_heads(Var x, size_t heads);
    Var merge_heads(Var x, size_t heads);
    // Sets scores of invalid keys to a large negative before softmax.
    Var mask_scores(Var scores, const KeyMask& mask, size_t heads);
    // L tensors [b,d] -> [b,L,d].
    Var stack_tokens(const std::vector<Var>& tokens);
    // [b,L,d] -> [b,d] at token index l.
    Var select_token(Var x, size_t l);
    // Ragged per-row gather of token indices, zero-padded to the max length.
    Var gather_tokens(Var x, const std::vector<std::vector<int>>& row_indices);

    // Escape hatch for domain-specific ops (losses etc.). `value` is the
    // precomputed forward result; `backward` maps the output adjoint onto the
    // inputs (null grad pointer = input does not need a gradient).
    Var custom(const std::string& label, const std::vector<Var>& inputs, Tensor value,
               CustomBackward backward);

    const Tensor& value(Var v) const { return node(v.id).value; }
    double scalar(Var v) const;
    const Tensor& grad_of(Var v) const;
    bool requires_grad(Var v) const { return node(v.id).requires_grad; }

    // Reverse sweep from a scalar loss; accumulates into bound Parameters.
    void backward(Var loss);

    void set_check_finite(bool on) { check_finite_ = on; }
    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool grad_live = false;
        Parameter* bound = nullptr;
        std::string label;
        std::function<void(Graph&)> back;
    };

    Node& node(int id) {
        require(id >= 0 && static_cast<size_t>(id) < nodes_.size(), "Graph: invalid Var");
        return nodes_[static_cast<size_t>(id)];
    }
    const Node& node(int id) const {
        require(id >= 0 && static_cast<size_t>(id) < nodes_.size(), "Graph: invalid Var");
        return nodes_[static_cast<size_t>(id)];
    }

    Var push(Node n, const std::string& label);
    Tensor& ensure_grad(int id);
    void accumulate(int id, const Tensor& g);

    std::vector<Node> nodes_;
    bool check_finite_ = true;
};

}  // namespace mtabgen
