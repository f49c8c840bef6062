#pragma once

#include "errors.hpp"
#include "tensor.hpp"

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace actseg {

// A learnable array. Lives outside any tape; tapes stage it as a leaf and
// write gradients back after the backward pass. The Adam moment buffers are
// kept here so checkpoints can capture the full optimizer state.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;

    Parameter() = default;
    Parameter(std::string n, int rows, int cols)
        : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

    void zero_grad() { grad.fill(0.0); }
};

// Handle to a node on a tape.
struct Value {
    int32_t idx = -1;
    bool valid() const { return idx >= 0; }
};

enum class Op : uint8_t {
    leaf,
    matmul,
    add,        // same shape, or rhs is a (n x 1) bias broadcast across columns
    mul,        // elementwise, same shape
    sigmoid,
    tanh_fn,
    scale,      // alpha * x
    wacc,       // acc + p (.) x with p scalar or (1 x cols) row broadcast down columns
    vstack,
    hstack,
    slice_rows,
    slice_col,
    lookup_row, // row of a table, returned as a column vector
    lookup_rows,
    softmax,    // masked softmax over a column vector
    softmax_xent,
};

const char* op_name(Op op);

// Reverse-mode tape. Node ids increase in creation order, which is a valid
// topological order for the backward sweep. One tape per training step;
// construction and backward are single-owner.
class Tape {
public:
    Value constant(Tensor t);
    Value constant_scalar(double x) { return constant(Tensor::scalar(x)); }
    Value zeros(int rows, int cols) { return constant(Tensor(rows, cols)); }
    Value leaf(Tensor t);
    // Stages a parameter (cached: repeated calls return the same node).
    Value param(Parameter& p);

    const Tensor& data(Value v) const { return node(v).data; }
    const Tensor& grad(Value v) const { return node(v).grad; }
    double scalar(Value v) const;

    Value matmul(Value a, Value b);
    Value matvec(Value a, Value x) { return matmul(a, x); }
    Value add(Value a, Value b);
    Value mul(Value a, Value b);
    Value sigmoid(Value a);
    Value tanh(Value a);
    Value scale(Value a, double alpha);
    Value wacc(Value acc, Value p, Value x);
    Value vstack(std::span<const Value> parts);
    Value vstack2(Value a, Value b);
    Value hstack(std::span<const Value> parts);
    Value slice_rows(Value a, int r0, int r1);
    Value slice_col(Value a, int c);
    Value lookup_row(Value table, int row);
    Value lookup_rows(Value table, std::span<const int> rows);
    Value softmax(Value scores, const std::vector<uint8_t>* valid = nullptr);
    Value softmax_xent(Value logits, int target);

    // 1 - x, elementwise.
    Value one_minus(Value a) { return add(scale(a, -1.0), constant_scalar_like(a)); }

    // Accumulates d(loss)/d(node) into every node's grad. Repeated calls
    // without zero_grad() accumulate. loss must be scalar.
    void backward(Value loss);
    void zero_grad();
    // Adds staged leaf gradients into their Parameter::grad buffers.
    void write_param_grads();

    size_t mark() const { return nodes_.size(); }
    void truncate(size_t mark);
    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor data;
        Tensor grad;
        Op op = Op::leaf;
        int32_t a = -1, b = -1, c = -1;
        double alpha = 0.0;
        int32_t i0 = 0, i1 = 0;
        std::vector<int32_t> list;
        std::vector<uint8_t> mask;
    };

    Value constant_scalar_like(Value a);
    Value push(Node n);
    Node& node(Value v);
    const Node& node(Value v) const;
    void backprop_node(int32_t i, std::vector<Tensor>& g);

    std::vector<Node> nodes_;
    std::vector<std::pair<int32_t, Parameter*>> staged_;
    std::unordered_map<const Parameter*, int32_t> staged_lookup_;
};

// Central-difference gradient verification. f(theta, grad_out) returns the
// scalar objective; when grad_out is non-empty it must also write the
// analytic gradient. Returns the max over coordinates of
// |analytic - central| / max(|analytic|, |central|, denom_floor).
//
// denom_floor bounds what the check can resolve: a coordinate whose true
// gradient lies below the finite-difference noise floor (about
// ulp(|f|) / step) yields a quotient of order 1 under any floor smaller
// than that noise, so full-model harnesses raise the floor to the
// magnitude they can actually measure.
struct GradCheckResult {
    double max_rel_err = 0.0;
    int worst_coord = -1;
};

GradCheckResult grad_check(
    const std::function<double(std::span<const double>, std::span<double>)>& f,
    std::span<double> theta, double step, double denom_floor = 1e-12);

} // namespace actseg
