#include "tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace actseg {

const char* op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::matmul: return "matmul";
        case Op::add: return "add";
        case Op::mul: return "elementwise-mul";
        case Op::sigmoid: return "sigmoid";
        case Op::tanh_fn: return "tanh";
        case Op::scale: return "scalar-scale";
        case Op::wacc: return "weighted-accumulate";
        case Op::vstack: return "concat";
        case Op::hstack: return "concat";
        case Op::slice_rows: return "slice";
        case Op::slice_col: return "slice";
        case Op::lookup_row: return "lookup";
        case Op::lookup_rows: return "lookup";
        case Op::softmax: return "softmax";
        case Op::softmax_xent: return "softmax-cross-entropy";
    }
    return "?";
}

namespace {

void require_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) {
        throw NumericError(std::string(what) + ": non-finite input data");
    }
}

[[noreturn]] void shape_error(Op op, const Tensor& a, const Tensor& b) {
    throw NumericError(std::string(op_name(op)) + ": shape mismatch " + a.shape_str() +
                       " vs " + b.shape_str());
}

} // namespace

Tape::Node& Tape::node(Value v) { return nodes_[static_cast<size_t>(v.idx)]; }
const Tape::Node& Tape::node(Value v) const { return nodes_[static_cast<size_t>(v.idx)]; }

Value Tape::push(Node n) {
    n.grad = Tensor(n.data.rows, n.data.cols);
    nodes_.push_back(std::move(n));
    return Value{static_cast<int32_t>(nodes_.size() - 1)};
}

Value Tape::constant(Tensor t) {
    require_finite(t, "constant");
    Node n;
    n.data = std::move(t);
    return push(std::move(n));
}

Value Tape::constant_scalar_like(Value a) {
    const Tensor& d = data(a);
    Tensor ones(d.rows, d.cols);
    ones.fill(1.0);
    return constant(std::move(ones));
}

Value Tape::leaf(Tensor t) {
    require_finite(t, "leaf");
    Node n;
    n.data = std::move(t);
    return push(std::move(n));
}

Value Tape::param(Parameter& p) {
    auto it = staged_lookup_.find(&p);
    if (it != staged_lookup_.end()) return Value{it->second};
    require_finite(p.value, p.name.c_str());
    Node n;
    n.data = p.value;
    Value v = push(std::move(n));
    staged_.emplace_back(v.idx, &p);
    staged_lookup_.emplace(&p, v.idx);
    return v;
}

double Tape::scalar(Value v) const {
    const Tensor& d = data(v);
    if (!d.is_scalar()) {
        throw NumericError("scalar read on " + d.shape_str() + " node");
    }
    return d.v[0];
}

Value Tape::matmul(Value a, Value b) {
    const Tensor& A = data(a);
    const Tensor& B = data(b);
    if (A.cols != B.rows) shape_error(Op::matmul, A, B);
    require_finite(A, "matmul");
    require_finite(B, "matmul");
    Node n;
    n.op = Op::matmul;
    n.a = a.idx;
    n.b = b.idx;
    n.data = Tensor(A.rows, B.cols);
    // Column-major outer loop: column j of the result is exactly the matvec
    // A * B[:,j], with the identical accumulation order. Batched lockstep
    // evaluation therefore reproduces per-sequence runs bit for bit.
    for (int j = 0; j < B.cols; ++j) {
        for (int i = 0; i < A.rows; ++i) {
            double acc = 0.0;
            for (int k = 0; k < A.cols; ++k) acc += A.at(i, k) * B.at(k, j);
            n.data.at(i, j) = acc;
        }
    }
    return push(std::move(n));
}

Value Tape::add(Value a, Value b) {
    const Tensor& A = data(a);
    const Tensor& B = data(b);
    const bool bias_broadcast = (B.cols == 1 && A.rows == B.rows && A.cols > 1);
    if (!A.same_shape(B) && !bias_broadcast) shape_error(Op::add, A, B);
    require_finite(A, "add");
    require_finite(B, "add");
    Node n;
    n.op = Op::add;
    n.a = a.idx;
    n.b = b.idx;
    n.data = Tensor(A.rows, A.cols);
    if (bias_broadcast) {
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < A.cols; ++j) n.data.at(i, j) = A.at(i, j) + B.at(i, 0);
    } else {
        for (size_t i = 0; i < A.size(); ++i) n.data.v[i] = A.v[i] + B.v[i];
    }
    return push(std::move(n));
}

Value Tape::mul(Value a, Value b) {
    const Tensor& A = data(a);
    const Tensor& B = data(b);
    if (!A.same_shape(B)) shape_error(Op::mul, A, B);
    require_finite(A, "elementwise-mul");
    require_finite(B, "elementwise-mul");
    Node n;
    n.op = Op::mul;
    n.a = a.idx;
    n.b = b.idx;
    n.data = Tensor(A.rows, A.cols);
    for (size_t i = 0; i < A.size(); ++i) n.data.v[i] = A.v[i] * B.v[i];
    return push(std::move(n));
}

Value Tape::sigmoid(Value a) {
    const Tensor& A = data(a);
    require_finite(A, "sigmoid");
    Node n;
    n.op = Op::sigmoid;
    n.a = a.idx;
    n.data = Tensor(A.rows, A.cols);
    for (size_t i = 0; i < A.size(); ++i) {
        const double x = A.v[i];
        n.data.v[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                               : std::exp(x) / (1.0 + std::exp(x));
    }
    return push(std::move(n));
}

Value Tape::tanh(Value a) {
    const Tensor& A = data(a);
    require_finite(A, "tanh");
    Node n;
    n.op = Op::tanh_fn;
    n.a = a.idx;
    n.data = Tensor(A.rows, A.cols);
    for (size_t i = 0; i < A.size(); ++i) n.data.v[i] = std::tanh(A.v[i]);
    return push(std::move(n));
}

Value Tape::scale(Value a, double alpha) {
    const Tensor& A = data(a);
    require_finite(A, "scalar-scale");
    if (!std::isfinite(alpha)) throw NumericError("scalar-scale: non-finite factor");
    Node n;
    n.op = Op::scale;
    n.a = a.idx;
    n.alpha = alpha;
    n.data = Tensor(A.rows, A.cols);
    for (size_t i = 0; i < A.size(); ++i) n.data.v[i] = alpha * A.v[i];
    return push(std::move(n));
}

Value Tape::wacc(Value acc, Value p, Value x) {
    const Tensor& A = data(acc);
    const Tensor& P = data(p);
    const Tensor& X = data(x);
    if (!A.same_shape(X)) shape_error(Op::wacc, A, X);
    const bool row_weights = (P.rows == 1 && P.cols == X.cols && !P.is_scalar());
    if (!P.is_scalar() && !row_weights) shape_error(Op::wacc, P, X);
    require_finite(A, "weighted-accumulate");
    require_finite(P, "weighted-accumulate");
    require_finite(X, "weighted-accumulate");
    Node n;
    n.op = Op::wacc;
    n.a = acc.idx;
    n.b = p.idx;
    n.c = x.idx;
    n.data = Tensor(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i) {
        for (int j = 0; j < A.cols; ++j) {
            const double w = P.is_scalar() ? P.v[0] : P.at(0, j);
            n.data.at(i, j) = A.at(i, j) + w * X.at(i, j);
        }
    }
    return push(std::move(n));
}

Value Tape::vstack(std::span<const Value> parts) {
    if (parts.empty()) throw NumericError("concat: empty input list");
    int rows = 0;
    const int cols = data(parts[0]).cols;
    for (Value p : parts) {
        const Tensor& t = data(p);
        if (t.cols != cols) shape_error(Op::vstack, data(parts[0]), t);
        require_finite(t, "concat");
        rows += t.rows;
    }
    Node n;
    n.op = Op::vstack;
    n.data = Tensor(rows, cols);
    int r = 0;
    for (Value p : parts) {
        const Tensor& t = data(p);
        n.list.push_back(p.idx);
        for (int i = 0; i < t.rows; ++i)
            for (int j = 0; j < cols; ++j) n.data.at(r + i, j) = t.at(i, j);
        r += t.rows;
    }
    return push(std::move(n));
}

Value Tape::vstack2(Value a, Value b) {
    const Value parts[2] = {a, b};
    return vstack(parts);
}

Value Tape::hstack(std::span<const Value> parts) {
    if (parts.empty()) throw NumericError("concat: empty input list");
    int cols = 0;
    const int rows = data(parts[0]).rows;
    for (Value p : parts) {
        const Tensor& t = data(p);
        if (t.rows != rows) shape_error(Op::hstack, data(parts[0]), t);
        require_finite(t, "concat");
        cols += t.cols;
    }
    Node n;
    n.op = Op::hstack;
    n.data = Tensor(rows, cols);
    int c = 0;
    for (Value p : parts) {
        const Tensor& t = data(p);
        n.list.push_back(p.idx);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < t.cols; ++j) n.data.at(i, c + j) = t.at(i, j);
        c += t.cols;
    }
    return push(std::move(n));
}

Value Tape::slice_rows(Value a, int r0, int r1) {
    const Tensor& A = data(a);
    if (r0 < 0 || r1 > A.rows || r0 >= r1) {
        throw NumericError("slice: row range [" + std::to_string(r0) + "," +
                           std::to_string(r1) + ") out of bounds for " + A.shape_str());
    }
    require_finite(A, "slice");
    Node n;
    n.op = Op::slice_rows;
    n.a = a.idx;
    n.i0 = r0;
    n.i1 = r1;
    n.data = Tensor(r1 - r0, A.cols);
    for (int i = r0; i < r1; ++i)
        for (int j = 0; j < A.cols; ++j) n.data.at(i - r0, j) = A.at(i, j);
    return push(std::move(n));
}

Value Tape::slice_col(Value a, int c) {
    const Tensor& A = data(a);
    if (c < 0 || c >= A.cols) {
        throw NumericError("slice: column " + std::to_string(c) + " out of bounds for " +
                           A.shape_str());
    }
    require_finite(A, "slice");
    Node n;
    n.op = Op::slice_col;
    n.a = a.idx;
    n.i0 = c;
    n.data = Tensor(A.rows, 1);
    for (int i = 0; i < A.rows; ++i) n.data.at(i, 0) = A.at(i, c);
    return push(std::move(n));
}

Value Tape::lookup_row(Value table, int row) {
    const Tensor& T = data(table);
    if (row < 0 || row >= T.rows) {
        throw DataError("lookup: row " + std::to_string(row) + " out of range for " +
                        T.shape_str() + " table");
    }
    Node n;
    n.op = Op::lookup_row;
    n.a = table.idx;
    n.i0 = row;
    n.data = Tensor(T.cols, 1);
    for (int j = 0; j < T.cols; ++j) n.data.at(j, 0) = T.at(row, j);
    return push(std::move(n));
}

Value Tape::lookup_rows(Value table, std::span<const int> rows) {
    const Tensor& T = data(table);
    Node n;
    n.op = Op::lookup_rows;
    n.a = table.idx;
    n.data = Tensor(T.cols, static_cast<int>(rows.size()));
    n.list.reserve(rows.size());
    for (size_t k = 0; k < rows.size(); ++k) {
        const int row = rows[k];
        if (row < 0 || row >= T.rows) {
            throw DataError("lookup: row " + std::to_string(row) + " out of range for " +
                            T.shape_str() + " table");
        }
        n.list.push_back(row);
        for (int j = 0; j < T.cols; ++j) n.data.at(j, static_cast<int>(k)) = T.at(row, j);
    }
    return push(std::move(n));
}

Value Tape::softmax(Value scores, const std::vector<uint8_t>* valid) {
    const Tensor& S = data(scores);
    if (S.cols != 1) throw NumericError("softmax: expected column vector, got " + S.shape_str());
    if (valid && static_cast<int>(valid->size()) != S.rows) {
        throw NumericError("softmax: mask length mismatch");
    }
    require_finite(S, "softmax");
    Node n;
    n.op = Op::softmax;
    n.a = scores.idx;
    n.mask.assign(static_cast<size_t>(S.rows), 1);
    if (valid) n.mask = *valid;
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < S.rows; ++i)
        if (n.mask[i]) mx = std::max(mx, S.at(i, 0));
    if (!std::isfinite(mx)) throw NumericError("softmax: all positions masked");
    n.data = Tensor(S.rows, 1);
    double z = 0.0;
    for (int i = 0; i < S.rows; ++i) {
        if (!n.mask[i]) continue;
        n.data.at(i, 0) = std::exp(S.at(i, 0) - mx);
        z += n.data.at(i, 0);
    }
    for (int i = 0; i < S.rows; ++i)
        if (n.mask[i]) n.data.at(i, 0) /= z;
    return push(std::move(n));
}

Value Tape::softmax_xent(Value logits, int target) {
    const Tensor& L = data(logits);
    if (L.cols != 1) {
        throw NumericError("softmax-cross-entropy: expected column vector, got " + L.shape_str());
    }
    if (target < 0 || target >= L.rows) {
        throw NumericError("softmax-cross-entropy: target " + std::to_string(target) +
                           " out of range for " + L.shape_str());
    }
    require_finite(L, "softmax-cross-entropy");
    Node n;
    n.op = Op::softmax_xent;
    n.a = logits.idx;
    n.i0 = target;
    double mx = L.v[0];
    for (int i = 1; i < L.rows; ++i) mx = std::max(mx, L.at(i, 0));
    double z = 0.0;
    for (int i = 0; i < L.rows; ++i) z += std::exp(L.at(i, 0) - mx);
    n.data = Tensor::scalar(mx + std::log(z) - L.at(target, 0));
    return push(std::move(n));
}

void Tape::backprop_node(int32_t i, std::vector<Tensor>& g) {
    Node& n = nodes_[static_cast<size_t>(i)];
    const Tensor& gi = g[static_cast<size_t>(i)];
    switch (n.op) {
        case Op::leaf:
            break;
        case Op::matmul: {
            const Tensor& A = nodes_[n.a].data;
            const Tensor& B = nodes_[n.b].data;
            Tensor& ga = g[n.a];
            Tensor& gb = g[n.b];
            // dA = gi * B^T ; dB = A^T * gi
            for (int r = 0; r < A.rows; ++r)
                for (int k = 0; k < A.cols; ++k) {
                    double acc = 0.0;
                    for (int j = 0; j < B.cols; ++j) acc += gi.at(r, j) * B.at(k, j);
                    ga.at(r, k) += acc;
                }
            for (int k = 0; k < B.rows; ++k)
                for (int j = 0; j < B.cols; ++j) {
                    double acc = 0.0;
                    for (int r = 0; r < A.rows; ++r) acc += A.at(r, k) * gi.at(r, j);
                    gb.at(k, j) += acc;
                }
            break;
        }
        case Op::add: {
            Tensor& ga = g[n.a];
            Tensor& gb = g[n.b];
            for (size_t k = 0; k < gi.size(); ++k) ga.v[k] += gi.v[k];
            if (gb.same_shape(gi)) {
                for (size_t k = 0; k < gi.size(); ++k) gb.v[k] += gi.v[k];
            } else { // bias broadcast: sum over columns
                for (int r = 0; r < gi.rows; ++r)
                    for (int c = 0; c < gi.cols; ++c) gb.at(r, 0) += gi.at(r, c);
            }
            break;
        }
        case Op::mul: {
            const Tensor& A = nodes_[n.a].data;
            const Tensor& B = nodes_[n.b].data;
            for (size_t k = 0; k < gi.size(); ++k) {
                g[n.a].v[k] += gi.v[k] * B.v[k];
                g[n.b].v[k] += gi.v[k] * A.v[k];
            }
            break;
        }
        case Op::sigmoid: {
            for (size_t k = 0; k < gi.size(); ++k) {
                const double y = n.data.v[k];
                g[n.a].v[k] += gi.v[k] * y * (1.0 - y);
            }
            break;
        }
        case Op::tanh_fn: {
            for (size_t k = 0; k < gi.size(); ++k) {
                const double y = n.data.v[k];
                g[n.a].v[k] += gi.v[k] * (1.0 - y * y);
            }
            break;
        }
        case Op::scale: {
            for (size_t k = 0; k < gi.size(); ++k) g[n.a].v[k] += gi.v[k] * n.alpha;
            break;
        }
        case Op::wacc: {
            const Tensor& P = nodes_[n.b].data;
            const Tensor& X = nodes_[n.c].data;
            Tensor& gacc = g[n.a];
            Tensor& gp = g[n.b];
            Tensor& gx = g[n.c];
            for (size_t k = 0; k < gi.size(); ++k) gacc.v[k] += gi.v[k];
            if (P.is_scalar()) {
                double acc = 0.0;
                for (size_t k = 0; k < gi.size(); ++k) {
                    acc += gi.v[k] * X.v[k];
                    gx.v[k] += gi.v[k] * P.v[0];
                }
                gp.v[0] += acc;
            } else {
                for (int c = 0; c < X.cols; ++c) {
                    double acc = 0.0;
                    for (int r = 0; r < X.rows; ++r) {
                        acc += gi.at(r, c) * X.at(r, c);
                        gx.at(r, c) += gi.at(r, c) * P.at(0, c);
                    }
                    gp.at(0, c) += acc;
                }
            }
            break;
        }
        case Op::vstack: {
            int r = 0;
            for (int32_t pid : n.list) {
                Tensor& gp = g[pid];
                for (int i2 = 0; i2 < gp.rows; ++i2)
                    for (int j = 0; j < gp.cols; ++j) gp.at(i2, j) += gi.at(r + i2, j);
                r += gp.rows;
            }
            break;
        }
        case Op::hstack: {
            int c = 0;
            for (int32_t pid : n.list) {
                Tensor& gp = g[pid];
                for (int i2 = 0; i2 < gp.rows; ++i2)
                    for (int j = 0; j < gp.cols; ++j) gp.at(i2, j) += gi.at(i2, c + j);
                c += gp.cols;
            }
            break;
        }
        case Op::slice_rows: {
            Tensor& gp = g[n.a];
            for (int i2 = 0; i2 < gi.rows; ++i2)
                for (int j = 0; j < gi.cols; ++j) gp.at(n.i0 + i2, j) += gi.at(i2, j);
            break;
        }
        case Op::slice_col: {
            Tensor& gp = g[n.a];
            for (int i2 = 0; i2 < gi.rows; ++i2) gp.at(i2, n.i0) += gi.at(i2, 0);
            break;
        }
        case Op::lookup_row: {
            Tensor& gp = g[n.a];
            for (int j = 0; j < gi.rows; ++j) gp.at(n.i0, j) += gi.at(j, 0);
            break;
        }
        case Op::lookup_rows: {
            Tensor& gp = g[n.a];
            for (size_t k = 0; k < n.list.size(); ++k)
                for (int j = 0; j < gi.rows; ++j)
                    gp.at(n.list[k], j) += gi.at(j, static_cast<int>(k));
            break;
        }
        case Op::softmax: {
            const Tensor& y = n.data;
            Tensor& gp = g[n.a];
            double dot = 0.0;
            for (int r = 0; r < y.rows; ++r)
                if (n.mask[r]) dot += gi.at(r, 0) * y.at(r, 0);
            for (int r = 0; r < y.rows; ++r)
                if (n.mask[r]) gp.at(r, 0) += y.at(r, 0) * (gi.at(r, 0) - dot);
            break;
        }
        case Op::softmax_xent: {
            const Tensor& L = nodes_[n.a].data;
            Tensor& gp = g[n.a];
            double mx = L.v[0];
            for (int r = 1; r < L.rows; ++r) mx = std::max(mx, L.at(r, 0));
            double z = 0.0;
            for (int r = 0; r < L.rows; ++r) z += std::exp(L.at(r, 0) - mx);
            const double go = gi.v[0];
            for (int r = 0; r < L.rows; ++r) {
                const double p = std::exp(L.at(r, 0) - mx) / z;
                gp.at(r, 0) += go * (p - (r == n.i0 ? 1.0 : 0.0));
            }
            break;
        }
    }
}

void Tape::backward(Value loss) {
    if (!loss.valid()) throw NumericError("backward: invalid loss handle");
    const Node& ln = node(loss);
    if (!ln.data.is_scalar()) {
        throw NumericError("backward: loss must be scalar, got " + ln.data.shape_str());
    }
    std::vector<Tensor> g(nodes_.size());
    for (size_t i = 0; i < nodes_.size(); ++i) g[i] = Tensor(nodes_[i].data.rows, nodes_[i].data.cols);
    g[static_cast<size_t>(loss.idx)].v[0] = 1.0;
    for (int32_t i = loss.idx; i >= 0; --i) backprop_node(i, g);
    for (size_t i = 0; i < nodes_.size(); ++i) {
        Tensor& acc = nodes_[i].grad;
        for (size_t k = 0; k < acc.size(); ++k) acc.v[k] += g[i].v[k];
    }
}

void Tape::zero_grad() {
    for (Node& n : nodes_) n.grad.fill(0.0);
}

void Tape::write_param_grads() {
    for (auto& [idx, p] : staged_) {
        const Tensor& g = nodes_[static_cast<size_t>(idx)].grad;
        if (!p->grad.same_shape(p->value)) p->grad = Tensor(p->value.rows, p->value.cols);
        for (size_t k = 0; k < g.size(); ++k) p->grad.v[k] += g.v[k];
    }
}

void Tape::truncate(size_t mark) {
    if (mark > nodes_.size()) return;
    nodes_.resize(mark);
    std::erase_if(staged_, [&](const auto& e) {
        return static_cast<size_t>(e.first) >= mark;
    });
    std::erase_if(staged_lookup_, [&](const auto& e) {
        return static_cast<size_t>(e.second) >= mark;
    });
}

GradCheckResult grad_check(
    const std::function<double(std::span<const double>, std::span<double>)>& f,
    std::span<double> theta, double step, double denom_floor) {
    if (!(step > 0.0)) throw NumericError("grad_check: step must be positive");
    std::vector<double> analytic(theta.size(), 0.0);
    const double base = f(theta, analytic);
    if (!std::isfinite(base)) throw NumericError("grad_check: non-finite objective at base point");
    GradCheckResult res;
    for (size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta[i];
        theta[i] = saved + step;
        const double fp = f(theta, {});
        theta[i] = saved - step;
        const double fm = f(theta, {});
        theta[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("grad_check: non-finite objective at coordinate " +
                               std::to_string(i));
        }
        const double numeric = (fp - fm) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), denom_floor});
        const double rel = std::abs(analytic[i] - numeric) / denom;
        if (rel > res.max_rel_err) {
            res.max_rel_err = rel;
            res.worst_coord = static_cast<int>(i);
        }
    }
    return res;
}

} // namespace actseg
