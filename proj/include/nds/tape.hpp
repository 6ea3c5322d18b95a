#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nds/params.hpp"

namespace nds::kern {

// Scalar/vector kernels shared by the tape forward pass and the plain-double
// inference lane. Keeping one definition per op makes the two lanes agree
// bitwise (same operations in the same order).

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline void affine(const double* w, const double* b, const double* x, double* y, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        double acc = b ? b[i] : 0.0;
        const double* wr = w + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) acc += wr[j] * x[j];
        y[i] = acc;
    }
}

}  // namespace nds::kern

namespace nds::ad {

using NodeId = std::int32_t;

enum class Op : std::uint8_t {
    Input,
    Param,
    Constant,
    Add,
    Sub,
    Mul,
    Div,
    Scale,      // y = c * a
    AddScaled,  // y = a + c * b
    Affine,     // y = W a + b       (W, b live in the bound ParamVector)
    Matvec,     // y = W a
    Softplus,
    Relu,
    Tanh,
    Sigmoid,
    Sin,
    Cos,
    Square,
    Sum,
    Concat,
    Slice,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Param: return "param";
        case Op::Constant: return "constant";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Div: return "div";
        case Op::Scale: return "scale";
        case Op::AddScaled: return "add_scaled";
        case Op::Affine: return "affine";
        case Op::Matvec: return "matvec";
        case Op::Softplus: return "softplus";
        case Op::Relu: return "relu";
        case Op::Tanh: return "tanh";
        case Op::Sigmoid: return "sigmoid";
        case Op::Sin: return "sin";
        case Op::Cos: return "cos";
        case Op::Square: return "square";
        case Op::Sum: return "sum";
        case Op::Concat: return "concat";
        case Op::Slice: return "slice";
    }
    return "?";
}

/// Append-only record of vector-valued primitive operations. Values are
/// computed eagerly as nodes are created (define-by-run); backward() replays
/// the record in reverse to produce a vector-Jacobian product over the bound
/// ParamVector. Single-writer, single-reader: one tape per thread.
class Tape {
public:
    Tape() = default;
    explicit Tape(const ParamVector* params) : params_(params) {}

    void bind(const ParamVector* params) { params_ = params; }

    /// Drops all nodes but keeps allocated capacity for reuse.
    void reset() {
        nodes_.clear();
        vals_.clear();
        adj_.clear();
    }

    std::size_t size() const { return nodes_.size(); }
    int length(NodeId id) const { return node(id).len; }

    std::span<const double> value(NodeId id) const {
        const NodeRec& n = node(id);
        return {vals_.data() + n.val_off, static_cast<std::size_t>(n.len)};
    }

    /// Valid after backward(); zero for nodes the seed does not reach.
    std::span<const double> adjoint(NodeId id) const {
        const NodeRec& n = node(id);
        if (adj_.size() != vals_.size()) throw std::logic_error("Tape: adjoint read before backward");
        return {adj_.data() + n.val_off, static_cast<std::size_t>(n.len)};
    }

    // ---- leaves -------------------------------------------------------------

    NodeId input(std::span<const double> v) { return leaf(Op::Input, v); }
    NodeId constant(std::span<const double> v) { return leaf(Op::Constant, v); }
    NodeId constant1(double v) { return leaf(Op::Constant, std::span<const double>(&v, 1)); }

    NodeId param(int offset, int len) {
        if (!params_) throw std::logic_error("Tape: no ParamVector bound");
        if (offset < 0 || offset + len > static_cast<int>(params_->size()))
            throw std::out_of_range("Tape: param slice out of range");
        NodeRec n{};
        n.op = Op::Param;
        n.aux0 = offset;
        NodeId id = push(n, len);
        const double* src = params_->data.data() + offset;
        double* dst = val_ptr(id);
        for (int i = 0; i < len; ++i) dst[i] = src[i];
        check_finite(id);
        return id;
    }

    // ---- elementwise --------------------------------------------------------

    NodeId add(NodeId a, NodeId b) { return binary(Op::Add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return binary(Op::Sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary(Op::Mul, a, b); }
    NodeId div(NodeId a, NodeId b) { return binary(Op::Div, a, b); }

    NodeId scale(NodeId a, double c) {
        NodeRec n{};
        n.op = Op::Scale;
        n.a = a;
        n.c = c;
        NodeId id = push(n, length(a));
        const double* x = val_ptr(a);
        double* y = val_ptr(id);
        for (int i = 0; i < node(id).len; ++i) y[i] = c * x[i];
        check_finite(id);
        return id;
    }

    /// y = a + c * b
    NodeId add_scaled(NodeId a, NodeId b, double c) {
        require_same_len(a, b, "add_scaled");
        NodeRec n{};
        n.op = Op::AddScaled;
        n.a = a;
        n.b = b;
        n.c = c;
        NodeId id = push(n, length(a));
        const double* xa = val_ptr(a);
        const double* xb = val_ptr(b);
        double* y = val_ptr(id);
        for (int i = 0; i < node(id).len; ++i) y[i] = xa[i] + c * xb[i];
        check_finite(id);
        return id;
    }

    NodeId softplus(NodeId a) { return unary(Op::Softplus, a); }
    NodeId relu(NodeId a) { return unary(Op::Relu, a); }
    NodeId tanh(NodeId a) { return unary(Op::Tanh, a); }
    NodeId sigmoid(NodeId a) { return unary(Op::Sigmoid, a); }
    NodeId sin(NodeId a) { return unary(Op::Sin, a); }
    NodeId cos(NodeId a) { return unary(Op::Cos, a); }
    NodeId square(NodeId a) { return unary(Op::Square, a); }

    NodeId sum(NodeId a) {
        NodeRec n{};
        n.op = Op::Sum;
        n.a = a;
        NodeId id = push(n, 1);
        const double* x = val_ptr(a);
        double acc = 0.0;
        for (int i = 0; i < length(a); ++i) acc += x[i];
        *val_ptr(id) = acc;
        check_finite(id);
        return id;
    }

    NodeId concat(NodeId a, NodeId b) {
        NodeRec n{};
        n.op = Op::Concat;
        n.a = a;
        n.b = b;
        const int la = length(a), lb = length(b);
        NodeId id = push(n, la + lb);
        double* y = val_ptr(id);
        const double* xa = val_ptr(a);
        const double* xb = val_ptr(b);
        for (int i = 0; i < la; ++i) y[i] = xa[i];
        for (int i = 0; i < lb; ++i) y[la + i] = xb[i];
        return id;
    }

    NodeId slice(NodeId a, int off, int len) {
        if (off < 0 || len <= 0 || off + len > length(a))
            throw std::out_of_range("Tape: slice out of range");
        NodeRec n{};
        n.op = Op::Slice;
        n.a = a;
        n.aux0 = off;
        NodeId id = push(n, len);
        const double* x = val_ptr(a) + off;
        double* y = val_ptr(id);
        for (int i = 0; i < len; ++i) y[i] = x[i];
        return id;
    }

    // ---- parameterized linear maps ------------------------------------------

    /// y = W x + b with W row-major (rows x len(x)) at w_off and b at b_off.
    NodeId affine(int w_off, int b_off, int rows, NodeId x) {
        if (!params_) throw std::logic_error("Tape: no ParamVector bound");
        const int cols = length(x);
        NodeRec n{};
        n.op = Op::Affine;
        n.a = x;
        n.aux0 = w_off;
        n.aux1 = b_off;
        NodeId id = push(n, rows);
        kern::affine(params_->data.data() + w_off, params_->data.data() + b_off, val_ptr(x),
                     val_ptr(id), rows, cols);
        check_finite(id);
        return id;
    }

    NodeId matvec(int w_off, int rows, NodeId x) {
        if (!params_) throw std::logic_error("Tape: no ParamVector bound");
        const int cols = length(x);
        NodeRec n{};
        n.op = Op::Matvec;
        n.a = x;
        n.aux0 = w_off;
        NodeId id = push(n, rows);
        kern::affine(params_->data.data() + w_off, nullptr, val_ptr(x), val_ptr(id), rows, cols);
        check_finite(id);
        return id;
    }

    // ---- reverse sweep -------------------------------------------------------

    /// Accumulates the vector-Jacobian product seedᵀ·(∂ value(out) / ∂ params)
    /// into grad (which must be params-sized; caller zeroes it). Inputs not on
    /// the tape receive nothing; input-leaf adjoints stay readable afterwards.
    void backward(NodeId out, std::span<const double> seed, std::vector<double>& grad) {
        if (!params_) throw std::logic_error("Tape: no ParamVector bound");
        if (static_cast<int>(seed.size()) != length(out))
            throw std::invalid_argument("Tape: seed length mismatch: got " +
                                        std::to_string(seed.size()) + ", output length " +
                                        std::to_string(length(out)));
        if (grad.size() != params_->size())
            throw std::invalid_argument("Tape: gradient buffer size mismatch");

        adj_.assign(vals_.size(), 0.0);
        {
            double* a = adj_.data() + node(out).val_off;
            for (std::size_t i = 0; i < seed.size(); ++i) a[i] = seed[i];
        }

        const double* params = params_->data.data();
        for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
            const NodeRec& n = nodes_[static_cast<std::size_t>(id)];
            const double* dy = adj_.data() + n.val_off;
            switch (n.op) {
                case Op::Input:
                case Op::Constant:
                    break;
                case Op::Param: {
                    double* g = grad.data() + n.aux0;
                    for (int i = 0; i < n.len; ++i) g[i] += dy[i];
                    break;
                }
                case Op::Add: {
                    double* da = adj_ptr(n.a);
                    double* db = adj_ptr(n.b);
                    for (int i = 0; i < n.len; ++i) {
                        da[i] += dy[i];
                        db[i] += dy[i];
                    }
                    break;
                }
                case Op::Sub: {
                    double* da = adj_ptr(n.a);
                    double* db = adj_ptr(n.b);
                    for (int i = 0; i < n.len; ++i) {
                        da[i] += dy[i];
                        db[i] -= dy[i];
                    }
                    break;
                }
                case Op::Mul: {
                    double* da = adj_ptr(n.a);
                    double* db = adj_ptr(n.b);
                    const double* xa = val_ptr(n.a);
                    const double* xb = val_ptr(n.b);
                    for (int i = 0; i < n.len; ++i) {
                        da[i] += xb[i] * dy[i];
                        db[i] += xa[i] * dy[i];
                    }
                    break;
                }
                case Op::Div: {
                    double* da = adj_ptr(n.a);
                    double* db = adj_ptr(n.b);
                    const double* xb = val_ptr(n.b);
                    const double* y = vals_.data() + n.val_off;
                    for (int i = 0; i < n.len; ++i) {
                        da[i] += dy[i] / xb[i];
                        db[i] -= y[i] / xb[i] * dy[i];
                    }
                    break;
                }
                case Op::Scale: {
                    double* da = adj_ptr(n.a);
                    for (int i = 0; i < n.len; ++i) da[i] += n.c * dy[i];
                    break;
                }
                case Op::AddScaled: {
                    double* da = adj_ptr(n.a);
                    double* db = adj_ptr(n.b);
                    for (int i = 0; i < n.len; ++i) {
                        da[i] += dy[i];
                        db[i] += n.c * dy[i];
                    }
                    break;
                }
                case Op::Affine:
                case Op::Matvec: {
                    const int rows = n.len;
                    const int cols = length(n.a);
                    const double* w = params + n.aux0;
                    const double* x = val_ptr(n.a);
                    double* dx = adj_ptr(n.a);
                    double* gw = grad.data() + n.aux0;
                    for (int i = 0; i < rows; ++i) {
                        const double d = dy[i];
                        if (d == 0.0) continue;
                        const double* wr = w + static_cast<std::size_t>(i) * cols;
                        double* gr = gw + static_cast<std::size_t>(i) * cols;
                        for (int j = 0; j < cols; ++j) {
                            dx[j] += wr[j] * d;
                            gr[j] += x[j] * d;
                        }
                    }
                    if (n.op == Op::Affine) {
                        double* gb = grad.data() + n.aux1;
                        for (int i = 0; i < rows; ++i) gb[i] += dy[i];
                    }
                    break;
                }
                case Op::Softplus: {
                    double* da = adj_ptr(n.a);
                    const double* x = val_ptr(n.a);
                    for (int i = 0; i < n.len; ++i) da[i] += kern::sigmoid(x[i]) * dy[i];
                    break;
                }
                case Op::Relu: {
                    double* da = adj_ptr(n.a);
                    const double* x = val_ptr(n.a);
                    for (int i = 0; i < n.len; ++i)
                        if (x[i] > 0.0) da[i] += dy[i];
                    break;
                }
                case Op::Tanh: {
                    double* da = adj_ptr(n.a);
                    const double* y = vals_.data() + n.val_off;
                    for (int i = 0; i < n.len; ++i) da[i] += (1.0 - y[i] * y[i]) * dy[i];
                    break;
                }
                case Op::Sigmoid: {
                    double* da = adj_ptr(n.a);
                    const double* y = vals_.data() + n.val_off;
                    for (int i = 0; i < n.len; ++i) da[i] += y[i] * (1.0 - y[i]) * dy[i];
                    break;
                }
                case Op::Sin: {
                    double* da = adj_ptr(n.a);
                    const double* x = val_ptr(n.a);
                    for (int i = 0; i < n.len; ++i) da[i] += std::cos(x[i]) * dy[i];
                    break;
                }
                case Op::Cos: {
                    double* da = adj_ptr(n.a);
                    const double* x = val_ptr(n.a);
                    for (int i = 0; i < n.len; ++i) da[i] -= std::sin(x[i]) * dy[i];
                    break;
                }
                case Op::Square: {
                    double* da = adj_ptr(n.a);
                    const double* x = val_ptr(n.a);
                    for (int i = 0; i < n.len; ++i) da[i] += 2.0 * x[i] * dy[i];
                    break;
                }
                case Op::Sum: {
                    double* da = adj_ptr(n.a);
                    const double d = dy[0];
                    for (int i = 0; i < length(n.a); ++i) da[i] += d;
                    break;
                }
                case Op::Concat: {
                    double* da = adj_ptr(n.a);
                    double* db = adj_ptr(n.b);
                    const int la = length(n.a);
                    for (int i = 0; i < la; ++i) da[i] += dy[i];
                    for (int i = 0; i < length(n.b); ++i) db[i] += dy[la + i];
                    break;
                }
                case Op::Slice: {
                    double* da = adj_ptr(n.a) + n.aux0;
                    for (int i = 0; i < n.len; ++i) da[i] += dy[i];
                    break;
                }
            }
        }
    }

    /// Recomputes every non-leaf value from the leaves, in record order.
    /// Replaying an untouched tape reproduces the forward values bitwise.
    void replay() {
        for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id) {
            const NodeRec& n = nodes_[static_cast<std::size_t>(id)];
            double* y = vals_.data() + n.val_off;
            switch (n.op) {
                case Op::Input:
                case Op::Constant:
                    break;
                case Op::Param: {
                    const double* src = params_->data.data() + n.aux0;
                    for (int i = 0; i < n.len; ++i) y[i] = src[i];
                    break;
                }
                case Op::Add: {
                    const double* a = val_ptr(n.a);
                    const double* b = val_ptr(n.b);
                    for (int i = 0; i < n.len; ++i) y[i] = a[i] + b[i];
                    break;
                }
                case Op::Sub: {
                    const double* a = val_ptr(n.a);
                    const double* b = val_ptr(n.b);
                    for (int i = 0; i < n.len; ++i) y[i] = a[i] - b[i];
                    break;
                }
                case Op::Mul: {
                    const double* a = val_ptr(n.a);
                    const double* b = val_ptr(n.b);
                    for (int i = 0; i < n.len; ++i) y[i] = a[i] * b[i];
                    break;
                }
                case Op::Div: {
                    const double* a = val_ptr(n.a);
                    const double* b = val_ptr(n.b);
                    for (int i = 0; i < n.len; ++i) y[i] = a[i] / b[i];
                    break;
                }
                case Op::Scale: {
                    const double* a = val_ptr(n.a);
                    for (int i = 0; i < n.len; ++i) y[i] = n.c * a[i];
                    break;
                }
                case Op::AddScaled: {
                    const double* a = val_ptr(n.a);
                    const double* b = val_ptr(n.b);
                    for (int i = 0; i < n.len; ++i) y[i] = a[i] + n.c * b[i];
                    break;
                }
                case Op::Affine:
                    kern::affine(params_->data.data() + n.aux0, params_->data.data() + n.aux1,
                                 val_ptr(n.a), y, n.len, length(n.a));
                    break;
                case Op::Matvec:
                    kern::affine(params_->data.data() + n.aux0, nullptr, val_ptr(n.a), y, n.len,
                                 length(n.a));
                    break;
                case Op::Softplus: {
                    const double* a = val_ptr(n.a);
                    for (int i = 0; i < n.len; ++i) y[i] = kern::softplus(a[i]);
                    break;
                }
                case Op::Relu: {
                    const double* a = val_ptr(n.a);
                    for (int i = 0; i < n.len; ++i) y[i] = a[i] > 0.0 ? a[i] : 0.0;
                    break;
                }
                case Op::Tanh: {
                    const double* a = val_ptr(n.a);
                    for (int i = 0; i < n.len; ++i) y[i] = std::tanh(a[i]);
                    break;
                }
                case Op::Sigmoid: {
                    const double* a = val_ptr(n.a);
                    for (int i = 0; i < n.len; ++i) y[i] = kern::sigmoid(a[i]);
                    break;
                }
                case Op::Sin: {
                    const double* a = val_ptr(n.a);
                    for (int i = 0; i < n.len; ++i) y[i] = std::sin(a[i]);
                    break;
                }
                case Op::Cos: {
                    const double* a = val_ptr(n.a);
                    for (int i = 0; i < n.len; ++i) y[i] = std::cos(a[i]);
                    break;
                }
                case Op::Square: {
                    const double* a = val_ptr(n.a);
                    for (int i = 0; i < n.len; ++i) y[i] = a[i] * a[i];
                    break;
                }
                case Op::Sum: {
                    const double* a = val_ptr(n.a);
                    double acc = 0.0;
                    for (int i = 0; i < length(n.a); ++i) acc += a[i];
                    y[0] = acc;
                    break;
                }
                case Op::Concat: {
                    const double* a = val_ptr(n.a);
                    const double* b = val_ptr(n.b);
                    const int la = length(n.a);
                    for (int i = 0; i < la; ++i) y[i] = a[i];
                    for (int i = 0; i < length(n.b); ++i) y[la + i] = b[i];
                    break;
                }
                case Op::Slice: {
                    const double* a = val_ptr(n.a) + n.aux0;
                    for (int i = 0; i < n.len; ++i) y[i] = a[i];
                    break;
                }
            }
        }
    }

    std::span<const double> raw_values() const { return vals_; }

private:
    struct NodeRec {
        Op op{};
        NodeId a = -1;
        NodeId b = -1;
        std::int32_t aux0 = 0;  // param offset / slice offset
        std::int32_t aux1 = 0;  // bias offset (affine)
        double c = 0.0;         // literal scalar
        std::int32_t val_off = 0;
        std::int32_t len = 0;
    };

    const NodeRec& node(NodeId id) const {
        if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
            throw std::out_of_range("Tape: bad node id");
        return nodes_[static_cast<std::size_t>(id)];
    }

    double* val_ptr(NodeId id) { return vals_.data() + nodes_[static_cast<std::size_t>(id)].val_off; }
    const double* val_ptr(NodeId id) const {
        return vals_.data() + nodes_[static_cast<std::size_t>(id)].val_off;
    }
    double* adj_ptr(NodeId id) { return adj_.data() + nodes_[static_cast<std::size_t>(id)].val_off; }

    NodeId push(NodeRec n, int len) {
        n.val_off = static_cast<std::int32_t>(vals_.size());
        n.len = len;
        vals_.resize(vals_.size() + static_cast<std::size_t>(len));
        nodes_.push_back(n);
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    NodeId leaf(Op op, std::span<const double> v) {
        NodeRec n{};
        n.op = op;
        NodeId id = push(n, static_cast<int>(v.size()));
        double* dst = val_ptr(id);
        for (std::size_t i = 0; i < v.size(); ++i) dst[i] = v[i];
        check_finite(id);
        return id;
    }

    void require_same_len(NodeId a, NodeId b, const char* what) const {
        if (length(a) != length(b))
            throw std::invalid_argument(std::string("Tape: ") + what + " length mismatch (" +
                                        std::to_string(length(a)) + " vs " +
                                        std::to_string(length(b)) + ")");
    }

    NodeId binary(Op op, NodeId a, NodeId b) {
        require_same_len(a, b, op_name(op));
        NodeRec n{};
        n.op = op;
        n.a = a;
        n.b = b;
        NodeId id = push(n, length(a));
        const double* xa = val_ptr(a);
        const double* xb = val_ptr(b);
        double* y = val_ptr(id);
        const int len = node(id).len;
        switch (op) {
            case Op::Add:
                for (int i = 0; i < len; ++i) y[i] = xa[i] + xb[i];
                break;
            case Op::Sub:
                for (int i = 0; i < len; ++i) y[i] = xa[i] - xb[i];
                break;
            case Op::Mul:
                for (int i = 0; i < len; ++i) y[i] = xa[i] * xb[i];
                break;
            case Op::Div:
                for (int i = 0; i < len; ++i) y[i] = xa[i] / xb[i];
                break;
            default:
                throw std::logic_error("Tape: not a binary op");
        }
        check_finite(id);
        return id;
    }

    NodeId unary(Op op, NodeId a) {
        NodeRec n{};
        n.op = op;
        n.a = a;
        NodeId id = push(n, length(a));
        const double* x = val_ptr(a);
        double* y = val_ptr(id);
        const int len = node(id).len;
        switch (op) {
            case Op::Softplus:
                for (int i = 0; i < len; ++i) y[i] = kern::softplus(x[i]);
                break;
            case Op::Relu:
                for (int i = 0; i < len; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
                break;
            case Op::Tanh:
                for (int i = 0; i < len; ++i) y[i] = std::tanh(x[i]);
                break;
            case Op::Sigmoid:
                for (int i = 0; i < len; ++i) y[i] = kern::sigmoid(x[i]);
                break;
            case Op::Sin:
                for (int i = 0; i < len; ++i) y[i] = std::sin(x[i]);
                break;
            case Op::Cos:
                for (int i = 0; i < len; ++i) y[i] = std::cos(x[i]);
                break;
            case Op::Square:
                for (int i = 0; i < len; ++i) y[i] = x[i] * x[i];
                break;
            default:
                throw std::logic_error("Tape: not a unary op");
        }
        check_finite(id);
        return id;
    }

    void check_finite(NodeId id) const {
        const NodeRec& n = nodes_[static_cast<std::size_t>(id)];
        const double* y = vals_.data() + n.val_off;
        for (int i = 0; i < n.len; ++i) {
            if (!std::isfinite(y[i]))
                throw std::runtime_error("Tape: non-finite value in node " + std::to_string(id) +
                                         " (" + op_name(n.op) + "), lane " + std::to_string(i));
        }
    }

    const ParamVector* params_ = nullptr;
    std::vector<NodeRec> nodes_;
    std::vector<double> vals_;
    std::vector<double> adj_;
};

}  // namespace nds::ad
