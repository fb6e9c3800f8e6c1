// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Recorded-tape computation engine over NdArray with reverse-mode gradients.
// Ops evaluate eagerly as they are recorded; backward() walks the finished
// tape once in reverse. Determinism contract: every reduction accumulates
// sequentially over the leading index, so identical graphs produce identical
// bits. scatter_add_rows accumulates in the order given; permuting its
// (index, row) pairs reproduces the result within 1e-12 (reassociation only),
// not bitwise.
//
// Broadcasting for add/sub/mul/div is deliberately narrow: the RIGHT operand
// may be a scalar (one element) or a vector matching the left operand's last
// axis. Everything else is a shape error.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "himap/nd.hpp"
#include "himap/rng.hpp"

namespace himap {

using NodeId = int;

enum class Op : std::uint8_t {
    Input, Param,
    Matmul, Add, Sub, Mul, Div,
    Concat, Slice, Reshape,
    Sigmoid, Tanh, Relu, Softplus, Exp, Log, Abs, Sin, Cos, Scale,
    Softmax, LayerNorm, Sum, Mean,
    GatherRows, ScatterAddRows,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Param: return "param";
        case Op::Matmul: return "matmul";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "elemwise-mul";
        case Op::Div: return "elemwise-div";
        case Op::Concat: return "concat";
        case Op::Slice: return "slice";
        case Op::Reshape: return "reshape";
        case Op::Sigmoid: return "sigmoid";
        case Op::Tanh: return "tanh";
        case Op::Relu: return "relu";
        case Op::Softplus: return "softplus";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Abs: return "abs";
        case Op::Sin: return "sin";
        case Op::Cos: return "cos";
        case Op::Scale: return "scale";
        case Op::Softmax: return "softmax";
        case Op::LayerNorm: return "layer-norm";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::GatherRows: return "gather-rows";
        case Op::ScatterAddRows: return "scatter-add-rows";
    }
    return "?";
}

// Normalization epsilon for layer-norm; fixed and documented here because
// test vectors depend on it.
inline constexpr double kLayerNormEps = 1e-5;

struct ParamStore {
    struct Entry {
        std::string name;
        NdArray value;
        bool trainable = true;
    };
    std::vector<Entry> entries;
    std::unordered_map<std::string, int> index;

    NdArray& add(const std::string& name, NdArray value, bool trainable = true) {
        if (index.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
        index.emplace(name, static_cast<int>(entries.size()));
        entries.push_back({name, std::move(value), trainable});
        return entries.back().value;
    }
    bool contains(const std::string& name) const { return index.count(name) != 0; }
    Entry& at(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
        return entries[static_cast<std::size_t>(it->second)];
    }
    const Entry& at(const std::string& name) const {
        return const_cast<ParamStore*>(this)->at(name);
    }
    std::size_t total_trainable_size() const {
        std::size_t n = 0;
        for (const auto& e : entries)
            if (e.trainable) n += e.value.numel();
        return n;
    }
};

// Gradients aligned with ParamStore entry order; zero arrays for trainable
// parameters the loss never reached.
struct GradientMap {
    std::vector<NdArray> grads;
    const NdArray& at(const ParamStore& store, const std::string& name) const {
        return grads[static_cast<std::size_t>(store.index.at(name))];
    }
};

namespace detail {

struct AxisView {
    std::size_t outer, n, inner;
};

inline AxisView axis_view(const Shape& s, int axis) {
    AxisView v{1, 1, 1};
    if (axis < 0 || static_cast<std::size_t>(axis) >= s.size())
        throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    for (int i = 0; i < axis; ++i) v.outer *= s[static_cast<std::size_t>(i)];
    v.n = s[static_cast<std::size_t>(axis)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) v.inner *= s[i];
    return v;
}

enum class Bcast { None, Scalar, LastAxis };

}  // namespace detail

class Graph {
public:
    struct Node {
        Op op;
        NdArray value;
        std::vector<NodeId> inputs;
        bool needs_grad = false;
        // op attributes
        int axis = -1;
        std::size_t start = 0, stop = 0;
        double factor = 0.0;
        std::vector<int> indices;
        Shape shape_attr;
        std::string pname;  // Param only
    };

    // When set, every recorded op verifies its output is finite and reports
    // the offending node on failure (used by grad_check).
    bool check_finite = false;

    std::size_t size() const { return nodes_.size(); }
    const NdArray& val(NodeId id) const { return nodes_[check_id(id)].value; }
    const Node& node(NodeId id) const { return nodes_[check_id(id)]; }

    NodeId input(NdArray v) { return push(Op::Input, std::move(v), {}, false); }

    NodeId param(const std::string& name, NdArray v) {
        NodeId id = push(Op::Param, std::move(v), {}, true);
        nodes_[static_cast<std::size_t>(id)].pname = name;
        return id;
    }

    NodeId matmul(NodeId a, NodeId b) {
        const NdArray& A = val(a);
        const NdArray& B = val(b);
        if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0])
            fail("matmul", "expects [m,k]x[k,n]", A, B);
        NdArray C({A.shape[0], B.shape[1]});
        matmul_acc(A, B, C, false, false);
        return push(Op::Matmul, std::move(C), {a, b});
    }

    NodeId add(NodeId a, NodeId b) { return binary(Op::Add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return binary(Op::Sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary(Op::Mul, a, b); }
    NodeId div(NodeId a, NodeId b) { return binary(Op::Div, a, b); }

    NodeId concat(const std::vector<NodeId>& parts, int axis) {
        if (parts.empty()) throw std::invalid_argument("concat: no inputs");
        const NdArray& first = val(parts[0]);
        Shape out_shape = first.shape;
        if (axis < 0 || static_cast<std::size_t>(axis) >= out_shape.size())
            throw std::invalid_argument("concat: axis " + std::to_string(axis) + " out of range for " +
                                        shape_str(out_shape));
        for (std::size_t i = 1; i < parts.size(); ++i) {
            const NdArray& p = val(parts[i]);
            if (p.rank() != first.rank()) fail("concat", "rank mismatch", first, p);
            for (std::size_t d = 0; d < p.rank(); ++d)
                if (d != static_cast<std::size_t>(axis) && p.shape[d] != out_shape[d])
                    fail("concat", "non-axis dims differ", first, p);
            out_shape[static_cast<std::size_t>(axis)] += p.shape[static_cast<std::size_t>(axis)];
        }
        NdArray out(out_shape);
        auto ov = detail::axis_view(out_shape, axis);
        std::size_t offset = 0;
        for (NodeId pid : parts) {
            const NdArray& p = val(pid);
            auto pv = detail::axis_view(p.shape, axis);
            for (std::size_t o = 0; o < pv.outer; ++o)
                std::copy_n(p.v.data() + o * pv.n * pv.inner, pv.n * pv.inner,
                            out.v.data() + (o * ov.n + offset) * ov.inner);
            offset += pv.n;
        }
        NodeId id = push(Op::Concat, std::move(out), parts);
        nodes_[static_cast<std::size_t>(id)].axis = axis;
        return id;
    }

    NodeId slice(NodeId a, int axis, std::size_t start, std::size_t stop) {
        const NdArray& A = val(a);
        auto av = detail::axis_view(A.shape, axis);
        if (start > stop || stop > av.n)
            throw std::invalid_argument(std::string("slice: range [") + std::to_string(start) + "," +
                                        std::to_string(stop) + ") invalid for axis of size " +
                                        std::to_string(av.n) + " in " + shape_str(A.shape));
        Shape out_shape = A.shape;
        out_shape[static_cast<std::size_t>(axis)] = stop - start;
        NdArray out(out_shape);
        for (std::size_t o = 0; o < av.outer; ++o)
            std::copy_n(A.v.data() + (o * av.n + start) * av.inner, (stop - start) * av.inner,
                        out.v.data() + o * (stop - start) * av.inner);
        NodeId id = push(Op::Slice, std::move(out), {a});
        auto& n = nodes_[static_cast<std::size_t>(id)];
        n.axis = axis;
        n.start = start;
        n.stop = stop;
        return id;
    }

    NodeId reshape(NodeId a, Shape new_shape) {
        const NdArray& A = val(a);
        if (shape_numel(new_shape) != A.numel())
            throw std::invalid_argument(std::string("reshape: ") + shape_str(A.shape) + " (" +
                                        std::to_string(A.numel()) + " values) cannot become " +
                                        shape_str(new_shape));
        NdArray out(new_shape, A.v);
        NodeId id = push(Op::Reshape, std::move(out), {a});
        nodes_[static_cast<std::size_t>(id)].shape_attr = std::move(new_shape);
        return id;
    }

    NodeId sigmoid(NodeId a) {
        return unary(Op::Sigmoid, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    }
    NodeId tanh(NodeId a) {
        return unary(Op::Tanh, a, [](double x) { return std::tanh(x); });
    }
    NodeId relu(NodeId a) {
        return unary(Op::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; });
    }
    NodeId softplus(NodeId a) {
        return unary(Op::Softplus, a, [](double x) {
            return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        });
    }
    NodeId exp(NodeId a) {
        return unary(Op::Exp, a, [](double x) { return std::exp(x); });
    }
    NodeId log(NodeId a) {
        return unary(Op::Log, a, [](double x) { return std::log(x); });
    }
    NodeId abs(NodeId a) {
        return unary(Op::Abs, a, [](double x) { return std::abs(x); });
    }
    NodeId sin(NodeId a) {
        return unary(Op::Sin, a, [](double x) { return std::sin(x); });
    }
    NodeId cos(NodeId a) {
        return unary(Op::Cos, a, [](double x) { return std::cos(x); });
    }

    NodeId scale(NodeId a, double factor) {
        NdArray out = val(a);
        for (double& x : out.v) x *= factor;
        NodeId id = push(Op::Scale, std::move(out), {a});
        nodes_[static_cast<std::size_t>(id)].factor = factor;
        return id;
    }

    NodeId softmax(NodeId a, int axis) {
        const NdArray& A = val(a);
        auto av = detail::axis_view(A.shape, axis);
        NdArray out(A.shape);
        for (std::size_t o = 0; o < av.outer; ++o)
            for (std::size_t i = 0; i < av.inner; ++i) {
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < av.n; ++j)
                    mx = std::max(mx, A.v[(o * av.n + j) * av.inner + i]);
                double denom = 0.0;
                for (std::size_t j = 0; j < av.n; ++j) {
                    double e = std::exp(A.v[(o * av.n + j) * av.inner + i] - mx);
                    out.v[(o * av.n + j) * av.inner + i] = e;
                    denom += e;
                }
                for (std::size_t j = 0; j < av.n; ++j)
                    out.v[(o * av.n + j) * av.inner + i] /= denom;
            }
        NodeId id = push(Op::Softmax, std::move(out), {a});
        nodes_[static_cast<std::size_t>(id)].axis = axis;
        return id;
    }

    NodeId layer_norm(NodeId a, int axis) {
        const NdArray& A = val(a);
        auto av = detail::axis_view(A.shape, axis);
        if (av.n == 0) throw std::invalid_argument("layer-norm: empty axis in " + shape_str(A.shape));
        NdArray out(A.shape);
        for (std::size_t o = 0; o < av.outer; ++o)
            for (std::size_t i = 0; i < av.inner; ++i) {
                double mean = 0.0;
                for (std::size_t j = 0; j < av.n; ++j) mean += A.v[(o * av.n + j) * av.inner + i];
                mean /= static_cast<double>(av.n);
                double var = 0.0;
                for (std::size_t j = 0; j < av.n; ++j) {
                    double d = A.v[(o * av.n + j) * av.inner + i] - mean;
                    var += d * d;
                }
                var /= static_cast<double>(av.n);
                double inv = 1.0 / std::sqrt(var + kLayerNormEps);
                for (std::size_t j = 0; j < av.n; ++j)
                    out.v[(o * av.n + j) * av.inner + i] =
                        (A.v[(o * av.n + j) * av.inner + i] - mean) * inv;
            }
        NodeId id = push(Op::LayerNorm, std::move(out), {a});
        nodes_[static_cast<std::size_t>(id)].axis = axis;
        return id;
    }

    // sum/mean over one axis; axis = -1 reduces everything to a scalar.
    NodeId sum(NodeId a, int axis = -1) { return reduce(Op::Sum, a, axis); }
    NodeId mean(NodeId a, int axis = -1) { return reduce(Op::Mean, a, axis); }

    NodeId gather_rows(NodeId a, std::vector<int> idx) {
        const NdArray& A = val(a);
        if (A.rank() < 1) throw std::invalid_argument("gather-rows: scalar input");
        std::size_t width = A.numel() / (A.shape[0] ? A.shape[0] : 1);
        for (int r : idx)
            if (r < 0 || static_cast<std::size_t>(r) >= A.shape[0])
                throw std::invalid_argument("gather-rows: index " + std::to_string(r) +
                                            " out of range for " + shape_str(A.shape));
        Shape out_shape = A.shape;
        out_shape[0] = idx.size();
        NdArray out(out_shape);
        for (std::size_t e = 0; e < idx.size(); ++e)
            std::copy_n(A.v.data() + static_cast<std::size_t>(idx[e]) * width, width,
                        out.v.data() + e * width);
        NodeId id = push(Op::GatherRows, std::move(out), {a});
        nodes_[static_cast<std::size_t>(id)].indices = std::move(idx);
        return id;
    }

    // out[idx[e]] += a[e], accumulated for e = 0,1,2,... in the order given.
    NodeId scatter_add_rows(NodeId a, std::vector<int> idx, std::size_t n_rows) {
        const NdArray& A = val(a);
        if (A.rank() < 1) throw std::invalid_argument("scatter-add-rows: scalar input");
        if (idx.size() != A.shape[0])
            throw std::invalid_argument("scatter-add-rows: " + std::to_string(idx.size()) +
                                        " indices for " + shape_str(A.shape));
        std::size_t width = A.shape[0] ? A.numel() / A.shape[0] : shape_numel(Shape(A.shape.begin() + 1, A.shape.end()));
        for (int r : idx)
            if (r < 0 || static_cast<std::size_t>(r) >= n_rows)
                throw std::invalid_argument("scatter-add-rows: index " + std::to_string(r) +
                                            " out of range for " + std::to_string(n_rows) + " rows");
        Shape out_shape = A.shape;
        out_shape[0] = n_rows;
        NdArray out(out_shape);
        for (std::size_t e = 0; e < idx.size(); ++e)
            for (std::size_t k = 0; k < width; ++k)
                out.v[static_cast<std::size_t>(idx[e]) * width + k] += A.v[e * width + k];
        NodeId id = push(Op::ScatterAddRows, std::move(out), {a});
        nodes_[static_cast<std::size_t>(id)].indices = std::move(idx);
        return id;
    }

    // Reverse pass from a scalar loss. Returns gradients for every trainable
    // entry of `store`; entries the loss does not reach get zeros.
    GradientMap backward(NodeId loss, const ParamStore& store) const {
        const NdArray& L = val(loss);
        if (L.numel() != 1)
            throw std::invalid_argument(std::string("backward: loss must be a scalar, got ") +
                                        shape_str(L.shape));
        GradientMap gm;
        gm.grads.reserve(store.entries.size());
        for (const auto& e : store.entries) gm.grads.push_back(NdArray::zeros(e.value.shape));

        std::vector<NdArray> adj(static_cast<std::size_t>(loss) + 1);
        std::vector<char> has(static_cast<std::size_t>(loss) + 1, 0);
        adj[static_cast<std::size_t>(loss)] = NdArray::full(L.shape, 1.0);
        has[static_cast<std::size_t>(loss)] = 1;

        for (NodeId id = loss; id >= 0; --id) {
            const Node& n = nodes_[static_cast<std::size_t>(id)];
            if (!has[static_cast<std::size_t>(id)] || !n.needs_grad) continue;
            const NdArray& d = adj[static_cast<std::size_t>(id)];
            if (n.op == Op::Param) {
                auto it = store.index.find(n.pname);
                if (it == store.index.end())
                    throw std::logic_error("backward: param node '" + n.pname + "' not in store");
                NdArray& g = gm.grads[static_cast<std::size_t>(it->second)];
                for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += d.v[i];
                continue;
            }
            backprop_node(n, d, adj, has);
        }
        return gm;
    }

private:
    std::vector<Node> nodes_;

    std::size_t check_id(NodeId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
            throw std::out_of_range("bad node id " + std::to_string(id));
        return static_cast<std::size_t>(id);
    }

    [[noreturn]] void fail(const char* op, const char* why, const NdArray& a, const NdArray& b) const {
        throw std::invalid_argument(std::string(op) + ": " + why + " (lhs " + shape_str(a.shape) +
                                    ", rhs " + shape_str(b.shape) + ")");
    }

    NodeId push(Op op, NdArray value, std::vector<NodeId> inputs, bool leaf_grad = false) {
        bool needs = leaf_grad;
        for (NodeId in : inputs) needs = needs || nodes_[check_id(in)].needs_grad;
        if (check_finite)
            for (double x : value.v)
                if (!std::isfinite(x))
                    throw std::runtime_error(std::string("non-finite value in node #") +
                                             std::to_string(nodes_.size()) + " (" + op_name(op) + ")");
        Node n;
        n.op = op;
        n.value = std::move(value);
        n.inputs = std::move(inputs);
        n.needs_grad = needs;
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    template <typename F>
    NodeId unary(Op op, NodeId a, F f) {
        NdArray out = val(a);
        for (double& x : out.v) x = f(x);
        return push(op, std::move(out), {a});
    }

    detail::Bcast resolve_bcast(const char* op, const NdArray& a, const NdArray& b) const {
        if (a.same_shape(b)) return detail::Bcast::None;
        if (b.numel() == 1) return detail::Bcast::Scalar;
        if (b.rank() == 1 && a.rank() >= 1 && !a.shape.empty() && b.shape[0] == a.shape.back())
            return detail::Bcast::LastAxis;
        fail(op, "incompatible shapes (rhs may be scalar or match lhs last axis)", a, b);
    }

    NodeId binary(Op op, NodeId a, NodeId b) {
        const NdArray& A = val(a);
        const NdArray& B = val(b);
        detail::Bcast bc = resolve_bcast(op_name(op), A, B);
        NdArray out(A.shape);
        std::size_t last = A.shape.empty() ? 1 : A.shape.back();
        for (std::size_t i = 0; i < A.numel(); ++i) {
            double rhs = bc == detail::Bcast::None ? B.v[i]
                       : bc == detail::Bcast::Scalar ? B.v[0]
                                                     : B.v[i % last];
            double lhs = A.v[i];
            switch (op) {
                case Op::Add: out.v[i] = lhs + rhs; break;
                case Op::Sub: out.v[i] = lhs - rhs; break;
                case Op::Mul: out.v[i] = lhs * rhs; break;
                case Op::Div: out.v[i] = lhs / rhs; break;
                default: throw std::logic_error("binary: bad op");
            }
        }
        return push(op, std::move(out), {a, b});
    }

    NodeId reduce(Op op, NodeId a, int axis) {
        const NdArray& A = val(a);
        NdArray out;
        if (axis < 0) {
            double acc = 0.0;
            for (double x : A.v) acc += x;
            if (op == Op::Mean) {
                if (A.numel() == 0) throw std::invalid_argument("mean: empty array");
                acc /= static_cast<double>(A.numel());
            }
            out = NdArray::scalar(acc);
        } else {
            auto av = detail::axis_view(A.shape, axis);
            if (op == Op::Mean && av.n == 0) throw std::invalid_argument("mean: empty axis");
            Shape out_shape;
            for (std::size_t d = 0; d < A.rank(); ++d)
                if (d != static_cast<std::size_t>(axis)) out_shape.push_back(A.shape[d]);
            out = NdArray(out_shape);
            for (std::size_t o = 0; o < av.outer; ++o)
                for (std::size_t i = 0; i < av.inner; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < av.n; ++j)
                        acc += A.v[(o * av.n + j) * av.inner + i];
                    if (op == Op::Mean) acc /= static_cast<double>(av.n);
                    out.v[o * av.inner + i] = acc;
                }
        }
        NodeId id = push(op, std::move(out), {a});
        nodes_[static_cast<std::size_t>(id)].axis = axis;
        return id;
    }

    static void matmul_acc(const NdArray& A, const NdArray& B, NdArray& C, bool at, bool bt) {
        // C += opA(A) * opB(B), where opX transposes when the flag is set.
        std::size_t m = at ? A.shape[1] : A.shape[0];
        std::size_t k = at ? A.shape[0] : A.shape[1];
        std::size_t n = bt ? B.shape[0] : B.shape[1];
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                double av = at ? A.v[p * m + i] : A.v[i * k + p];
                if (av == 0.0) continue;
                const double* brow;
                if (!bt) {
                    brow = B.v.data() + p * n;
                    double* crow = C.v.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
                } else {
                    double* crow = C.v.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) crow[j] += av * B.v[j * k + p];
                }
            }
    }

    void accum(std::vector<NdArray>& adj, std::vector<char>& has, NodeId id, NdArray&& delta) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad) return;
        if (!has[static_cast<std::size_t>(id)]) {
            adj[static_cast<std::size_t>(id)] = std::move(delta);
            has[static_cast<std::size_t>(id)] = 1;
        } else {
            NdArray& a = adj[static_cast<std::size_t>(id)];
            for (std::size_t i = 0; i < a.numel(); ++i) a.v[i] += delta.v[i];
        }
    }

    // Reduce an adjoint of `full` shape back onto a broadcast rhs operand.
    NdArray reduce_bcast(const NdArray& d, const NdArray& rhs, detail::Bcast bc) const {
        if (bc == detail::Bcast::None) return d;
        NdArray out(rhs.shape);
        if (bc == detail::Bcast::Scalar) {
            double acc = 0.0;
            for (double x : d.v) acc += x;
            out.v[0] = acc;
        } else {
            std::size_t last = rhs.shape[0];
            for (std::size_t i = 0; i < d.numel(); ++i) out.v[i % last] += d.v[i];
        }
        return out;
    }

    void backprop_node(const Node& n, const NdArray& d, std::vector<NdArray>& adj,
                       std::vector<char>& has) const {
        switch (n.op) {
            case Op::Input:
            case Op::Param:
                break;
            case Op::Matmul: {
                const NdArray& A = val(n.inputs[0]);
                const NdArray& B = val(n.inputs[1]);
                if (nodes_[check_id(n.inputs[0])].needs_grad) {
                    NdArray dA(A.shape);
                    matmul_acc(d, B, dA, false, true);  // dA = d * B^T
                    accum(adj, has, n.inputs[0], std::move(dA));
                }
                if (nodes_[check_id(n.inputs[1])].needs_grad) {
                    NdArray dB(B.shape);
                    matmul_acc(A, d, dB, true, false);  // dB = A^T * d
                    accum(adj, has, n.inputs[1], std::move(dB));
                }
                break;
            }
            case Op::Add:
            case Op::Sub:
            case Op::Mul:
            case Op::Div: {
                const NdArray& A = val(n.inputs[0]);
                const NdArray& B = val(n.inputs[1]);
                detail::Bcast bc = A.same_shape(B)   ? detail::Bcast::None
                                   : B.numel() == 1  ? detail::Bcast::Scalar
                                                     : detail::Bcast::LastAxis;
                std::size_t last = A.shape.empty() ? 1 : A.shape.back();
                auto rhs_at = [&](std::size_t i) {
                    return bc == detail::Bcast::None ? B.v[i]
                           : bc == detail::Bcast::Scalar ? B.v[0]
                                                         : B.v[i % last];
                };
                if (nodes_[check_id(n.inputs[0])].needs_grad) {
                    NdArray dA(A.shape);
                    for (std::size_t i = 0; i < A.numel(); ++i) {
                        switch (n.op) {
                            case Op::Add: dA.v[i] = d.v[i]; break;
                            case Op::Sub: dA.v[i] = d.v[i]; break;
                            case Op::Mul: dA.v[i] = d.v[i] * rhs_at(i); break;
                            case Op::Div: dA.v[i] = d.v[i] / rhs_at(i); break;
                            default: break;
                        }
                    }
                    accum(adj, has, n.inputs[0], std::move(dA));
                }
                if (nodes_[check_id(n.inputs[1])].needs_grad) {
                    NdArray full(A.shape);
                    for (std::size_t i = 0; i < A.numel(); ++i) {
                        switch (n.op) {
                            case Op::Add: full.v[i] = d.v[i]; break;
                            case Op::Sub: full.v[i] = -d.v[i]; break;
                            case Op::Mul: full.v[i] = d.v[i] * A.v[i]; break;
                            case Op::Div: {
                                double b = rhs_at(i);
                                full.v[i] = -d.v[i] * A.v[i] / (b * b);
                                break;
                            }
                            default: break;
                        }
                    }
                    accum(adj, has, n.inputs[1], reduce_bcast(full, B, bc));
                }
                break;
            }
            case Op::Concat: {
                auto ov = detail::axis_view(n.value.shape, n.axis);
                std::size_t offset = 0;
                for (NodeId pid : n.inputs) {
                    const NdArray& p = val(pid);
                    auto pv = detail::axis_view(p.shape, n.axis);
                    if (nodes_[check_id(pid)].needs_grad) {
                        NdArray dp(p.shape);
                        for (std::size_t o = 0; o < pv.outer; ++o)
                            std::copy_n(d.v.data() + (o * ov.n + offset) * ov.inner,
                                        pv.n * pv.inner, dp.v.data() + o * pv.n * pv.inner);
                        accum(adj, has, pid, std::move(dp));
                    }
                    offset += pv.n;
                }
                break;
            }
            case Op::Slice: {
                const NdArray& A = val(n.inputs[0]);
                auto av = detail::axis_view(A.shape, n.axis);
                NdArray dA(A.shape);
                std::size_t w = n.stop - n.start;
                for (std::size_t o = 0; o < av.outer; ++o)
                    std::copy_n(d.v.data() + o * w * av.inner, w * av.inner,
                                dA.v.data() + (o * av.n + n.start) * av.inner);
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
            case Op::Reshape: {
                const NdArray& A = val(n.inputs[0]);
                accum(adj, has, n.inputs[0], NdArray(A.shape, d.v));
                break;
            }
            case Op::Sigmoid: {
                NdArray dA(n.value.shape);
                for (std::size_t i = 0; i < dA.numel(); ++i) {
                    double s = n.value.v[i];
                    dA.v[i] = d.v[i] * s * (1.0 - s);
                }
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
            case Op::Tanh: {
                NdArray dA(n.value.shape);
                for (std::size_t i = 0; i < dA.numel(); ++i) {
                    double t = n.value.v[i];
                    dA.v[i] = d.v[i] * (1.0 - t * t);
                }
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
            case Op::Relu: {
                const NdArray& A = val(n.inputs[0]);
                NdArray dA(A.shape);
                for (std::size_t i = 0; i < dA.numel(); ++i)
                    dA.v[i] = A.v[i] > 0.0 ? d.v[i] : 0.0;
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
            case Op::Softplus: {
                const NdArray& A = val(n.inputs[0]);
                NdArray dA(A.shape);
                for (std::size_t i = 0; i < dA.numel(); ++i)
                    dA.v[i] = d.v[i] / (1.0 + std::exp(-A.v[i]));
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
            case Op::Exp: {
                NdArray dA(n.value.shape);
                for (std::size_t i = 0; i < dA.numel(); ++i) dA.v[i] = d.v[i] * n.value.v[i];
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
            case Op::Log: {
                const NdArray& A = val(n.inputs[0]);
                NdArray dA(A.shape);
                for (std::size_t i = 0; i < dA.numel(); ++i) dA.v[i] = d.v[i] / A.v[i];
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
            case Op::Abs: {
                const NdArray& A = val(n.inputs[0]);
                NdArray dA(A.shape);
                for (std::size_t i = 0; i < dA.numel(); ++i)
                    dA.v[i] = A.v[i] > 0.0 ? d.v[i] : (A.v[i] < 0.0 ? -d.v[i] : 0.0);
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
            case Op::Sin: {
                const NdArray& A = val(n.inputs[0]);
                NdArray dA(A.shape);
                for (std::size_t i = 0; i < dA.numel(); ++i) dA.v[i] = d.v[i] * std::cos(A.v[i]);
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
            case Op::Cos: {
                const NdArray& A = val(n.inputs[0]);
                NdArray dA(A.shape);
                for (std::size_t i = 0; i < dA.numel(); ++i) dA.v[i] = -d.v[i] * std::sin(A.v[i]);
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
            case Op::Scale: {
                NdArray dA(n.value.shape);
                for (std::size_t i = 0; i < dA.numel(); ++i) dA.v[i] = d.v[i] * n.factor;
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
            case Op::Softmax: {
                auto av = detail::axis_view(n.value.shape, n.axis);
                NdArray dA(n.value.shape);
                for (std::size_t o = 0; o < av.outer; ++o)
                    for (std::size_t i = 0; i < av.inner; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < av.n; ++j) {
                            std::size_t p = (o * av.n + j) * av.inner + i;
                            dot += d.v[p] * n.value.v[p];
                        }
                        for (std::size_t j = 0; j < av.n; ++j) {
                            std::size_t p = (o * av.n + j) * av.inner + i;
                            dA.v[p] = n.value.v[p] * (d.v[p] - dot);
                        }
                    }
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
            case Op::LayerNorm: {
                const NdArray& A = val(n.inputs[0]);
                auto av = detail::axis_view(A.shape, n.axis);
                NdArray dA(A.shape);
                for (std::size_t o = 0; o < av.outer; ++o)
                    for (std::size_t i = 0; i < av.inner; ++i) {
                        double mean = 0.0, var = 0.0;
                        for (std::size_t j = 0; j < av.n; ++j)
                            mean += A.v[(o * av.n + j) * av.inner + i];
                        mean /= static_cast<double>(av.n);
                        for (std::size_t j = 0; j < av.n; ++j) {
                            double dd = A.v[(o * av.n + j) * av.inner + i] - mean;
                            var += dd * dd;
                        }
                        var /= static_cast<double>(av.n);
                        double inv = 1.0 / std::sqrt(var + kLayerNormEps);
                        double mdy = 0.0, mdyy = 0.0;
                        for (std::size_t j = 0; j < av.n; ++j) {
                            std::size_t p = (o * av.n + j) * av.inner + i;
                            mdy += d.v[p];
                            mdyy += d.v[p] * n.value.v[p];
                        }
                        mdy /= static_cast<double>(av.n);
                        mdyy /= static_cast<double>(av.n);
                        for (std::size_t j = 0; j < av.n; ++j) {
                            std::size_t p = (o * av.n + j) * av.inner + i;
                            dA.v[p] = inv * (d.v[p] - mdy - n.value.v[p] * mdyy);
                        }
                    }
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
            case Op::Sum:
            case Op::Mean: {
                const NdArray& A = val(n.inputs[0]);
                NdArray dA(A.shape);
                if (n.axis < 0) {
                    double g = d.v[0];
                    if (n.op == Op::Mean) g /= static_cast<double>(A.numel());
                    for (double& x : dA.v) x = g;
                } else {
                    auto av = detail::axis_view(A.shape, n.axis);
                    double inv = n.op == Op::Mean ? 1.0 / static_cast<double>(av.n) : 1.0;
                    for (std::size_t o = 0; o < av.outer; ++o)
                        for (std::size_t i = 0; i < av.inner; ++i) {
                            double g = d.v[o * av.inner + i] * inv;
                            for (std::size_t j = 0; j < av.n; ++j)
                                dA.v[(o * av.n + j) * av.inner + i] = g;
                        }
                }
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
            case Op::GatherRows: {
                const NdArray& A = val(n.inputs[0]);
                std::size_t width = A.shape[0] ? A.numel() / A.shape[0] : 0;
                NdArray dA(A.shape);
                for (std::size_t e = 0; e < n.indices.size(); ++e)
                    for (std::size_t k = 0; k < width; ++k)
                        dA.v[static_cast<std::size_t>(n.indices[e]) * width + k] +=
                            d.v[e * width + k];
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
            case Op::ScatterAddRows: {
                const NdArray& A = val(n.inputs[0]);
                std::size_t width = A.shape[0] ? A.numel() / A.shape[0] : 0;
                NdArray dA(A.shape);
                for (std::size_t e = 0; e < n.indices.size(); ++e)
                    for (std::size_t k = 0; k < width; ++k)
                        dA.v[e * width + k] = d.v[static_cast<std::size_t>(n.indices[e]) * width + k];
                accum(adj, has, n.inputs[0], std::move(dA));
                break;
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

struct GradCheckOpts {
    double eps = 1e-5;
    // < 0 checks every component; otherwise a seeded sample of this many
    // components per parameter array (every array is still visited).
    int max_components_per_param = -1;
    std::uint64_t sample_seed = 0;
};

// Relative error |analytic - central| / max(1, |central|), maximized over all
// checked components of all inputs. The builder must be deterministic.
inline double grad_check(const std::function<NodeId(Graph&, const std::vector<NodeId>&)>& build,
                         const std::vector<NdArray>& inputs, GradCheckOpts opts = {}) {
    ParamStore store;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        store.add("x" + std::to_string(i), inputs[i]);

    auto eval = [&](const ParamStore& s) {
        Graph g;
        g.check_finite = true;
        std::vector<NodeId> ids;
        ids.reserve(s.entries.size());
        for (const auto& e : s.entries) ids.push_back(g.param(e.name, e.value));
        NodeId loss = build(g, ids);
        if (g.val(loss).numel() != 1)
            throw std::invalid_argument("grad_check: builder must return a scalar");
        return std::pair<double, NodeId>(g.val(loss).v[0], loss);
    };

    // analytic
    Graph g;
    g.check_finite = true;
    std::vector<NodeId> ids;
    for (const auto& e : store.entries) ids.push_back(g.param(e.name, e.value));
    NodeId loss = build(g, ids);
    GradientMap gm = g.backward(loss, store);

    double worst = 0.0;
    ParamStore probe = store;
    for (std::size_t pi = 0; pi < store.entries.size(); ++pi) {
        std::size_t n = store.entries[pi].value.numel();
        std::vector<std::size_t> comps;
        if (opts.max_components_per_param < 0 ||
            n <= static_cast<std::size_t>(opts.max_components_per_param)) {
            comps.resize(n);
            for (std::size_t c = 0; c < n; ++c) comps[c] = c;
        } else {
            Rng r = Rng(opts.sample_seed).derive(pi);
            for (int k = 0; k < opts.max_components_per_param; ++k)
                comps.push_back(static_cast<std::size_t>(r.uniform_int(n)));
        }
        for (std::size_t c : comps) {
            double saved = probe.entries[pi].value.v[c];
            probe.entries[pi].value.v[c] = saved + opts.eps;
            double up = eval(probe).first;
            probe.entries[pi].value.v[c] = saved - opts.eps;
            double down = eval(probe).first;
            probe.entries[pi].value.v[c] = saved;
            double fd = (up - down) / (2.0 * opts.eps);
            double an = gm.grads[pi].v[c];
            double rel = std::abs(an - fd) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// Same check against an existing parameter store and a loss builder that
// reads it (used for whole-model checks).
inline double grad_check_params(ParamStore& store, const std::function<NodeId(Graph&)>& build_loss,
                                GradCheckOpts opts = {}) {
    Graph g;
    g.check_finite = true;
    NodeId loss = build_loss(g);
    GradientMap gm = g.backward(loss, store);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < store.entries.size(); ++pi) {
        if (!store.entries[pi].trainable) continue;
        std::size_t n = store.entries[pi].value.numel();
        std::vector<std::size_t> comps;
        if (opts.max_components_per_param < 0 ||
            n <= static_cast<std::size_t>(opts.max_components_per_param)) {
            comps.resize(n);
            for (std::size_t c = 0; c < n; ++c) comps[c] = c;
        } else {
            Rng r = Rng(opts.sample_seed).derive(pi);
            for (int k = 0; k < opts.max_components_per_param; ++k)
                comps.push_back(static_cast<std::size_t>(r.uniform_int(n)));
        }
        for (std::size_t c : comps) {
            double saved = store.entries[pi].value.v[c];
            store.entries[pi].value.v[c] = saved + opts.eps;
            Graph gu;
            double up = 0.0;
            {
                NodeId l = build_loss(gu);
                up = gu.val(l).v[0];
            }
            store.entries[pi].value.v[c] = saved - opts.eps;
            Graph gd;
            double down = 0.0;
            {
                NodeId l = build_loss(gd);
                down = gd.val(l).v[0];
            }
            store.entries[pi].value.v[c] = saved;
            double fd = (up - down) / (2.0 * opts.eps);
            double an = gm.grads[pi].v[c];
            double rel = std::abs(an - fd) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// Fan-in scaled uniform initialization: U(-sqrt(3/fan_in), +sqrt(3/fan_in)),
// i.e. variance 1/fan_in. Bias vectors start at zero. Seeded by parameter
// name so initialization is independent of registration order.
inline NdArray init_weight(Shape shape, std::size_t fan_in, std::uint64_t seed,
                           const std::string& name) {
    NdArray w(std::move(shape));
    double s = std::sqrt(3.0 / static_cast<double>(fan_in ? fan_in : 1));
    Rng r = Rng(seed).derive("init").derive(name);
    for (double& x : w.v) x = r.uniform(-s, s);
    return w;
}

}  // namespace himap
