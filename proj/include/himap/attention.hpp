// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Shared graph-building blocks: parameter registration helpers, linear/MLP
// composites, and the gated edge attention used to write agents into lanes
// and to read occupancy back out of them.
//
// Attention runs over an explicit edge list (query row <- source row) with a
// per-edge relative-geometry embedding added to keys and values. Softmax is
// normalized per query row over its incident edges only; rows without edges
// receive an exactly-zero message. The per-edge gate (sigmoid MLP over
// [source + relative] ++ query) multiplies values before aggregation, which
// reduces to a single output gate when one source attends to one query. The
// post-attention feed-forward is bias-free so a fully gated-off or empty
// aggregation still contributes exactly zero to the residual stream.

#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "himap/geom.hpp"
#include "himap/tape.hpp"

namespace himap {

// Adds each referenced parameter to the graph once per build.
struct GraphCtx {
    Graph& g;
    const ParamStore& store;
    std::unordered_map<std::string, NodeId> cache;
    std::vector<NodeId>* gate_sink = nullptr;  // test hook: records gate nodes

    GraphCtx(Graph& graph, const ParamStore& s) : g(graph), store(s) {}

    NodeId P(const std::string& name) {
        auto it = cache.find(name);
        if (it != cache.end()) return it->second;
        NodeId id = g.param(name, store.at(name).value);
        cache.emplace(name, id);
        return id;
    }
};

// Registration-side counterpart of GraphCtx. Weights follow the fan-in
// uniform scheme; matrices feeding a residual stream are registered with a
// 0.1 multiplier so token magnitudes stay near the input scale at
// initialization regardless of network depth.
inline constexpr double kResidualInitScale = 0.1;

struct ParamBuilder {
    ParamStore& store;
    std::uint64_t seed;

    void matrix(const std::string& name, std::size_t in, std::size_t out, double scale = 1.0) {
        NdArray w = init_weight({in, out}, in, seed, name);
        if (scale != 1.0)
            for (double& x : w.v) x *= scale;
        store.add(name, std::move(w));
    }
    void bias(const std::string& name, std::size_t n, double value = 0.0) {
        store.add(name, NdArray::full({n}, value));
    }
    void table(const std::string& name, std::size_t rows, std::size_t d) {
        store.add(name, init_weight({rows, d}, d, seed, name));
    }
    void linear(const std::string& prefix, std::size_t in, std::size_t out, bool with_bias = true,
                double scale = 1.0) {
        matrix(prefix + ".W", in, out, scale);
        if (with_bias) bias(prefix + ".b", out);
    }
    void mlp2(const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
              double out_scale = 1.0) {
        linear(prefix + ".1", in, hidden);
        linear(prefix + ".2", hidden, out, true, out_scale);
    }
};

inline NodeId linear(GraphCtx& ctx, const std::string& prefix, NodeId x) {
    NodeId y = ctx.g.matmul(x, ctx.P(prefix + ".W"));
    if (ctx.store.contains(prefix + ".b")) y = ctx.g.add(y, ctx.P(prefix + ".b"));
    return y;
}

inline NodeId mlp2(GraphCtx& ctx, const std::string& prefix, NodeId x) {
    return linear(ctx, prefix + ".2", ctx.g.relu(linear(ctx, prefix + ".1", x)));
}

// Bias-free two-layer feed-forward: maps zero to zero exactly.
inline void register_ff_zerofree(ParamBuilder& pb, const std::string& prefix, std::size_t d) {
    pb.matrix(prefix + ".1.W", d, 2 * d);
    pb.matrix(prefix + ".2.W", 2 * d, d, kResidualInitScale);
}
inline NodeId ff_zerofree(GraphCtx& ctx, const std::string& prefix, NodeId x) {
    return ctx.g.matmul(ctx.g.relu(ctx.g.matmul(x, ctx.P(prefix + ".1.W"))),
                        ctx.P(prefix + ".2.W"));
}

// Repeat a [1, D] row n times.
inline NodeId row_repeat(GraphCtx& ctx, NodeId row, std::size_t n) {
    return ctx.g.gather_rows(row, std::vector<int>(n, 0));
}

// ---------------------------------------------------------------------------
// Edge lists.

struct EdgeList {
    std::vector<int> src;  // into the source row matrix
    std::vector<int> dst;  // into the query row matrix
    std::vector<std::vector<double>> rel;  // per-edge relative features (may be empty)
    int n_src = 0;
    int n_dst = 0;

    std::size_t size() const { return src.size(); }
    int feat_dim() const { return rel.empty() ? 0 : static_cast<int>(rel.front().size()); }

    NdArray rel_matrix() const {
        std::size_t e = size(), f = static_cast<std::size_t>(feat_dim());
        NdArray m({e, f});
        for (std::size_t i = 0; i < e; ++i)
            for (std::size_t j = 0; j < f; ++j) m.v[i * f + j] = rel[i][j];
        return m;
    }
};

// Full bipartite edge list without relative features (plain cross-attention).
inline EdgeList dense_edges(int n_dst, int n_src) {
    EdgeList e;
    e.n_src = n_src;
    e.n_dst = n_dst;
    for (int q = 0; q < n_dst; ++q)
        for (int s = 0; s < n_src; ++s) {
            e.dst.push_back(q);
            e.src.push_back(s);
        }
    return e;
}

// ---------------------------------------------------------------------------
// Gated edge attention.

struct AttentionSpec {
    int heads = 8;
    int d = 32;
    int feat_dim = 0;  // relative-feature width; 0 disables the rel projection
    bool gated = false;
    bool with_ff = true;
};

inline void register_edge_attention(ParamBuilder& pb, const std::string& prefix,
                                    const AttentionSpec& spec) {
    std::size_t d = static_cast<std::size_t>(spec.d);
    if (spec.feat_dim > 0) pb.linear(prefix + ".rel", static_cast<std::size_t>(spec.feat_dim), d);
    pb.matrix(prefix + ".q.W", d, d);
    pb.matrix(prefix + ".k.W", d, d);
    pb.matrix(prefix + ".v.W", d, d);
    pb.matrix(prefix + ".o.W", d, d, kResidualInitScale);
    if (spec.gated) pb.mlp2(prefix + ".gate", 2 * d, d, d);
    if (spec.with_ff) register_ff_zerofree(pb, prefix + ".ff", d);
}

// Message for each query row aggregated over its incident edges; exact zero
// rows for queries without edges.
inline NodeId edge_attention(GraphCtx& ctx, const std::string& prefix, NodeId queries,
                             NodeId src_rows, const EdgeList& edges, const AttentionSpec& spec) {
    Graph& g = ctx.g;
    std::size_t d = static_cast<std::size_t>(spec.d);
    std::size_t n_q = g.val(queries).shape[0];
    if (edges.size() == 0) return g.input(NdArray({n_q, d}));

    std::size_t e = edges.size();
    std::size_t h = static_cast<std::size_t>(spec.heads);
    std::size_t dh = d / h;

    NodeId kv_base = g.gather_rows(src_rows, edges.src);
    if (spec.feat_dim > 0) {
        NodeId rel = g.input(edges.rel_matrix());
        kv_base = g.add(kv_base, linear(ctx, prefix + ".rel", rel));
    }

    NodeId q_all = g.matmul(queries, ctx.P(prefix + ".q.W"));
    NodeId q_e = g.gather_rows(q_all, edges.dst);
    NodeId k_e = g.matmul(kv_base, ctx.P(prefix + ".k.W"));
    NodeId v_e = g.matmul(kv_base, ctx.P(prefix + ".v.W"));

    if (spec.gated) {
        NodeId gate_in = g.concat({kv_base, g.gather_rows(queries, edges.dst)}, 1);
        NodeId gate = g.sigmoid(mlp2(ctx, prefix + ".gate", gate_in));
        if (ctx.gate_sink) ctx.gate_sink->push_back(gate);
        v_e = g.mul(v_e, gate);
    }

    // Per-edge, per-head logits.
    NodeId qk = g.reshape(g.mul(q_e, k_e), {e, h, dh});
    NodeId logits = g.scale(g.sum(qk, 2), 1.0 / std::sqrt(static_cast<double>(dh)));

    // Shift by the per-(query,head) max, computed from current values. The
    // shift enters as a constant; softmax is invariant to it, so gradients
    // stay exact while exp() stays bounded.
    {
        const NdArray& lv = g.val(logits);
        std::vector<double> mx(n_q * h, -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < e; ++i)
            for (std::size_t j = 0; j < h; ++j)
                mx[static_cast<std::size_t>(edges.dst[i]) * h + j] =
                    std::max(mx[static_cast<std::size_t>(edges.dst[i]) * h + j], lv.at2(i, j));
        NdArray shift({e, h});
        for (std::size_t i = 0; i < e; ++i)
            for (std::size_t j = 0; j < h; ++j)
                shift.at2(i, j) = mx[static_cast<std::size_t>(edges.dst[i]) * h + j];
        logits = g.sub(logits, g.input(std::move(shift)));
    }

    NodeId ex = g.exp(logits);                                   // [E, H]
    NodeId denom = g.scatter_add_rows(ex, edges.dst, n_q);       // [Nq, H]
    NodeId w = g.div(ex, g.gather_rows(denom, edges.dst));       // [E, H]

    // Broadcast weights across the head width via a ones matmul.
    NodeId ones = g.input(NdArray::full({1, dh}, 1.0));
    NodeId w3 = g.reshape(g.matmul(g.reshape(w, {e * h, 1}), ones), {e, h, dh});
    NodeId wv = g.mul(w3, g.reshape(v_e, {e, h, dh}));
    NodeId msg = g.reshape(g.scatter_add_rows(wv, edges.dst, n_q), {n_q, d});
    NodeId out = g.matmul(msg, ctx.P(prefix + ".o.W"));
    if (spec.with_ff) out = g.add(out, ff_zerofree(ctx, prefix + ".ff", out));
    return out;
}

}  // namespace himap
