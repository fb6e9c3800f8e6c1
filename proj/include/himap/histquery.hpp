// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// History retrieval without identities: a per-lane GRU summarizes the
// occupancy stack into a temporal map embedding; a per-agent query seeded
// from the current state reads occupancy frames in reverse temporal order,
// emitting one local-frame displacement per step with shared parameters.
//
// The lane->agent edge set (and its relative encodings) is built once at the
// current timestep and reused by the query initialization and every unroll
// step. Steps reaching past the oldest observed frame clamp to it.

#pragma once

#include <vector>

#include "himap/attention.hpp"
#include "himap/model_config.hpp"
#include "himap/occupancy.hpp"

namespace himap {

inline void register_gru_params(ParamBuilder& pb, const std::string& prefix, std::size_t d) {
    for (const char* gate : {"z", "r", "n"}) {
        pb.matrix(prefix + ".W" + gate, d, d);
        pb.matrix(prefix + ".U" + gate, d, d);
        pb.bias(prefix + ".b" + gate, d);
    }
}

// z = sig(Wz x + Uz h + bz); r = sig(Wr x + Ur h + br);
// n = tanh(Wn x + r * (Un h) + bn); h' = (1 - z) * n + z * h
inline NodeId gru_cell(GraphCtx& ctx, const std::string& prefix, NodeId x, NodeId h) {
    Graph& g = ctx.g;
    if (g.val(x).shape != g.val(h).shape)
        throw std::invalid_argument("gru_cell: input " + shape_str(g.val(x).shape) +
                                    " and hidden " + shape_str(g.val(h).shape) + " differ");
    NodeId z = g.sigmoid(g.add(g.add(g.matmul(x, ctx.P(prefix + ".Wz")),
                                     g.matmul(h, ctx.P(prefix + ".Uz"))),
                               ctx.P(prefix + ".bz")));
    NodeId r = g.sigmoid(g.add(g.add(g.matmul(x, ctx.P(prefix + ".Wr")),
                                     g.matmul(h, ctx.P(prefix + ".Ur"))),
                               ctx.P(prefix + ".br")));
    NodeId n = g.tanh(g.add(g.add(g.matmul(x, ctx.P(prefix + ".Wn")),
                                  g.mul(r, g.matmul(h, ctx.P(prefix + ".Un")))),
                            ctx.P(prefix + ".bn")));
    NodeId one = g.input(NdArray::full(g.val(z).shape, 1.0));
    return g.add(g.mul(g.sub(one, z), n), g.mul(z, h));
}

inline void register_histquery_params(ParamBuilder& pb, const ModelConfig& cfg,
                                      const AblationFlags& flags) {
    std::size_t d = static_cast<std::size_t>(cfg.d_model);
    int f = cfg.descriptor_fourier().dim();
    if (flags.hist_temporal_map) register_gru_params(pb, "tm.gru", d);
    if (flags.hist_query_init)
        register_edge_attention(pb, "hq.init", {cfg.heads, cfg.d_model, f, true, true});
    if (flags.recurrent_query) {
        register_edge_attention(pb, "hq.step", {cfg.heads, cfg.d_model, f, true, true});
        pb.mlp2("hq.disp", d, d, 2, kResidualInitScale);
    }
}

// Final GRU hidden state per lane after consuming frames 1..T in order.
inline NodeId temporal_map(GraphCtx& ctx, const std::vector<NodeId>& stack,
                           const ModelConfig& cfg) {
    if (stack.empty()) throw std::invalid_argument("temporal_map: empty stack");
    std::size_t m = ctx.g.val(stack[0]).shape[0];
    NodeId h = ctx.g.input(NdArray({m, static_cast<std::size_t>(cfg.d_model)}));
    for (NodeId frame : stack) h = gru_cell(ctx, "tm.gru", frame, h);
    return h;
}

// A_query = E_A + gated message from the temporal map along lane->agent
// edges; agents with no lane in radius keep their embedding unchanged.
inline NodeId init_query(GraphCtx& ctx, NodeId agent_row, NodeId map_rows,
                         const EdgeList& lane_to_agent, const ModelConfig& cfg) {
    NodeId msg = edge_attention(ctx, "hq.init", agent_row, map_rows, lane_to_agent,
                                {cfg.heads, cfg.d_model, cfg.descriptor_fourier().dim(), true, true});
    return ctx.g.add(agent_row, msg);
}

struct UnrollResult {
    NodeId final_query = -1;   // [1, D]
    NodeId displacements = -1; // [T_h, 2], most recent step first
};

// Reverse-time unroll over the occupancy stack. step_sources[k] is the row
// matrix read at step k+1 (already clamped to the oldest frame by the
// caller); step_edges[k] the matching lane->agent edge list. One parameter
// set ("hq.step", "hq.disp") serves every step.
inline UnrollResult unroll_history(GraphCtx& ctx, NodeId q0,
                                   const std::vector<NodeId>& step_sources,
                                   const std::vector<const EdgeList*>& step_edges,
                                   const ModelConfig& cfg) {
    if (step_sources.size() != step_edges.size())
        throw std::invalid_argument("unroll_history: sources/edges length mismatch");
    Graph& g = ctx.g;
    UnrollResult out;
    NodeId q = q0;
    std::vector<NodeId> disps;
    AttentionSpec spec{cfg.heads, cfg.d_model, cfg.descriptor_fourier().dim(), true, true};
    for (std::size_t k = 0; k < step_sources.size(); ++k) {
        q = g.add(q, edge_attention(ctx, "hq.step", q, step_sources[k], *step_edges[k], spec));
        disps.push_back(mlp2(ctx, "hq.disp", q));
    }
    out.final_query = q;
    out.displacements = disps.empty() ? g.input(NdArray({0, 2})) : g.concat(disps, 0);
    return out;
}

// Frame index (0-based) read at unroll step k (1-based) from current
// timestep t_c (1-based), clamped to the oldest frame.
inline std::size_t unroll_frame_index(int t_c, int k) {
    int idx = t_c - k;
    return static_cast<std::size_t>(idx < 1 ? 0 : idx - 1);
}

}  // namespace himap
