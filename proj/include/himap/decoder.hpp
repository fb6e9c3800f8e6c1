// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Anchor-free multimodal future decoder: K learnable mode queries cross-attend
// to a small conditioning token set (current agent embedding, reconstructed
// history embedding, final history query), to the temporal map, and to the
// lane embeddings along the agent's lane edges, self-attend across modes, and
// emit per-step Laplace locations/scales plus mode probabilities. The horizon
// is decoded in chunks; each chunk's endpoint is re-encoded into the mode
// token before the next chunk. Mode probabilities are read from the final
// tokens after the last chunk. There is no refinement stage.

#pragma once

#include <string>
#include <vector>

#include "himap/attention.hpp"
#include "himap/model_config.hpp"

namespace himap {

struct Forecast {
    std::size_t k = 0;
    std::size_t horizon = 0;
    std::vector<double> mu;  // [k][horizon][2]
    std::vector<double> b;   // [k][horizon][2], strictly positive
    std::vector<double> pi;  // [k], sums to 1

    double mu_at(std::size_t mode, std::size_t t, std::size_t d) const {
        return mu[(mode * horizon + t) * 2 + d];
    }
    double b_at(std::size_t mode, std::size_t t, std::size_t d) const {
        return b[(mode * horizon + t) * 2 + d];
    }
};

struct ForecastNodes {
    NodeId mu = -1;  // [K, t_f, 2]
    NodeId b = -1;   // [K, t_f, 2]
    NodeId pi = -1;  // [K]
};

inline Forecast extract_forecast(const Graph& g, const ForecastNodes& n) {
    Forecast f;
    const NdArray& mu = g.val(n.mu);
    f.k = mu.shape[0];
    f.horizon = mu.shape[1];
    f.mu = mu.v;
    f.b = g.val(n.b).v;
    f.pi = g.val(n.pi).v;
    return f;
}

// `n_chunks` here is the effective chunking of this model instance (1 when
// recurrence is disabled); the output heads are sized to the chunk width.
inline void register_decoder_params(ParamBuilder& pb, const ModelConfig& cfg, int n_chunks,
                                    bool with_history_inputs, bool with_tml_attention) {
    std::size_t d = static_cast<std::size_t>(cfg.d_model);
    int f = cfg.descriptor_fourier().dim();
    std::size_t chunk = static_cast<std::size_t>(cfg.t_future / n_chunks);

    pb.table("dec.mode_q", static_cast<std::size_t>(cfg.k_modes), d);
    register_edge_attention(pb, "dec.cond", {cfg.heads, cfg.d_model, 0, false, false});
    register_edge_attention(pb, "dec.map", {cfg.heads, cfg.d_model, f, false, false});
    if (with_tml_attention)
        register_edge_attention(pb, "dec.tml", {cfg.heads, cfg.d_model, f, false, false});
    register_edge_attention(pb, "dec.self", {cfg.heads, cfg.d_model, 0, false, false});
    pb.mlp2("dec.ff", d, 2 * d, d, kResidualInitScale);
    // Location head starts near zero; the scale head's bias puts the Laplace
    // scale near softplus(0.5413) + eps_b ~ 1 m so the initial NLL is tame.
    pb.linear("dec.head.mu", d, chunk * 2, true, kResidualInitScale);
    pb.matrix("dec.head.b.W", d, chunk * 2, kResidualInitScale);
    pb.bias("dec.head.b.b", chunk * 2, 0.5413);
    pb.linear("dec.head.pi", d, 1);
    if (n_chunks > 1) pb.linear("dec.reenc", 2, d, true, kResidualInitScale);
    if (with_history_inputs) {
        pb.store.add("dec.hist.null", init_weight({1, d}, d, pb.seed, "dec.hist.null"));
        if (cfg.t_hist > 0) pb.mlp2("dec.hist", static_cast<std::size_t>(cfg.t_hist) * 2, d, d);
    }
}

// Flattened displacement MLP; an empty history maps to a learned null token.
inline NodeId embed_history(GraphCtx& ctx, NodeId displacements, const ModelConfig& cfg) {
    const NdArray& disp = ctx.g.val(displacements);
    if (disp.shape[0] == 0) return ctx.P("dec.hist.null");
    if (static_cast<int>(disp.shape[0]) != cfg.t_hist)
        throw std::invalid_argument("embed_history: expected " + std::to_string(cfg.t_hist) +
                                    " steps, got " + std::to_string(disp.shape[0]));
    NodeId flat = ctx.g.reshape(displacements, {1, disp.shape[0] * 2});
    return mlp2(ctx, "dec.hist", flat);
}

struct DecodeInputs {
    std::vector<NodeId> cond_tokens;        // each [1, D]; order fixed by caller
    NodeId lane_rows = -1;                  // [M, D]
    const EdgeList* lane_edges = nullptr;   // lane -> mode
    NodeId tml_rows = -1;                   // [M, D] or -1
    const EdgeList* tml_edges = nullptr;
    int n_chunks = 1;
};

// Replicate an agent's lane->agent edge list (single query row) across K mode
// tokens; relative encodings are shared.
inline EdgeList mode_edges(const EdgeList& lane_to_agent, int k_modes) {
    EdgeList out;
    out.n_src = lane_to_agent.n_src;
    out.n_dst = k_modes;
    for (int k = 0; k < k_modes; ++k)
        for (std::size_t e = 0; e < lane_to_agent.size(); ++e) {
            out.src.push_back(lane_to_agent.src[e]);
            out.dst.push_back(k);
            if (!lane_to_agent.rel.empty()) out.rel.push_back(lane_to_agent.rel[e]);
        }
    return out;
}

inline ForecastNodes decode(GraphCtx& ctx, const DecodeInputs& in, const ModelConfig& cfg) {
    Graph& g = ctx.g;
    std::size_t k = static_cast<std::size_t>(cfg.k_modes);
    std::size_t t_f = static_cast<std::size_t>(cfg.t_future);
    int rounds = in.n_chunks;
    std::size_t chunk = t_f / static_cast<std::size_t>(rounds);
    if (in.cond_tokens.empty()) throw std::invalid_argument("decode: no conditioning tokens");
    if (in.lane_edges == nullptr) throw std::invalid_argument("decode: missing lane edges");

    AttentionSpec plain{cfg.heads, cfg.d_model, 0, false, false};
    AttentionSpec with_rel{cfg.heads, cfg.d_model, cfg.descriptor_fourier().dim(), false, false};

    NodeId cond = in.cond_tokens.size() == 1 ? in.cond_tokens[0] : g.concat(in.cond_tokens, 0);
    EdgeList cond_edges = dense_edges(static_cast<int>(k), static_cast<int>(g.val(cond).shape[0]));
    EdgeList self_edges = dense_edges(static_cast<int>(k), static_cast<int>(k));

    NodeId x = ctx.P("dec.mode_q");
    std::vector<NodeId> mu_chunks, b_chunks;
    NodeId eps = g.input(NdArray::scalar(cfg.eps_b));
    for (int r = 0; r < rounds; ++r) {
        x = g.add(x, edge_attention(ctx, "dec.cond", x, cond, cond_edges, plain));
        if (in.tml_rows >= 0 && in.tml_edges != nullptr)
            x = g.add(x, edge_attention(ctx, "dec.tml", x, in.tml_rows, *in.tml_edges, with_rel));
        x = g.add(x, edge_attention(ctx, "dec.map", x, in.lane_rows, *in.lane_edges, with_rel));
        x = g.add(x, edge_attention(ctx, "dec.self", x, x, self_edges, plain));
        x = g.add(x, mlp2(ctx, "dec.ff", g.layer_norm(x, 1)));

        NodeId mu_r = g.reshape(linear(ctx, "dec.head.mu", x), {k, chunk, 2});
        NodeId b_r = g.add(g.softplus(linear(ctx, "dec.head.b", x)), eps);
        mu_chunks.push_back(mu_r);
        b_chunks.push_back(g.reshape(b_r, {k, chunk, 2}));
        if (r + 1 < rounds) {
            NodeId endpoint = g.reshape(g.slice(mu_r, 1, chunk - 1, chunk), {k, 2});
            x = g.add(x, linear(ctx, "dec.reenc", endpoint));
        }
    }

    ForecastNodes out;
    out.mu = mu_chunks.size() == 1 ? mu_chunks[0] : g.concat(mu_chunks, 1);
    out.b = b_chunks.size() == 1 ? b_chunks[0] : g.concat(b_chunks, 1);
    out.pi = g.softmax(g.reshape(linear(ctx, "dec.head.pi", x), {k}), 0);
    return out;
}

}  // namespace himap
