// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Scene encoding. Lane polylines: point tokens (Fourier features of each
// point expressed in the lane reference frame + point-attribute embeddings)
// attended by a learnable per-type seed token, fused with polygon attributes.
// Agent detections: Fourier features of speed and velocity/heading
// misalignment plus a category embedding, projected to D.
//
// Only rigid-motion-invariant scalars enter these embeddings; absolute pose
// is carried alongside for edge building and never embedded.

#pragma once

#include <string>
#include <vector>

#include "himap/attention.hpp"
#include "himap/geom.hpp"
#include "himap/model_config.hpp"
#include "himap/scenario.hpp"

namespace himap {

inline void register_encoder_params(ParamBuilder& pb, const ModelConfig& cfg) {
    std::size_t d = static_cast<std::size_t>(cfg.d_model);
    std::size_t f_pt = static_cast<std::size_t>(cfg.descriptor_fourier().dim());
    pb.linear("enc.lane.pt", f_pt, d);
    pb.table("enc.lane.pt_attr", kNumPointAttrs, d);
    pb.table("enc.lane.seed", kNumLaneTypes, d);
    register_edge_attention(pb, "enc.lane.attn",
                            {cfg.heads, cfg.d_model, 0, /*gated=*/false, /*with_ff=*/false});
    pb.table("enc.lane.type", kNumLaneTypes, d);
    pb.table("enc.lane.inter", 2, d);
    pb.mlp2("enc.lane.fuse", 2 * d, d, d);

    std::size_t f_a = static_cast<std::size_t>(cfg.speed_fourier().dim() + cfg.angle_fourier().dim());
    pb.table("enc.agent.cat", kNumAgentCategories, d);
    pb.linear("enc.agent.proj", f_a + d, d);
}

struct LaneEncoding {
    NodeId rows = -1;  // [M, D]
    std::vector<Pose2> poses;
};

struct AgentEncoding {
    NodeId rows = -1;  // [A, D]
    std::vector<Pose2> poses;
};

inline NodeId encode_lane(GraphCtx& ctx, const LanePolygon& lane, const ModelConfig& cfg) {
    if (lane.points.size() < 2)
        throw std::invalid_argument("encode_lane: degenerate lane with " +
                                    std::to_string(lane.points.size()) + " point(s)");
    Pose2 ref = lane.reference_pose();
    DescriptorFourier df = cfg.descriptor_fourier();
    std::size_t n = lane.points.size();
    std::size_t f = static_cast<std::size_t>(df.dim());

    NdArray feats({n, f});
    std::vector<int> attrs(n);
    for (std::size_t i = 0; i < n; ++i) {
        // Point heading: direction of the segment starting at the point (the
        // previous segment for the final point).
        std::size_t a = i + 1 < n ? i : n - 2;
        double hx = lane.points[a + 1].x - lane.points[a].x;
        double hy = lane.points[a + 1].y - lane.points[a].y;
        Pose2 pt{lane.points[i].x, lane.points[i].y, std::atan2(hy, hx)};
        auto emb = fourier_embed(rel_descriptor(pt, 0, ref, 0), df);
        for (std::size_t j = 0; j < f; ++j) feats.v[i * f + j] = emb[j];
        attrs[i] = static_cast<int>(lane.points[i].attr);
    }

    Graph& g = ctx.g;
    NodeId tokens = g.add(linear(ctx, "enc.lane.pt", g.input(std::move(feats))),
                          g.gather_rows(ctx.P("enc.lane.pt_attr"), attrs));
    NodeId seed = g.gather_rows(ctx.P("enc.lane.seed"), {static_cast<int>(lane.type)});
    NodeId attended =
        g.add(seed, edge_attention(ctx, "enc.lane.attn", seed, tokens,
                                   dense_edges(1, static_cast<int>(n)),
                                   {cfg.heads, cfg.d_model, 0, false, false}));
    NodeId poly = g.add(g.gather_rows(ctx.P("enc.lane.type"), {static_cast<int>(lane.type)}),
                        g.gather_rows(ctx.P("enc.lane.inter"), {lane.intersection ? 1 : 0}));
    return mlp2(ctx, "enc.lane.fuse", g.concat({attended, poly}, 1));
}

inline LaneEncoding encode_lanes(GraphCtx& ctx, const std::vector<LanePolygon>& lanes,
                                 const ModelConfig& cfg) {
    LaneEncoding out;
    std::vector<NodeId> rows;
    rows.reserve(lanes.size());
    for (const auto& lane : lanes) {
        rows.push_back(encode_lane(ctx, lane, cfg));
        out.poses.push_back(lane.reference_pose());
    }
    if (rows.empty())
        out.rows = ctx.g.input(NdArray({0, static_cast<std::size_t>(cfg.d_model)}));
    else
        out.rows = rows.size() == 1 ? rows[0] : ctx.g.concat(rows, 0);
    return out;
}

// Velocity is encoded as (speed, velocity-direction minus heading); the
// misalignment channel is 0 by convention for a stationary agent.
inline AgentEncoding encode_agents(GraphCtx& ctx, const std::vector<AgentState>& states,
                                   const ModelConfig& cfg) {
    FourierSpec sf = cfg.speed_fourier();
    FourierSpec af = cfg.angle_fourier();
    std::size_t n = states.size();
    std::size_t f = static_cast<std::size_t>(sf.dim() + af.dim());

    NdArray feats({n, f});
    std::vector<int> cats(n);
    AgentEncoding out;
    out.poses.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const AgentState& st = states[i];
        double speed = st.speed();
        double misalign = speed > 1e-9 ? wrap_angle(std::atan2(st.vy, st.vx) - st.heading) : 0.0;
        std::vector<double> row;
        row.reserve(f);
        fourier_scalar_into(speed, sf, row);
        fourier_scalar_into(misalign, af, row);
        for (std::size_t j = 0; j < f; ++j) feats.v[i * f + j] = row[j];
        cats[i] = static_cast<int>(st.category);
        out.poses.push_back(st.pose());
    }

    Graph& g = ctx.g;
    NodeId cat_emb = g.gather_rows(ctx.P("enc.agent.cat"), cats);
    out.rows = linear(ctx, "enc.agent.proj", g.concat({g.input(std::move(feats)), cat_emb}, 1));
    return out;
}

inline AgentEncoding encode_agent(GraphCtx& ctx, const AgentState& state, const ModelConfig& cfg) {
    return encode_agents(ctx, {state}, cfg);
}

// Per-frame agent embeddings plus shared lane embeddings for a whole scene.
// Frames are pure functions of their own detections, so streaming use only
// ever recomputes the newest frame.
struct SceneEncoding {
    LaneEncoding lanes;
    std::vector<AgentEncoding> frames;
};

inline SceneEncoding encode_scene(GraphCtx& ctx, const Scenario& s, const ModelConfig& cfg) {
    SceneEncoding out;
    out.lanes = encode_lanes(ctx, s.lanes, cfg);
    out.frames.reserve(s.frames.size());
    for (const auto& frame : s.frames) out.frames.push_back(encode_agents(ctx, frame.detections, cfg));
    return out;
}

}  // namespace himap
