// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Historical occupancy maps: per frame, detections within the connectivity
// radius write gated messages into the lane embeddings. Lanes with no agent
// in radius keep their embedding bit-for-bit; identities never enter.

#pragma once

#include <vector>

#include "himap/attention.hpp"
#include "himap/encoder.hpp"
#include "himap/model_config.hpp"

namespace himap {

enum class EdgeDirection { AgentToLane, LaneToAgent };

struct GeomEdge {
    int source = 0;
    int target = 0;
    RelDescriptor desc;
};

struct EdgeSet {
    EdgeDirection direction = EdgeDirection::AgentToLane;
    double radius = 0.0;
    std::vector<GeomEdge> edges;
    int n_source = 0;
    int n_target = 0;
};

// One edge per (source, target) pair with center distance <= r. Descriptors
// point source -> target; timesteps are equal on both sides here, so the gap
// channel stays zero and the encoding is shared across frames.
inline EdgeSet build_edges(const std::vector<Pose2>& agent_poses,
                           const std::vector<Pose2>& lane_poses, double r,
                           EdgeDirection direction) {
    if (r <= 0.0) throw std::invalid_argument("build_edges: radius must be positive");
    EdgeSet set;
    set.direction = direction;
    set.radius = r;
    if (direction == EdgeDirection::AgentToLane) {
        set.n_source = static_cast<int>(agent_poses.size());
        set.n_target = static_cast<int>(lane_poses.size());
    } else {
        set.n_source = static_cast<int>(lane_poses.size());
        set.n_target = static_cast<int>(agent_poses.size());
    }
    for (std::size_t a = 0; a < agent_poses.size(); ++a)
        for (std::size_t l = 0; l < lane_poses.size(); ++l) {
            double dist = std::hypot(agent_poses[a].x - lane_poses[l].x,
                                     agent_poses[a].y - lane_poses[l].y);
            if (dist > r) continue;
            GeomEdge e;
            if (direction == EdgeDirection::AgentToLane) {
                e.source = static_cast<int>(a);
                e.target = static_cast<int>(l);
                e.desc = rel_descriptor(agent_poses[a], 0, lane_poses[l], 0);
            } else {
                e.source = static_cast<int>(l);
                e.target = static_cast<int>(a);
                e.desc = rel_descriptor(lane_poses[l], 0, agent_poses[a], 0);
            }
            set.edges.push_back(e);
        }
    return set;
}

inline EdgeList to_edge_list(const EdgeSet& set, const DescriptorFourier& df) {
    EdgeList el;
    el.n_src = set.n_source;
    el.n_dst = set.n_target;
    el.src.reserve(set.edges.size());
    el.dst.reserve(set.edges.size());
    el.rel.reserve(set.edges.size());
    for (const auto& e : set.edges) {
        el.src.push_back(e.source);
        el.dst.push_back(e.target);
        el.rel.push_back(fourier_embed(e.desc, df));
    }
    return el;
}

inline void register_occupancy_params(ParamBuilder& pb, const ModelConfig& cfg) {
    register_edge_attention(pb, "occ",
                            {cfg.heads, cfg.d_model, cfg.descriptor_fourier().dim(),
                             /*gated=*/true, /*with_ff=*/true});
}

// E_occ = E_L + gated attention message from that frame's detections.
inline NodeId occupancy_frame(GraphCtx& ctx, NodeId agent_rows, NodeId lane_rows,
                              const EdgeSet& edges, const ModelConfig& cfg) {
    if (edges.direction != EdgeDirection::AgentToLane)
        throw std::invalid_argument("occupancy_frame: edges must run agent->lane");
    EdgeList el = to_edge_list(edges, cfg.descriptor_fourier());
    NodeId msg = edge_attention(ctx, "occ", lane_rows, agent_rows, el,
                                {cfg.heads, cfg.d_model, cfg.descriptor_fourier().dim(), true, true});
    return ctx.g.add(lane_rows, msg);
}

// Frames are independent; the stack shares lane embeddings and parameters.
inline std::vector<NodeId> occupancy_stack(GraphCtx& ctx,
                                           const std::vector<AgentEncoding>& frames,
                                           const LaneEncoding& lanes, const ModelConfig& cfg) {
    if (frames.empty()) throw std::invalid_argument("occupancy_stack: needs at least one frame");
    std::vector<NodeId> stack;
    stack.reserve(frames.size());
    for (const auto& f : frames) {
        EdgeSet edges =
            build_edges(f.poses, lanes.poses, cfg.radius, EdgeDirection::AgentToLane);
        stack.push_back(occupancy_frame(ctx, f.rows, lanes.rows, edges, cfg));
    }
    return stack;
}

}  // namespace himap
