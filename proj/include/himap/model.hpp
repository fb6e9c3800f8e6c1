// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end model assembly. HimapModel consumes identity-free detection
// frames: scene encoding -> per-frame occupancy maps -> GRU temporal map ->
// per-target history query unroll -> multimodal decoder. Component toggles
// disable stages for the ablation protocol; with everything off the model
// reads only the current frame and the map.
//
// TrackedBaseline is the like-for-like reference consuming ID'd histories
// through a temporal attention stack instead of occupancy retrieval; its
// visible history length is capped at evaluation time and can be randomly
// masked during training.

#pragma once

#include <array>
#include <optional>
#include <vector>

#include "himap/decoder.hpp"
#include "himap/encoder.hpp"
#include "himap/histquery.hpp"
#include "himap/model_config.hpp"
#include "himap/objective.hpp"
#include "himap/occupancy.hpp"
#include "himap/scenario.hpp"

namespace himap {

inline std::array<double, 2> to_local(const Pose2& anchor, double gx, double gy) {
    double dx = gx - anchor.x, dy = gy - anchor.y;
    double c = std::cos(anchor.heading), s = std::sin(anchor.heading);
    return {c * dx + s * dy, -s * dx + c * dy};
}

inline std::array<double, 2> local_to_global(const Pose2& anchor, double lx, double ly) {
    double c = std::cos(anchor.heading), s = std::sin(anchor.heading);
    return {anchor.x + c * lx - s * ly, anchor.y + s * lx + c * ly};
}

// Ground-truth future in the target's anchor frame.
inline TrajectoryXY gt_future_local(const Scenario& s, const TargetRef& target,
                                    const Pose2& anchor) {
    const Track& tr = s.gt_tracks[static_cast<std::size_t>(target.track)];
    TrajectoryXY out;
    for (int t = s.t_obs + 1; t <= s.t_obs + s.t_future; ++t) {
        const AgentState& st = tr.states[static_cast<std::size_t>(t - 1)];
        out.push_back(to_local(anchor, st.x, st.y));
    }
    return out;
}

// Ground-truth history displacements, most recent first, using the same
// frame clamping as the unroll (steps past frame 1 repeat it and contribute
// zero displacement).
inline TrajectoryXY gt_history_disp_local(const Scenario& s, const TargetRef& target,
                                          const Pose2& anchor, int t_hist) {
    const Track& tr = s.gt_tracks[static_cast<std::size_t>(target.track)];
    TrajectoryXY out;
    int t_c = s.t_obs;
    auto local_at = [&](int t) {
        const AgentState& st = tr.states[static_cast<std::size_t>(std::max(t, 1) - 1)];
        return to_local(anchor, st.x, st.y);
    };
    for (int k = 1; k <= t_hist; ++k) {
        auto cur = local_at(t_c - k);
        auto prev = local_at(t_c - k + 1);
        out.push_back({cur[0] - prev[0], cur[1] - prev[1]});
    }
    return out;
}

// Ground-truth history positions relative to the agent's current gt position
// (the reconstruction metric compares accumulated displacements to these).
inline TrajectoryXY gt_history_pos_local(const Scenario& s, const TargetRef& target,
                                         const Pose2& anchor, int t_hist) {
    TrajectoryXY disp = gt_history_disp_local(s, target, anchor, t_hist);
    TrajectoryXY out;
    double x = 0.0, y = 0.0;
    for (const auto& d : disp) {
        x += d[0];
        y += d[1];
        out.push_back({x, y});
    }
    return out;
}

struct TargetNodes {
    int det_index = -1;
    int track = -1;
    Pose2 anchor;
    ForecastNodes forecast;
    NodeId displacements = -1;  // [t_hist, 2] (empty without reconstruction)
    NodeId final_query = -1;
};

struct ForwardNodes {
    std::vector<TargetNodes> targets;
    std::vector<NodeId> occupancy;  // empty unless the occupancy path is on
    NodeId lane_rows = -1;
    NodeId temporal_map = -1;
};

struct Prediction {
    int det_index = -1;
    int track = -1;
    Pose2 anchor;
    Forecast forecast;
    TrajectoryXY recon_pos;  // accumulated local positions, length t_hist (empty if no recon)
};

class HimapModel {
public:
    ModelConfig cfg;
    AblationFlags flags;
    ParamStore params;

    static HimapModel init(const ModelConfig& cfg, const AblationFlags& flags,
                           std::uint64_t seed) {
        cfg.validate();
        flags.validate();
        HimapModel m;
        m.cfg = cfg;
        m.flags = flags;
        ParamBuilder pb{m.params, seed};
        register_encoder_params(pb, cfg);
        if (flags.hist_occ_map) register_occupancy_params(pb, cfg);
        register_histquery_params(pb, cfg, flags);
        register_decoder_params(pb, cfg, flags.dec_recurrent ? cfg.n_chunks : 1,
                                /*with_history_inputs=*/flags.dec_temporal_map,
                                /*with_tml_attention=*/flags.dec_temporal_map);
        return m;
    }

    ForwardNodes forward(Graph& g, const Scenario& s,
                         std::vector<NodeId>* gate_sink = nullptr) const {
        if (s.frames.empty()) throw std::invalid_argument("forward: scenario has no frames");
        GraphCtx ctx(g, params);
        ctx.gate_sink = gate_sink;
        ForwardNodes out;

        LaneEncoding lanes = encode_lanes(ctx, s.lanes, cfg);
        out.lane_rows = lanes.rows;

        // Past frames are only encoded when some history path consumes them.
        std::vector<AgentEncoding> frames(s.frames.size());
        std::size_t first = flags.recurrent_query ? 0 : s.frames.size() - 1;
        for (std::size_t f = first; f < s.frames.size(); ++f)
            frames[f] = encode_agents(ctx, s.frames[f].detections, cfg);
        const AgentEncoding& current = frames.back();

        if (flags.recurrent_query && flags.hist_occ_map)
            out.occupancy = occupancy_stack(ctx, frames, lanes, cfg);
        if (flags.hist_temporal_map) out.temporal_map = temporal_map(ctx, out.occupancy, cfg);

        int t_c = s.t_obs;
        for (const TargetRef& target : s.targets) {
            TargetNodes tn;
            tn.det_index = target.detection;
            tn.track = target.track;
            tn.anchor = current.poses[static_cast<std::size_t>(target.detection)];

            NodeId agent_row = g.slice(current.rows, 0, static_cast<std::size_t>(target.detection),
                                       static_cast<std::size_t>(target.detection) + 1);

            EdgeSet la_set = build_edges({tn.anchor}, lanes.poses, cfg.radius,
                                         EdgeDirection::LaneToAgent);
            EdgeList la = to_edge_list(la_set, cfg.descriptor_fourier());

            NodeId q = agent_row;
            if (flags.hist_query_init) {
                NodeId map_rows = flags.hist_temporal_map ? out.temporal_map : lanes.rows;
                q = init_query(ctx, agent_row, map_rows, la, cfg);
            }

            std::vector<EdgeList> direct_edges;  // row-2 variant storage
            if (flags.recurrent_query) {
                std::vector<NodeId> sources;
                std::vector<const EdgeList*> edges;
                if (flags.hist_occ_map) {
                    for (int k = 1; k <= cfg.t_hist; ++k) {
                        sources.push_back(out.occupancy[unroll_frame_index(t_c, k)]);
                        edges.push_back(&la);
                    }
                } else {
                    direct_edges.reserve(static_cast<std::size_t>(cfg.t_hist));
                    for (int k = 1; k <= cfg.t_hist; ++k) {
                        std::size_t fi = unroll_frame_index(t_c, k);
                        direct_edges.push_back(
                            direct_step_edges(s, frames, fi, tn.anchor, t_c));
                        sources.push_back(frames[fi].rows);
                    }
                    for (const auto& e : direct_edges) edges.push_back(&e);
                }
                UnrollResult ur = unroll_history(ctx, q, sources, edges, cfg);
                tn.final_query = ur.final_query;
                tn.displacements = ur.displacements;
            } else {
                tn.final_query = q;
                tn.displacements = g.input(NdArray({0, 2}));
            }

            DecodeInputs din;
            din.cond_tokens.push_back(agent_row);
            if (flags.recurrent_query && flags.dec_temporal_map)
                din.cond_tokens.push_back(embed_history(ctx, tn.displacements, cfg));
            if (flags.recurrent_query && flags.dec_updated_query)
                din.cond_tokens.push_back(tn.final_query);
            EdgeList lane_me = mode_edges(la, cfg.k_modes);
            din.lane_rows = lanes.rows;
            din.lane_edges = &lane_me;
            EdgeList tml_me;
            if (flags.hist_temporal_map && flags.dec_temporal_map) {
                tml_me = lane_me;
                din.tml_rows = out.temporal_map;
                din.tml_edges = &tml_me;
            }
            din.n_chunks = flags.dec_recurrent ? cfg.n_chunks : 1;
            tn.forecast = decode(ctx, din, cfg);
            out.targets.push_back(tn);
        }
        return out;
    }

    // Winner selection is detached; `fixed_winners` (one mode per target)
    // optionally pins it, which is what a finite-difference check of the
    // detached objective must differentiate.
    LossNodes build_loss(Graph& g, const Scenario& s, const LossWeights& w,
                         const std::vector<int>* fixed_winners = nullptr) const {
        ForwardNodes fw = forward(g, s);
        if (fw.targets.empty()) throw std::invalid_argument("build_loss: scenario has no targets");
        std::vector<NodeId> regs, clss, hiss;
        for (std::size_t ti = 0; ti < fw.targets.size(); ++ti) {
            const TargetNodes& tn = fw.targets[ti];
            TargetRef target{tn.det_index, tn.track};
            TrajectoryXY gt = gt_future_local(s, target, tn.anchor);
            Forecast f = extract_forecast(g, tn.forecast);
            int k_best = fixed_winners ? (*fixed_winners)[ti] : best_mode(f, gt);
            regs.push_back(laplace_nll_node(g, tn.forecast, gt, k_best));
            clss.push_back(mode_cls_loss_node(g, tn.forecast.pi, k_best));
            if (flags.recurrent_query && cfg.t_hist > 0)
                hiss.push_back(history_loss_node(
                    g, tn.displacements, gt_history_disp_local(s, target, tn.anchor, cfg.t_hist)));
        }
        auto mean_of = [&](const std::vector<NodeId>& xs) {
            if (xs.empty()) return g.input(NdArray::scalar(0.0));
            NodeId acc = xs[0];
            for (std::size_t i = 1; i < xs.size(); ++i) acc = g.add(acc, xs[i]);
            return g.scale(acc, 1.0 / static_cast<double>(xs.size()));
        };
        LossNodes out;
        out.reg = mean_of(regs);
        out.cls = mean_of(clss);
        out.his = mean_of(hiss);
        out.total = total_loss_node(g, out.reg, out.cls, out.his, w);
        return out;
    }

    // Winner assignment of the current parameters (used to pin the detached
    // argmin across finite-difference evaluations).
    std::vector<int> current_winners(const Scenario& s) const {
        Graph g;
        ForwardNodes fw = forward(g, s);
        std::vector<int> out;
        for (const TargetNodes& tn : fw.targets) {
            TargetRef target{tn.det_index, tn.track};
            out.push_back(best_mode(extract_forecast(g, tn.forecast),
                                    gt_future_local(s, target, tn.anchor)));
        }
        return out;
    }

    std::vector<Prediction> predict(const Scenario& s) const {
        Graph g;
        ForwardNodes fw = forward(g, s);
        std::vector<Prediction> out;
        for (const TargetNodes& tn : fw.targets) {
            Prediction p;
            p.det_index = tn.det_index;
            p.track = tn.track;
            p.anchor = tn.anchor;
            p.forecast = extract_forecast(g, tn.forecast);
            const NdArray& disp = g.val(tn.displacements);
            double x = 0.0, y = 0.0;
            for (std::size_t k = 0; k < disp.shape[0]; ++k) {
                x += disp.at2(k, 0);
                y += disp.at2(k, 1);
                p.recon_pos.push_back({x, y});
            }
            out.push_back(std::move(p));
        }
        return out;
    }

private:
    // Direct agent-history attention (no occupancy maps): the query reads the
    // raw detection embeddings of each past frame, capped to the nearest
    // max_attended detections inside the connectivity radius.
    EdgeList direct_step_edges(const Scenario& s, const std::vector<AgentEncoding>& frames,
                               std::size_t frame_idx, const Pose2& anchor, int t_c) const {
        const AgentEncoding& fr = frames[frame_idx];
        int t_frame = s.frames[frame_idx].timestep;
        std::vector<std::pair<double, int>> in_range;
        for (std::size_t d = 0; d < fr.poses.size(); ++d) {
            double dist = std::hypot(fr.poses[d].x - anchor.x, fr.poses[d].y - anchor.y);
            if (dist <= cfg.radius) in_range.emplace_back(dist, static_cast<int>(d));
        }
        std::sort(in_range.begin(), in_range.end());
        if (static_cast<int>(in_range.size()) > cfg.max_attended)
            in_range.resize(static_cast<std::size_t>(cfg.max_attended));
        EdgeList el;
        el.n_src = static_cast<int>(fr.poses.size());
        el.n_dst = 1;
        DescriptorFourier df = cfg.descriptor_fourier();
        for (const auto& [dist, d] : in_range) {
            el.src.push_back(d);
            el.dst.push_back(0);
            el.rel.push_back(fourier_embed(
                rel_descriptor(fr.poses[static_cast<std::size_t>(d)], t_frame, anchor, t_c), df));
        }
        return el;
    }
};

// ---------------------------------------------------------------------------
// Tracked reference model.

class TrackedBaseline {
public:
    ModelConfig cfg;
    ParamStore params;

    static TrackedBaseline init(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        TrackedBaseline m;
        m.cfg = cfg;
        ParamBuilder pb{m.params, seed};
        register_encoder_params(pb, cfg);
        int f = cfg.descriptor_fourier().dim();
        pb.linear("bl.rel", static_cast<std::size_t>(f), static_cast<std::size_t>(cfg.d_model));
        register_edge_attention(pb, "bl.attn1", {cfg.heads, cfg.d_model, f, false, true});
        register_edge_attention(pb, "bl.attn2", {cfg.heads, cfg.d_model, f, false, true});
        register_decoder_params(pb, cfg, cfg.n_chunks, /*with_history_inputs=*/false,
                                /*with_tml_attention=*/false);
        return m;
    }

    int full_history() const { return cfg.t_obs - 1; }

    // kept[i][j] (when given) keeps the j-th most recent history frame of
    // target i; used for masked fine-tuning.
    ForwardNodes forward(Graph& g, const Scenario& s, int n_history,
                         const std::vector<std::vector<bool>>* kept = nullptr) const {
        if (n_history < 0 || n_history > s.t_obs - 1)
            throw std::invalid_argument("baseline forward: n_history outside [0, t_obs-1]");
        GraphCtx ctx(g, params);
        ForwardNodes out;
        LaneEncoding lanes = encode_lanes(ctx, s.lanes, cfg);
        out.lane_rows = lanes.rows;
        AgentEncoding current = encode_agents(ctx, s.current_frame().detections, cfg);

        int t_c = s.t_obs;
        DescriptorFourier df = cfg.descriptor_fourier();
        for (std::size_t ti = 0; ti < s.targets.size(); ++ti) {
            const TargetRef& target = s.targets[ti];
            TargetNodes tn;
            tn.det_index = target.detection;
            tn.track = target.track;
            tn.anchor = current.poses[static_cast<std::size_t>(target.detection)];
            NodeId agent_row = g.slice(current.rows, 0, static_cast<std::size_t>(target.detection),
                                       static_cast<std::size_t>(target.detection) + 1);

            // ID'd history states, most recent first.
            std::vector<AgentState> hist;
            std::vector<int> hist_t;
            const Track& tr = s.gt_tracks[static_cast<std::size_t>(target.track)];
            for (int j = 1; j <= n_history; ++j) {
                int t = t_c - j;
                if (t < 1) break;
                if (kept && !(*kept)[ti][static_cast<std::size_t>(j - 1)]) continue;
                hist.push_back(tr.states[static_cast<std::size_t>(t - 1)]);
                hist_t.push_back(t);
            }

            NodeId summary = agent_row;
            if (!hist.empty()) {
                AgentEncoding he = encode_agents(ctx, hist, cfg);
                NdArray rel({hist.size(), static_cast<std::size_t>(df.dim())});
                EdgeList el;
                el.n_src = static_cast<int>(hist.size());
                el.n_dst = 1;
                for (std::size_t j = 0; j < hist.size(); ++j) {
                    auto emb = fourier_embed(
                        rel_descriptor(hist[j].pose(), hist_t[j], tn.anchor, t_c), df);
                    for (std::size_t c = 0; c < emb.size(); ++c)
                        rel.v[j * emb.size() + c] = emb[c];
                    el.src.push_back(static_cast<int>(j));
                    el.dst.push_back(0);
                    el.rel.push_back(emb);
                }
                NodeId hist_rows = g.add(he.rows, linear(ctx, "bl.rel", g.input(std::move(rel))));
                AttentionSpec spec{cfg.heads, cfg.d_model, df.dim(), false, true};
                summary = g.add(summary, edge_attention(ctx, "bl.attn1", summary, hist_rows, el, spec));
                summary = g.add(summary, edge_attention(ctx, "bl.attn2", summary, hist_rows, el, spec));
            }
            tn.final_query = summary;
            tn.displacements = g.input(NdArray({0, 2}));

            EdgeSet la_set =
                build_edges({tn.anchor}, lanes.poses, cfg.radius, EdgeDirection::LaneToAgent);
            EdgeList la = to_edge_list(la_set, df);
            EdgeList lane_me = mode_edges(la, cfg.k_modes);
            DecodeInputs din;
            din.cond_tokens = {agent_row, summary};
            din.lane_rows = lanes.rows;
            din.lane_edges = &lane_me;
            din.n_chunks = cfg.n_chunks;
            tn.forecast = decode(ctx, din, cfg);
            out.targets.push_back(tn);
        }
        return out;
    }

    LossNodes build_loss(Graph& g, const Scenario& s, const LossWeights& w, int n_history,
                         const std::vector<std::vector<bool>>* kept = nullptr) const {
        ForwardNodes fw = forward(g, s, n_history, kept);
        if (fw.targets.empty()) throw std::invalid_argument("build_loss: scenario has no targets");
        std::vector<NodeId> regs, clss;
        for (const TargetNodes& tn : fw.targets) {
            TargetRef target{tn.det_index, tn.track};
            TrajectoryXY gt = gt_future_local(s, target, tn.anchor);
            Forecast f = extract_forecast(g, tn.forecast);
            int k_best = best_mode(f, gt);
            regs.push_back(laplace_nll_node(g, tn.forecast, gt, k_best));
            clss.push_back(mode_cls_loss_node(g, tn.forecast.pi, k_best));
        }
        NodeId reg = regs[0], cls = clss[0];
        for (std::size_t i = 1; i < regs.size(); ++i) {
            reg = g.add(reg, regs[i]);
            cls = g.add(cls, clss[i]);
        }
        LossNodes out;
        out.reg = g.scale(reg, 1.0 / static_cast<double>(regs.size()));
        out.cls = g.scale(cls, 1.0 / static_cast<double>(clss.size()));
        out.his = g.input(NdArray::scalar(0.0));
        out.total = total_loss_node(g, out.reg, out.cls, out.his, w);
        return out;
    }

    std::vector<Prediction> predict(const Scenario& s, int n_history) const {
        Graph g;
        ForwardNodes fw = forward(g, s, n_history);
        std::vector<Prediction> out;
        for (const TargetNodes& tn : fw.targets) {
            Prediction p;
            p.det_index = tn.det_index;
            p.track = tn.track;
            p.anchor = tn.anchor;
            p.forecast = extract_forecast(g, tn.forecast);
            out.push_back(std::move(p));
        }
        return out;
    }
};

}  // namespace himap
