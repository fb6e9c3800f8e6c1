// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Procedural driving scenarios: connected lane corridors (straights, arcs,
// forks), kinematic agents that follow them, identity-free detection frames,
// configurable tracking-failure corruptions, and versioned JSON scenario IO
// (schema "himap-scenario/1"; angles in radians, positions in meters).
//
// Determinism contract: generate / strip_ids / corrupt are pure functions of
// (spec, seed); the same seed yields byte-identical scenario files.
//
// Frame timeline: observation frames carry timesteps 1..t_obs, the current
// frame is t_obs, and ground-truth tracks extend through t_obs + t_future.
// Velocities are forward differences of positions, so gt tracks satisfy
// p[t+1] = p[t] + v[t]*dt exactly (up to float rounding).

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "himap/geom.hpp"
#include "himap/rng.hpp"
#include "himap/util.hpp"

namespace himap {

using Json = nlohmann::json;

enum class AgentCategory { Vehicle = 0, Pedestrian = 1, Bus = 2 };
enum class LaneType { Straight = 0, Curve = 1 };
enum class PointAttr { Centerline = 0, Boundary = 1 };

inline constexpr int kNumAgentCategories = 3;
inline constexpr int kNumLaneTypes = 2;
inline constexpr int kNumPointAttrs = 2;

inline const char* to_string(AgentCategory c) {
    switch (c) {
        case AgentCategory::Vehicle: return "vehicle";
        case AgentCategory::Pedestrian: return "pedestrian";
        case AgentCategory::Bus: return "bus";
    }
    return "?";
}
inline const char* to_string(LaneType t) { return t == LaneType::Straight ? "straight" : "curve"; }
inline const char* to_string(PointAttr a) { return a == PointAttr::Centerline ? "centerline" : "boundary"; }

inline AgentCategory agent_category_from(const std::string& s) {
    if (s == "vehicle") return AgentCategory::Vehicle;
    if (s == "pedestrian") return AgentCategory::Pedestrian;
    if (s == "bus") return AgentCategory::Bus;
    throw std::invalid_argument("unknown agent category '" + s + "'");
}
inline LaneType lane_type_from(const std::string& s) {
    if (s == "straight") return LaneType::Straight;
    if (s == "curve") return LaneType::Curve;
    throw std::invalid_argument("unknown lane type '" + s + "'");
}
inline PointAttr point_attr_from(const std::string& s) {
    if (s == "centerline") return PointAttr::Centerline;
    if (s == "boundary") return PointAttr::Boundary;
    throw std::invalid_argument("unknown point attr '" + s + "'");
}

struct LanePoint {
    double x = 0.0, y = 0.0;
    PointAttr attr = PointAttr::Centerline;
};

struct LanePolygon {
    std::vector<LanePoint> points;  // ordered, >= 2, consecutive points distinct
    LaneType type = LaneType::Straight;
    bool intersection = false;

    double length() const {
        double len = 0.0;
        for (std::size_t i = 1; i < points.size(); ++i)
            len += std::hypot(points[i].x - points[i - 1].x, points[i].y - points[i - 1].y);
        return len;
    }

    // Position at arc length s, clamped to the polyline ends.
    std::pair<double, double> position_at(double s) const {
        double acc = 0.0;
        for (std::size_t i = 1; i < points.size(); ++i) {
            double dx = points[i].x - points[i - 1].x;
            double dy = points[i].y - points[i - 1].y;
            double seg = std::hypot(dx, dy);
            if (acc + seg >= s || i + 1 == points.size()) {
                double u = seg > 0.0 ? std::clamp((s - acc) / seg, 0.0, 1.0) : 0.0;
                return {points[i - 1].x + u * dx, points[i - 1].y + u * dy};
            }
            acc += seg;
        }
        return {points[0].x, points[0].y};
    }

    // Reference frame: position at the arc-length midpoint, heading along the
    // segment containing it. The heading comes from a short secant around the
    // midpoint so the choice is stable when the midpoint falls exactly on a
    // sampled vertex (the common case with uniform point spacing); for an
    // interior midpoint the secant is the segment direction.
    Pose2 reference_pose() const {
        if (points.size() < 2) throw std::invalid_argument("lane with fewer than 2 points");
        double len = length();
        double half = 0.5 * len;
        double delta = std::max(1e-6, 1e-3 * len);
        auto mid = position_at(half);
        auto fwd = position_at(half + delta);
        auto bwd = position_at(half - delta);
        return {mid.first, mid.second, std::atan2(fwd.second - bwd.second, fwd.first - bwd.first)};
    }
};

struct AgentState {
    double x = 0.0, y = 0.0;
    double vx = 0.0, vy = 0.0;
    double heading = 0.0;
    AgentCategory category = AgentCategory::Vehicle;

    double speed() const { return std::hypot(vx, vy); }
    Pose2 pose() const { return {x, y, heading}; }
};

// One timestep's unordered, identity-free detection set. Order carries no
// meaning; consumers must be permutation-invariant.
struct DetectionFrame {
    int timestep = 0;
    std::vector<AgentState> detections;
};

struct Track {
    AgentCategory category = AgentCategory::Vehicle;
    std::vector<AgentState> states;  // timesteps 1..t_obs+t_future
};

struct TargetRef {
    int detection = 0;  // index into the current frame's detections
    int track = 0;      // index into gt_tracks (supervision/eval only)
};

struct OcclusionWindow {
    int track = 0;
    int start = 1;  // inclusive frame timesteps
    int end = 0;
};

struct CorruptionSpec {
    double drop_prob = 0.0;
    double jitter_sigma = 0.0;  // meters
    double clutter_rate = 0.0;  // expected false detections per frame
    std::vector<OcclusionWindow> occlusion;

    bool is_null() const {
        return drop_prob == 0.0 && jitter_sigma == 0.0 && clutter_rate == 0.0 && occlusion.empty();
    }
    void validate(int t_obs) const {
        if (drop_prob < 0.0 || drop_prob > 1.0)
            throw std::invalid_argument("CorruptionSpec: drop_prob outside [0,1]");
        if (jitter_sigma < 0.0 || clutter_rate < 0.0)
            throw std::invalid_argument("CorruptionSpec: negative sigma or rate");
        for (const auto& w : occlusion)
            if (w.start < 1 || w.end > t_obs || w.start > w.end)
                throw std::invalid_argument("CorruptionSpec: occlusion window outside observation span");
    }
};

struct Scenario {
    std::vector<LanePolygon> lanes;
    std::vector<DetectionFrame> frames;  // t_obs frames, ids physically absent
    std::vector<Track> gt_tracks;        // supervision/eval only
    // Supervision-side metadata parallel to frames: originating track index
    // per detection, -1 for clutter. The model never reads this.
    std::vector<std::vector<int>> frame_origins;
    std::vector<TargetRef> targets;
    double dt = 0.1;
    std::uint64_t seed = 0;
    int t_obs = 10;
    int t_future = 12;

    const DetectionFrame& current_frame() const { return frames.back(); }
    int current_timestep() const { return t_obs; }
};

// ---------------------------------------------------------------------------
// Generator.

struct GenSpec {
    int n_agents_min = 2, n_agents_max = 8;
    int n_lanes_min = 4, n_lanes_max = 20;
    int t_obs = 10, t_future = 12;
    double dt = 0.1;
    double speed_min = 4.0, speed_max = 12.0;  // nominal vehicle speed range
    double accel_sigma = 1.2;                  // AR(1) accel noise, m/s^2
    double accel_rho = 0.85;
    double lateral_sigma = 0.0;  // per-step lateral drift, m
    double branch_prob = 0.35;
    double arc_prob = 0.45;
    double segment_len = 25.0;
    double point_spacing = 2.5;
    double min_agent_spacing = 8.0;  // capacity = corridor length / spacing
    bool mixed_categories = true;
    CorruptionSpec corruption;

    void validate() const {
        if (n_agents_min < 1 || n_agents_max < n_agents_min)
            throw std::invalid_argument("GenSpec: invalid agent count range");
        if (n_lanes_min < 1 || n_lanes_max < n_lanes_min)
            throw std::invalid_argument("GenSpec: invalid lane count range");
        if (t_obs < 1 || t_future < 1) throw std::invalid_argument("GenSpec: horizons must be >= 1");
        if (dt <= 0.0) throw std::invalid_argument("GenSpec: dt must be positive");
        if (speed_min < 0.0 || speed_max < speed_min)
            throw std::invalid_argument("GenSpec: invalid speed range");
        corruption.validate(t_obs);
    }
};

// Named presets used by the CLI and tests.
inline GenSpec gen_spec_preset(const std::string& name) {
    GenSpec s;
    if (name == "default") return s;
    if (name == "straight") {
        s.n_agents_min = s.n_agents_max = 1;
        s.n_lanes_min = s.n_lanes_max = 1;
        s.speed_min = s.speed_max = 8.0;
        s.accel_sigma = 0.0;
        s.lateral_sigma = 0.0;
        s.branch_prob = 0.0;
        s.arc_prob = 0.0;
        s.segment_len = 200.0;
        return s;
    }
    if (name == "stationary") {
        s.speed_min = s.speed_max = 0.0;
        s.accel_sigma = 0.0;
        s.lateral_sigma = 0.0;
        return s;
    }
    if (name == "fork") {
        s.n_agents_min = 1;
        s.n_agents_max = 3;
        s.n_lanes_min = s.n_lanes_max = 5;  // stem, two arcs, two exits
        s.branch_prob = 1.0;
        s.arc_prob = 1.0;
        s.speed_min = 6.0;
        s.speed_max = 10.0;
        s.accel_sigma = 0.4;
        s.segment_len = 30.0;
        return s;
    }
    throw std::invalid_argument("unknown generator preset '" + name + "'");
}

namespace detail {

struct CorridorLane {
    LanePolygon polygon;
    int parent = -1;
    std::vector<int> children;
    Pose2 end_pose;
};

inline LanePolygon sample_segment(Pose2 start, bool arc, double turn, double seg_len,
                                  double spacing) {
    LanePolygon lane;
    lane.type = arc ? LaneType::Curve : LaneType::Straight;
    int n = std::max(2, static_cast<int>(std::ceil(seg_len / spacing)) + 1);
    double step = seg_len / (n - 1);
    Pose2 p = start;
    lane.points.push_back({p.x, p.y, PointAttr::Centerline});
    double dturn = arc ? turn / (n - 1) : 0.0;
    for (int i = 1; i < n; ++i) {
        p.heading = wrap_angle(p.heading + dturn);
        p.x += step * std::cos(p.heading);
        p.y += step * std::sin(p.heading);
        lane.points.push_back({p.x, p.y, PointAttr::Centerline});
    }
    return lane;
}

// Polyline arc-length interpolation; extends linearly beyond both ends so an
// agent can overshoot its path without the kinematics breaking.
struct Path {
    std::vector<std::pair<double, double>> pts;
    std::vector<double> cum;  // cumulative arc length

    explicit Path(const std::vector<std::pair<double, double>>& p) : pts(p) {
        cum.resize(pts.size(), 0.0);
        for (std::size_t i = 1; i < pts.size(); ++i)
            cum[i] = cum[i - 1] +
                     std::hypot(pts[i].first - pts[i - 1].first, pts[i].second - pts[i - 1].second);
    }
    double length() const { return cum.empty() ? 0.0 : cum.back(); }

    std::pair<double, double> tangent_at(std::size_t seg) const {
        double dx = pts[seg + 1].first - pts[seg].first;
        double dy = pts[seg + 1].second - pts[seg].second;
        double n = std::hypot(dx, dy);
        return {dx / n, dy / n};
    }

    // Position at arc length s, offset laterally (left of travel direction).
    std::pair<double, double> at(double s, double lateral) const {
        if (pts.size() < 2) return pts.empty() ? std::pair<double, double>{0, 0} : pts[0];
        std::size_t seg;
        double u;
        if (s <= 0.0) {
            seg = 0;
            u = s;  // negative: extend backwards
        } else if (s >= length()) {
            seg = pts.size() - 2;
            u = s - cum[seg];
        } else {
            seg = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), s) -
                                           cum.begin()) - 1;
            seg = std::min(seg, pts.size() - 2);
            u = s - cum[seg];
        }
        auto [tx, ty] = tangent_at(seg);
        return {pts[seg].first + u * tx - lateral * ty, pts[seg].second + u * ty + lateral * tx};
    }
};

}  // namespace detail

inline void rebuild_targets(Scenario& s);
inline void apply_corruption(Scenario& s, const CorruptionSpec& c, std::uint64_t seed);

// Deterministic corridor + agent generation. Rejects specs whose agent count
// exceeds the corridor capacity (total length / min_agent_spacing).
inline Scenario generate(const GenSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng lane_rng = Rng(seed).derive("lanes");

    // Corridor tree.
    std::vector<detail::CorridorLane> corridor;
    int n_lanes = spec.n_lanes_min +
                  static_cast<int>(lane_rng.uniform_int(
                      static_cast<std::uint64_t>(spec.n_lanes_max - spec.n_lanes_min + 1)));
    Pose2 root_start{lane_rng.uniform(-20.0, 20.0), lane_rng.uniform(-20.0, 20.0),
                     wrap_angle(lane_rng.uniform(-kPi, kPi))};
    std::vector<std::pair<int, Pose2>> open_ends;  // (parent lane, pose)
    open_ends.emplace_back(-1, root_start);
    while (static_cast<int>(corridor.size()) < n_lanes && !open_ends.empty()) {
        std::size_t pick = static_cast<std::size_t>(lane_rng.uniform_int(open_ends.size()));
        auto [parent, start] = open_ends[pick];
        open_ends.erase(open_ends.begin() + static_cast<std::ptrdiff_t>(pick));

        bool fork = lane_rng.uniform() < spec.branch_prob &&
                    static_cast<int>(corridor.size()) + 2 <= n_lanes;
        int n_children = fork ? 2 : 1;
        for (int c = 0; c < n_children; ++c) {
            bool arc = lane_rng.uniform() < spec.arc_prob;
            double turn = arc ? lane_rng.uniform(0.3, 0.9) * (lane_rng.uniform() < 0.5 ? -1 : 1)
                              : 0.0;
            Pose2 child_start = start;
            if (fork) child_start.heading = wrap_angle(start.heading + (c == 0 ? 0.25 : -0.25));
            detail::CorridorLane lane;
            lane.polygon = detail::sample_segment(child_start, arc, turn, spec.segment_len,
                                                  spec.point_spacing);
            lane.polygon.intersection = fork;
            lane.parent = parent;
            const auto& last = lane.polygon.points;
            double eh = std::atan2(last[last.size() - 1].y - last[last.size() - 2].y,
                                   last[last.size() - 1].x - last[last.size() - 2].x);
            lane.end_pose = {last.back().x, last.back().y, eh};
            int idx = static_cast<int>(corridor.size());
            if (parent >= 0) corridor[static_cast<std::size_t>(parent)].children.push_back(idx);
            corridor.push_back(std::move(lane));
            open_ends.emplace_back(idx, corridor.back().end_pose);
            if (static_cast<int>(corridor.size()) >= n_lanes) break;
        }
    }

    Scenario s;
    s.dt = spec.dt;
    s.seed = seed;
    s.t_obs = spec.t_obs;
    s.t_future = spec.t_future;
    double total_len = 0.0;
    for (auto& lane : corridor) {
        total_len += lane.polygon.length();
        s.lanes.push_back(lane.polygon);
    }

    // Agents.
    Rng agent_rng = Rng(seed).derive("agents");
    int n_agents = spec.n_agents_min +
                   static_cast<int>(agent_rng.uniform_int(
                       static_cast<std::uint64_t>(spec.n_agents_max - spec.n_agents_min + 1)));
    int capacity = static_cast<int>(total_len / spec.min_agent_spacing);
    if (n_agents > capacity)
        throw std::invalid_argument("generate: " + std::to_string(n_agents) +
                                    " agents exceed corridor capacity " + std::to_string(capacity));

    int total_steps = spec.t_obs + spec.t_future + 1;  // +1 for the velocity difference
    for (int a = 0; a < n_agents; ++a) {
        Rng rng = agent_rng.derive(static_cast<std::uint64_t>(a));

        // Root-to-leaf chain through the corridor tree.
        std::vector<std::pair<double, double>> chain;
        int cur = 0;
        while (true) {
            for (const auto& pt : corridor[static_cast<std::size_t>(cur)].polygon.points) {
                if (!chain.empty() && std::hypot(chain.back().first - pt.x,
                                                 chain.back().second - pt.y) < 1e-9)
                    continue;
                chain.emplace_back(pt.x, pt.y);
            }
            const auto& kids = corridor[static_cast<std::size_t>(cur)].children;
            if (kids.empty()) break;
            cur = kids[static_cast<std::size_t>(rng.uniform_int(kids.size()))];
        }
        detail::Path path(chain);

        AgentCategory cat = AgentCategory::Vehicle;
        if (spec.mixed_categories) {
            double u = rng.uniform();
            cat = u < 0.8 ? AgentCategory::Vehicle
                          : (u < 0.9 ? AgentCategory::Bus : AgentCategory::Pedestrian);
        }
        double cat_scale = cat == AgentCategory::Pedestrian ? 0.15
                           : cat == AgentCategory::Bus ? 0.8
                                                       : 1.0;
        double v_nom = rng.uniform(spec.speed_min, spec.speed_max) * cat_scale;
        double v_cap = spec.speed_max * cat_scale;
        double reach = v_cap * spec.dt * (total_steps + 1);
        double s_max = std::max(0.0, path.length() - reach);
        double s_pos = rng.uniform(0.0, s_max > 0.0 ? s_max : path.length() * 0.25);
        double lateral = rng.normal(0.0, 0.3);

        // AR(1) acceleration; positions sampled along the path, velocities as
        // exact forward differences.
        std::vector<std::pair<double, double>> pos(static_cast<std::size_t>(total_steps) + 1);
        double v = v_nom, acc = 0.0, lat = lateral;
        double s0 = s_pos, lat0 = lateral;
        for (int t = 0; t <= total_steps; ++t) {
            pos[static_cast<std::size_t>(t)] = path.at(s_pos, lat);
            acc = spec.accel_rho * acc + rng.normal(0.0, spec.accel_sigma);
            v = std::clamp(v + acc * spec.dt, 0.0, v_cap);
            s_pos += v * spec.dt;
            lat += rng.normal(0.0, spec.lateral_sigma);
        }

        Track track;
        track.category = cat;
        // Fallback heading (stationary agents): the path tangent at the start.
        auto ahead = path.at(s0 + 1.0, lat0);
        double prev_heading =
            wrap_angle(std::atan2(ahead.second - pos[0].second, ahead.first - pos[0].first));
        for (int t = 0; t < total_steps; ++t) {
            AgentState st;
            st.x = pos[static_cast<std::size_t>(t)].first;
            st.y = pos[static_cast<std::size_t>(t)].second;
            st.vx = (pos[static_cast<std::size_t>(t) + 1].first - st.x) / spec.dt;
            st.vy = (pos[static_cast<std::size_t>(t) + 1].second - st.y) / spec.dt;
            st.heading = st.speed() > 1e-6 ? std::atan2(st.vy, st.vx) : prev_heading;
            prev_heading = st.heading;
            st.category = cat;
            track.states.push_back(st);
        }
        track.states.resize(static_cast<std::size_t>(spec.t_obs + spec.t_future));
        s.gt_tracks.push_back(std::move(track));
    }

    // Identity-free observation frames.
    Rng shuffle_rng = Rng(seed).derive("shuffle");
    for (int t = 1; t <= spec.t_obs; ++t) {
        DetectionFrame frame;
        frame.timestep = t;
        std::vector<int> origins;
        auto perm = shuffle_rng.permutation(s.gt_tracks.size());
        for (std::size_t k = 0; k < perm.size(); ++k) {
            frame.detections.push_back(s.gt_tracks[perm[k]].states[static_cast<std::size_t>(t - 1)]);
            origins.push_back(static_cast<int>(perm[k]));
        }
        s.frames.push_back(std::move(frame));
        s.frame_origins.push_back(std::move(origins));
    }

    if (!spec.corruption.is_null()) {
        apply_corruption(s, spec.corruption, Rng(seed).derive("corrupt").next_u64());
    } else {
        rebuild_targets(s);
    }
    return s;
}

// Targets = current-frame detections that originate from a gt track.
inline void rebuild_targets(Scenario& s) {
    s.targets.clear();
    const auto& origins = s.frame_origins.back();
    for (std::size_t d = 0; d < origins.size(); ++d)
        if (origins[d] >= 0) s.targets.push_back({static_cast<int>(d), origins[d]});
}

// Identity-free frames from gt tracks with a seeded shuffle per frame. No
// cross-frame correspondence is retained in the result.
inline std::vector<DetectionFrame> strip_ids(const Scenario& s, std::uint64_t seed) {
    Rng rng = Rng(seed).derive("strip");
    std::vector<DetectionFrame> frames;
    for (int t = 1; t <= s.t_obs; ++t) {
        DetectionFrame frame;
        frame.timestep = t;
        auto perm = rng.permutation(s.gt_tracks.size());
        for (std::size_t k : perm)
            frame.detections.push_back(s.gt_tracks[k].states[static_cast<std::size_t>(t - 1)]);
        frames.push_back(std::move(frame));
    }
    return frames;
}

// Reshuffle a scenario's frames (fresh detection order) while keeping the
// supervision bookkeeping consistent. Used by permutation-invariance tests.
inline Scenario reshuffled(const Scenario& s, std::uint64_t seed) {
    Scenario out = s;
    Rng rng = Rng(seed).derive("reshuffle");
    for (std::size_t f = 0; f < out.frames.size(); ++f) {
        auto perm = rng.permutation(out.frames[f].detections.size());
        DetectionFrame nf;
        nf.timestep = out.frames[f].timestep;
        std::vector<int> no;
        for (std::size_t k : perm) {
            nf.detections.push_back(out.frames[f].detections[k]);
            no.push_back(out.frame_origins[f][k]);
        }
        out.frames[f] = std::move(nf);
        out.frame_origins[f] = std::move(no);
    }
    rebuild_targets(out);
    return out;
}

// Drop / jitter / occlude / clutter. `origins` (track index per detection, -1
// for clutter) is required only when occlusion windows are present, and is
// rewritten alongside the frames when given.
inline std::vector<DetectionFrame> corrupt(const std::vector<DetectionFrame>& frames,
                                           const CorruptionSpec& c, std::uint64_t seed,
                                           std::vector<std::vector<int>>* origins = nullptr) {
    int t_obs = frames.empty() ? 0 : frames.back().timestep;
    c.validate(std::max(t_obs, 1));
    if (!c.occlusion.empty() && origins == nullptr)
        throw std::invalid_argument("corrupt: occlusion windows need track origins");
    if (origins && origins->size() != frames.size())
        throw std::invalid_argument("corrupt: origins do not match frames");

    // Scene bounds for clutter placement.
    double lo_x = -50, hi_x = 50, lo_y = -50, hi_y = 50;
    bool any = false;
    for (const auto& f : frames)
        for (const auto& d : f.detections) {
            if (!any) {
                lo_x = hi_x = d.x;
                lo_y = hi_y = d.y;
                any = true;
            }
            lo_x = std::min(lo_x, d.x);
            hi_x = std::max(hi_x, d.x);
            lo_y = std::min(lo_y, d.y);
            hi_y = std::max(hi_y, d.y);
        }
    lo_x -= 10;
    hi_x += 10;
    lo_y -= 10;
    hi_y += 10;

    std::vector<DetectionFrame> out;
    std::vector<std::vector<int>> out_origins;
    Rng rng = Rng(seed).derive("corrupt");
    for (std::size_t f = 0; f < frames.size(); ++f) {
        Rng frng = rng.derive(static_cast<std::uint64_t>(f));
        DetectionFrame nf;
        nf.timestep = frames[f].timestep;
        std::vector<int> no;
        for (std::size_t d = 0; d < frames[f].detections.size(); ++d) {
            int origin = origins ? (*origins)[f][d] : -1;
            bool occluded = false;
            for (const auto& w : c.occlusion)
                occluded = occluded || (origin >= 0 && origin == w.track &&
                                        nf.timestep >= w.start && nf.timestep <= w.end);
            bool dropped = frng.uniform() < c.drop_prob;
            if (occluded || dropped) continue;
            AgentState st = frames[f].detections[d];
            if (c.jitter_sigma > 0.0) {
                st.x += frng.normal(0.0, c.jitter_sigma);
                st.y += frng.normal(0.0, c.jitter_sigma);
            }
            nf.detections.push_back(st);
            no.push_back(origin);
        }
        int n_clutter = frng.poisson(c.clutter_rate);
        for (int k = 0; k < n_clutter; ++k) {
            AgentState st;
            st.x = frng.uniform(lo_x, hi_x);
            st.y = frng.uniform(lo_y, hi_y);
            double sp = frng.uniform(0.0, 10.0);
            double h = wrap_angle(frng.uniform(-kPi, kPi));
            st.vx = sp * std::cos(h);
            st.vy = sp * std::sin(h);
            st.heading = h;
            st.category = AgentCategory::Vehicle;
            nf.detections.push_back(st);
            no.push_back(-1);
        }
        out.push_back(std::move(nf));
        out_origins.push_back(std::move(no));
    }
    if (origins) *origins = std::move(out_origins);
    return out;
}

// In-place corruption of a scenario's frames; gt tracks are never touched.
inline void apply_corruption(Scenario& s, const CorruptionSpec& c, std::uint64_t seed) {
    s.frames = corrupt(s.frames, c, seed, &s.frame_origins);
    rebuild_targets(s);
}

// ---------------------------------------------------------------------------
// Whole-scene rigid transforms (invariance checks).

inline AgentState transformed(const AgentState& st, const RigidTransform2& g) {
    auto [x, y] = apply_se2(g, st.x, st.y);
    double c = std::cos(g.rotation), s = std::sin(g.rotation);
    AgentState out = st;
    out.x = x;
    out.y = y;
    out.vx = c * st.vx - s * st.vy;
    out.vy = s * st.vx + c * st.vy;
    out.heading = wrap_angle(st.heading + g.rotation);
    return out;
}

inline LanePolygon transformed(const LanePolygon& lane, const RigidTransform2& g) {
    LanePolygon out = lane;
    for (auto& p : out.points) {
        auto [x, y] = apply_se2(g, p.x, p.y);
        p.x = x;
        p.y = y;
    }
    return out;
}

inline Scenario transformed(const Scenario& s, const RigidTransform2& g) {
    Scenario out = s;
    for (auto& lane : out.lanes) lane = transformed(lane, g);
    for (auto& f : out.frames)
        for (auto& d : f.detections) d = transformed(d, g);
    for (auto& tr : out.gt_tracks)
        for (auto& st : tr.states) st = transformed(st, g);
    return out;
}

// ---------------------------------------------------------------------------
// JSON IO (schema "himap-scenario/1").

namespace detail {

inline const Json& require(const Json& j, const char* key, const char* context) {
    if (!j.contains(key))
        throw std::invalid_argument(std::string(context) + ": missing `" + key + "` key");
    return j.at(key);
}

}  // namespace detail

inline Json to_json(const AgentState& st) {
    return Json{{"x", st.x},       {"y", st.y},           {"vx", st.vx},
                {"vy", st.vy},     {"heading", st.heading},
                {"category", to_string(st.category)}};
}

inline AgentState agent_state_from_json(const Json& j) {
    AgentState st;
    st.x = detail::require(j, "x", "agent state").get<double>();
    st.y = detail::require(j, "y", "agent state").get<double>();
    st.vx = detail::require(j, "vx", "agent state").get<double>();
    st.vy = detail::require(j, "vy", "agent state").get<double>();
    st.heading = detail::require(j, "heading", "agent state").get<double>();
    st.category = agent_category_from(detail::require(j, "category", "agent state").get<std::string>());
    return st;
}

inline Json scenario_to_json(const Scenario& s) {
    Json j;
    j["schema"] = "himap-scenario/1";
    j["seed"] = s.seed;
    j["dt"] = s.dt;
    j["t_obs"] = s.t_obs;
    j["t_future"] = s.t_future;
    Json lanes = Json::array();
    for (const auto& lane : s.lanes) {
        Json pts = Json::array();
        for (const auto& p : lane.points)
            pts.push_back(Json{{"x", p.x}, {"y", p.y}, {"attr", to_string(p.attr)}});
        lanes.push_back(Json{{"type", to_string(lane.type)},
                             {"intersection", lane.intersection},
                             {"points", pts}});
    }
    j["lanes"] = lanes;
    Json frames = Json::array();
    for (const auto& f : s.frames) {
        Json dets = Json::array();
        for (const auto& d : f.detections) dets.push_back(to_json(d));
        frames.push_back(Json{{"t", f.timestep}, {"detections", dets}});
    }
    j["frames"] = frames;
    Json tracks = Json::array();
    for (const auto& tr : s.gt_tracks) {
        Json states = Json::array();
        for (const auto& st : tr.states) states.push_back(to_json(st));
        tracks.push_back(Json{{"category", to_string(tr.category)}, {"states", states}});
    }
    j["gt_tracks"] = tracks;
    j["frame_origins"] = s.frame_origins;
    Json targets = Json::array();
    for (const auto& t : s.targets)
        targets.push_back(Json{{"detection", t.detection}, {"track", t.track}});
    j["targets"] = targets;
    return j;
}

inline Scenario scenario_from_json(const Json& j) {
    using detail::require;
    std::string schema = require(j, "schema", "scenario").get<std::string>();
    if (schema != "himap-scenario/1")
        throw std::invalid_argument("scenario: unsupported schema '" + schema + "'");
    Scenario s;
    s.seed = require(j, "seed", "scenario").get<std::uint64_t>();
    s.dt = require(j, "dt", "scenario").get<double>();
    s.t_obs = require(j, "t_obs", "scenario").get<int>();
    s.t_future = require(j, "t_future", "scenario").get<int>();
    for (const auto& lane_j : require(j, "lanes", "scenario")) {
        LanePolygon lane;
        lane.type = lane_type_from(require(lane_j, "type", "lane").get<std::string>());
        lane.intersection = require(lane_j, "intersection", "lane").get<bool>();
        for (const auto& p : require(lane_j, "points", "lane")) {
            LanePoint lp;
            lp.x = require(p, "x", "lane point").get<double>();
            lp.y = require(p, "y", "lane point").get<double>();
            lp.attr = point_attr_from(require(p, "attr", "lane point").get<std::string>());
            lane.points.push_back(lp);
        }
        if (lane.points.size() < 2)
            throw std::invalid_argument("scenario: lane with fewer than 2 points");
        s.lanes.push_back(std::move(lane));
    }
    for (const auto& f : require(j, "frames", "scenario")) {
        DetectionFrame frame;
        frame.timestep = require(f, "t", "frame").get<int>();
        for (const auto& d : require(f, "detections", "frame"))
            frame.detections.push_back(agent_state_from_json(d));
        s.frames.push_back(std::move(frame));
    }
    for (const auto& t : require(j, "gt_tracks", "scenario")) {
        Track tr;
        tr.category = agent_category_from(require(t, "category", "track").get<std::string>());
        for (const auto& st : require(t, "states", "track"))
            tr.states.push_back(agent_state_from_json(st));
        s.gt_tracks.push_back(std::move(tr));
    }
    s.frame_origins = require(j, "frame_origins", "scenario").get<std::vector<std::vector<int>>>();
    for (const auto& t : require(j, "targets", "scenario"))
        s.targets.push_back({require(t, "detection", "target").get<int>(),
                             require(t, "track", "target").get<int>()});
    return s;
}

inline void write_scenario(const Scenario& s, const std::string& path) {
    write_text_file(path, scenario_to_json(s).dump() + "\n");
}

inline Scenario read_scenario(const std::string& path) {
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::parse_error& e) {
        throw std::invalid_argument("scenario file " + path + ": " + e.what());
    }
    return scenario_from_json(j);
}

// Corpus files: newline-delimited scenario documents.
inline void write_corpus(const std::vector<Scenario>& corpus, const std::string& path) {
    std::string out;
    for (const auto& s : corpus) out += scenario_to_json(s).dump() + "\n";
    write_text_file(path, out);
}

inline std::vector<Scenario> read_corpus(const std::string& path) {
    std::vector<Scenario> corpus;
    std::string text = read_text_file(path);
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            corpus.push_back(scenario_from_json(Json::parse(line)));
        } catch (const std::exception& e) {
            throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return corpus;
}

}  // namespace himap
