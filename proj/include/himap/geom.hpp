// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// SE(2) poses, rigid-motion-invariant relative descriptors, and Fourier
// feature embeddings. Everything the model learns from is built out of these
// invariant scalars; absolute coordinates never reach an embedding.

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "himap/nd.hpp"

namespace himap {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 6.28318530717958647692;

// Normalize an angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::fmod(a, kTwoPi);
    if (a <= -kPi) a += kTwoPi;
    if (a > kPi) a -= kTwoPi;
    return a;
}

struct Pose2 {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;  // radians in (-pi, pi]
};

struct RigidTransform2 {
    double rotation = 0.0;  // radians
    double tx = 0.0;
    double ty = 0.0;

    static RigidTransform2 identity() { return {}; }

    RigidTransform2 inverse() const {
        double c = std::cos(rotation), s = std::sin(rotation);
        // inverse rotation applied to -t
        return {-rotation, -(c * tx + s * ty), -(-s * tx + c * ty)};
    }

    RigidTransform2 compose(const RigidTransform2& other) const {
        // this after other: p -> this(other(p))
        double c = std::cos(rotation), s = std::sin(rotation);
        return {rotation + other.rotation, c * other.tx - s * other.ty + tx,
                s * other.tx + c * other.ty + ty};
    }
};

inline Pose2 apply_se2(const RigidTransform2& g, const Pose2& p) {
    double c = std::cos(g.rotation), s = std::sin(g.rotation);
    return {c * p.x - s * p.y + g.tx, s * p.x + c * p.y + g.ty, wrap_angle(p.heading + g.rotation)};
}

inline std::pair<double, double> apply_se2(const RigidTransform2& g, double x, double y) {
    double c = std::cos(g.rotation), s = std::sin(g.rotation);
    return {c * x - s * y + g.tx, s * x + c * y + g.ty};
}

// Relative pose + time parameterization: (distance, bearing of the source in
// the target's frame, heading difference, timestep gap). Invariant under any
// common rigid motion of source and target.
struct RelDescriptor {
    double distance = 0.0;     // meters, >= 0
    double azimuth = 0.0;      // radians in (-pi, pi]
    double rel_heading = 0.0;  // radians in (-pi, pi]
    double time_gap = 0.0;     // timesteps (source time - target time)
};

// Coincident positions yield distance 0 and azimuth 0 by convention; the
// convention applies below 1e-9 m so it is stable under float rounding.
inline constexpr double kCoincidentTol = 1e-9;

inline RelDescriptor rel_descriptor(const Pose2& source, int source_t, const Pose2& target,
                                    int target_t) {
    double dx = source.x - target.x;
    double dy = source.y - target.y;
    RelDescriptor d;
    d.distance = std::hypot(dx, dy);
    d.azimuth = d.distance > kCoincidentTol ? wrap_angle(std::atan2(dy, dx) - target.heading) : 0.0;
    d.rel_heading = wrap_angle(source.heading - target.heading);
    d.time_gap = static_cast<double>(source_t - target_t);
    return d;
}

inline RelDescriptor rel_descriptor(const Pose2& source, const Pose2& target) {
    return rel_descriptor(source, 0, target, 0);
}

// Geometric frequency ladder base*2^k, k = 0..num_frequencies-1. Each scalar
// channel contributes [sin(2*pi*f_k*x), cos(2*pi*f_k*x)] per frequency plus
// the raw value when include_raw is set.
struct FourierSpec {
    int num_frequencies = 4;
    double base_frequency = 0.0625;  // 1/16 per meter (or per radian)
    bool include_raw = true;

    int dim() const { return 2 * num_frequencies + (include_raw ? 1 : 0); }
};

inline void fourier_scalar_into(double x, const FourierSpec& spec, std::vector<double>& out) {
    if (spec.num_frequencies < 1) throw std::invalid_argument("FourierSpec: num_frequencies must be >= 1");
    double f = spec.base_frequency;
    for (int k = 0; k < spec.num_frequencies; ++k, f *= 2.0) {
        out.push_back(std::sin(kTwoPi * f * x));
        out.push_back(std::cos(kTwoPi * f * x));
    }
    if (spec.include_raw) out.push_back(x);
}

inline std::vector<double> fourier_scalar(double x, const FourierSpec& spec) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(spec.dim()));
    fourier_scalar_into(x, spec, out);
    return out;
}

// Per-channel specs for a relative descriptor, in the documented fixed order
// distance, azimuth, rel_heading, time_gap.
struct DescriptorFourier {
    FourierSpec distance{4, 1.0 / 64.0, true};
    FourierSpec azimuth{4, 1.0 / kTwoPi, true};
    FourierSpec rel_heading{4, 1.0 / kTwoPi, true};
    FourierSpec time_gap{4, 1.0 / 16.0, true};

    int dim() const {
        return distance.dim() + azimuth.dim() + rel_heading.dim() + time_gap.dim();
    }
};

inline std::vector<double> fourier_embed(const RelDescriptor& d, const DescriptorFourier& spec) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(spec.dim()));
    fourier_scalar_into(d.distance, spec.distance, out);
    fourier_scalar_into(d.azimuth, spec.azimuth, out);
    fourier_scalar_into(d.rel_heading, spec.rel_heading, out);
    fourier_scalar_into(d.time_gap, spec.time_gap, out);
    return out;
}

// Single-spec variant: the same frequency ladder on all four channels.
inline std::vector<double> fourier_embed(const RelDescriptor& d, const FourierSpec& spec) {
    return fourier_embed(d, DescriptorFourier{spec, spec, spec, spec});
}

}  // namespace himap
