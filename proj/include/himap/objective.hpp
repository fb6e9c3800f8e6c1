// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Training losses (winner-takes-all Laplace regression, mode classification,
// history reconstruction) and the displacement-error metric suite. Winner
// selection is detached: the argmin runs over values and gradients flow only
// through the selected mode's regression head and the probability head.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "himap/decoder.hpp"
#include "himap/tape.hpp"

namespace himap {

struct LossWeights {
    double alpha = 1.0;  // classification weight
    double beta = 1.0;   // history weight
};

using TrajectoryXY = std::vector<std::array<double, 2>>;

// Closest mode by full-horizon mean L2; ties break to the lowest index.
inline int best_mode(const Forecast& f, const TrajectoryXY& gt) {
    if (gt.size() != f.horizon) throw std::invalid_argument("best_mode: horizon mismatch");
    int best = 0;
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < f.k; ++m) {
        double err = 0.0;
        for (std::size_t t = 0; t < f.horizon; ++t)
            err += std::hypot(f.mu_at(m, t, 0) - gt[t][0], f.mu_at(m, t, 1) - gt[t][1]);
        err /= static_cast<double>(f.horizon);
        if (err < best_err) {
            best_err = err;
            best = static_cast<int>(m);
        }
    }
    return best;
}

// (1/t_f) * sum_t sum_dim [ log(2 b) + |y - mu| / b ]
inline double laplace_nll(const Forecast& f, const TrajectoryXY& gt, int mode) {
    if (gt.size() != f.horizon) throw std::invalid_argument("laplace_nll: horizon mismatch");
    double total = 0.0;
    for (std::size_t t = 0; t < f.horizon; ++t)
        for (std::size_t d = 0; d < 2; ++d) {
            double b = f.b_at(static_cast<std::size_t>(mode), t, d);
            if (b <= 0.0) throw std::invalid_argument("laplace_nll: non-positive scale");
            total += std::log(2.0 * b) +
                     std::abs(gt[t][d] - f.mu_at(static_cast<std::size_t>(mode), t, d)) / b;
        }
    return total / static_cast<double>(f.horizon);
}

// Graph version over the decoder's output nodes, for training.
inline NodeId laplace_nll_node(Graph& g, const ForecastNodes& f, const TrajectoryXY& gt,
                               int mode) {
    const NdArray& mu_v = g.val(f.mu);
    std::size_t t_f = mu_v.shape[1];
    if (gt.size() != t_f) throw std::invalid_argument("laplace_nll_node: horizon mismatch");
    NdArray y({1, t_f, 2});
    for (std::size_t t = 0; t < t_f; ++t) {
        y.v[t * 2] = gt[t][0];
        y.v[t * 2 + 1] = gt[t][1];
    }
    NodeId mu_k = g.slice(f.mu, 0, static_cast<std::size_t>(mode), static_cast<std::size_t>(mode) + 1);
    NodeId b_k = g.slice(f.b, 0, static_cast<std::size_t>(mode), static_cast<std::size_t>(mode) + 1);
    NodeId resid = g.abs(g.sub(g.input(std::move(y)), mu_k));
    NodeId terms = g.add(g.log(g.scale(b_k, 2.0)), g.div(resid, b_k));
    return g.scale(g.sum(terms), 1.0 / static_cast<double>(t_f));
}

// -log(pi_hat[k_best]), epsilon-clamped at 1e-12.
inline constexpr double kProbClamp = 1e-12;

inline double mode_cls_loss(const std::vector<double>& probs, int k_best) {
    if (k_best < 0 || static_cast<std::size_t>(k_best) >= probs.size())
        throw std::invalid_argument("mode_cls_loss: bad mode index");
    return -std::log(probs[static_cast<std::size_t>(k_best)] + kProbClamp);
}

inline NodeId mode_cls_loss_node(Graph& g, NodeId pi, int k_best) {
    NodeId p = g.gather_rows(pi, {k_best});
    return g.scale(g.sum(g.log(g.add(p, g.input(NdArray::scalar(kProbClamp))))), -1.0);
}

// (1/t_h) * sum_t || recon_t - gt_t ||^2 over displacement steps.
inline double history_loss(const TrajectoryXY& recon, const TrajectoryXY& gt) {
    if (recon.size() != gt.size()) throw std::invalid_argument("history_loss: length mismatch");
    if (recon.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t t = 0; t < recon.size(); ++t) {
        double dx = recon[t][0] - gt[t][0];
        double dy = recon[t][1] - gt[t][1];
        total += dx * dx + dy * dy;
    }
    return total / static_cast<double>(recon.size());
}

inline NodeId history_loss_node(Graph& g, NodeId displacements, const TrajectoryXY& gt) {
    const NdArray& d = g.val(displacements);
    if (d.shape[0] != gt.size()) throw std::invalid_argument("history_loss_node: length mismatch");
    if (gt.empty()) return g.input(NdArray::scalar(0.0));
    NdArray y({gt.size(), 2});
    for (std::size_t t = 0; t < gt.size(); ++t) {
        y.v[t * 2] = gt[t][0];
        y.v[t * 2 + 1] = gt[t][1];
    }
    NodeId diff = g.sub(displacements, g.input(std::move(y)));
    return g.scale(g.sum(g.mul(diff, diff)), 1.0 / static_cast<double>(gt.size()));
}

inline double total_loss(double reg, double cls, double his, const LossWeights& w) {
    return reg + w.alpha * cls + w.beta * his;
}

inline NodeId total_loss_node(Graph& g, NodeId reg, NodeId cls, NodeId his,
                              const LossWeights& w) {
    return g.add(reg, g.add(g.scale(cls, w.alpha), g.scale(his, w.beta)));
}

struct LossNodes {
    NodeId total = -1;
    NodeId reg = -1;
    NodeId cls = -1;
    NodeId his = -1;
};

// ---------------------------------------------------------------------------
// Metrics.

struct MetricRow {
    double min_ade = 0.0;
    double min_fde = 0.0;
    double miss_rate = 0.0;
    double b_min_fde = 0.0;
    std::size_t n_samples = 0;
};

struct MetricReport {
    MetricRow k1;
    MetricRow k6;
    std::size_t n_samples = 0;

    static std::vector<std::string> csv_header() {
        return {"minADE_1", "minFDE_1", "MR_1",       "b_minFDE_1", "minADE_6",
                "minFDE_6", "MR_6",     "b_minFDE_6", "n_samples"};
    }
    std::vector<std::string> csv_row() const {
        return {format_num(k1.min_ade),   format_num(k1.min_fde),  format_num(k1.miss_rate),
                format_num(k1.b_min_fde), format_num(k6.min_ade),  format_num(k6.min_fde),
                format_num(k6.miss_rate), format_num(k6.b_min_fde), std::to_string(n_samples)};
    }
};

inline constexpr double kMissThresholdMeters = 2.0;

// Per-agent metrics over the K_eval highest-probability modes.
inline MetricRow metrics(const std::vector<Forecast>& forecasts,
                         const std::vector<TrajectoryXY>& gts, std::size_t k_eval) {
    if (forecasts.empty()) throw std::invalid_argument("metrics: empty input");
    if (forecasts.size() != gts.size()) throw std::invalid_argument("metrics: size mismatch");
    MetricRow row;
    for (std::size_t i = 0; i < forecasts.size(); ++i) {
        const Forecast& f = forecasts[i];
        const TrajectoryXY& gt = gts[i];
        if (k_eval < 1 || k_eval > f.k) throw std::invalid_argument("metrics: bad K_eval");
        if (gt.size() != f.horizon) throw std::invalid_argument("metrics: horizon mismatch");

        // Highest-probability subset, stable under probability ties.
        std::vector<std::size_t> order(f.k);
        std::iota(order.begin(), order.end(), 0u);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return f.pi[a] > f.pi[b]; });
        order.resize(k_eval);

        double min_ade = std::numeric_limits<double>::infinity();
        double min_fde = std::numeric_limits<double>::infinity();
        double fde_pi = 0.0;
        for (std::size_t m : order) {
            double ade = 0.0;
            for (std::size_t t = 0; t < f.horizon; ++t)
                ade += std::hypot(f.mu_at(m, t, 0) - gt[t][0], f.mu_at(m, t, 1) - gt[t][1]);
            ade /= static_cast<double>(f.horizon);
            min_ade = std::min(min_ade, ade);
            double fde = std::hypot(f.mu_at(m, f.horizon - 1, 0) - gt[f.horizon - 1][0],
                                    f.mu_at(m, f.horizon - 1, 1) - gt[f.horizon - 1][1]);
            if (fde < min_fde) {
                min_fde = fde;
                fde_pi = f.pi[m];
            }
        }
        row.min_ade += min_ade;
        row.min_fde += min_fde;
        row.miss_rate += min_fde > kMissThresholdMeters ? 1.0 : 0.0;
        row.b_min_fde += min_fde + (1.0 - fde_pi) * (1.0 - fde_pi);
        ++row.n_samples;
    }
    double n = static_cast<double>(row.n_samples);
    row.min_ade /= n;
    row.min_fde /= n;
    row.miss_rate /= n;
    row.b_min_fde /= n;
    return row;
}

inline MetricReport metric_report(const std::vector<Forecast>& forecasts,
                                  const std::vector<TrajectoryXY>& gts) {
    MetricReport rep;
    rep.k1 = metrics(forecasts, gts, 1);
    rep.k6 = metrics(forecasts, gts, std::min<std::size_t>(6, forecasts.front().k));
    rep.n_samples = rep.k1.n_samples;
    return rep;
}

}  // namespace himap
