// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one pass/fail line per criterion, artifacts under --out
// (default "acceptance_artifacts"). The exit code is the number of failed
// criteria. --only 1,2,... restricts the run during development; the ctest
// registration runs everything.
//
//  1 gradient integrity        full-model FD check < 1e-4, < 2 min
//  2 identity-freeness         detection shuffles move outputs < 1e-9
//  3 SE(2) equivariance        mu rotates with the scene, pi fixed, < 1e-6
//  4 exact anchors             closed-form loss/metric/occupancy values
//  5 oracle equivalence        brute-force oracles on >= 100 instances
//  6 desk-scale learning       5000 steps x 500 scenarios, recon < 30% of
//                              the zero-displacement baseline, < 30 min
//  7 ablation direction        full beats all-off in >= 2 of 3 seeds
//  8 sweep shape               constant himap rows, near-monotone baseline,
//                              crossover reported, CSV + SVG emitted
//  9 reproducibility           identical corpus bytes, training trajectory,
//                              and evaluation CSVs under a fixed seed

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "himap/harness.hpp"
#include "himap/plot.hpp"

namespace fs = std::filesystem;
using namespace himap;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_out = "acceptance_artifacts";

// Shared artifacts across criteria (train once, reuse).
struct Shared {
    AppConfig full_cfg;                 // desk-scale defaults
    std::vector<Scenario> train_corpus; // 500 scenarios
    std::vector<Scenario> heldout;      // 100 scenarios
    std::optional<HimapModel> himap;    // criterion 6 output
} g;

AppConfig desk_config() {
    AppConfig cfg;  // defaults: D=32, 8 heads, 5000 steps, batch 8, lr 3e-4
    cfg.train.val_fraction = 0.0;
    cfg.train.log_interval = 250;
    cfg.train.ckpt_interval = 2500;
    return cfg;
}

std::vector<Scenario> corpus_of(std::size_t n, std::uint64_t seed0, const GenSpec& spec) {
    std::vector<Scenario> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(generate(spec, seed0 + i));
    return out;
}

std::string himap_ckpt_path() { return (fs::path(g_out) / "himap_full.bin").string(); }

// Criterion 6 populates the shared corpora and model; when running a subset
// (--only 8) the model is restored from criterion 6's saved checkpoint.
void ensure_shared() {
    if (g.train_corpus.empty()) {
        g.full_cfg = desk_config();
        g.train_corpus = corpus_of(500, 100000, g.full_cfg.gen);
        g.heldout = corpus_of(100, 200000, g.full_cfg.gen);
    }
    if (!g.himap) {
        RestoredModel restored = restore_model(load_checkpoint(himap_ckpt_path()));
        if (!restored.himap)
            throw std::runtime_error("expected a himap checkpoint at " + himap_ckpt_path());
        g.himap = std::move(*restored.himap);
    }
}

// --- criterion 1 -----------------------------------------------------------

bool c1_gradient_integrity(std::string& detail) {
    auto t0 = Clock::now();
    ModelConfig cfg;  // full defaults, 64-bit throughout
    HimapModel model = HimapModel::init(cfg, AblationFlags::all_on(), 42);
    GenSpec spec = gen_spec_preset("default");
    spec.n_agents_min = spec.n_agents_max = 2;
    spec.n_lanes_min = 4;
    spec.n_lanes_max = 6;
    Scenario toy = generate(spec, 123);

    // Winner-takes-all selection is detached from the gradient, so the
    // finite-difference probe differentiates the loss at the current winner
    // assignment.
    std::vector<int> winners = model.current_winners(toy);
    double err = grad_check_params(
        model.params,
        [&](Graph& g2) { return model.build_loss(g2, toy, {1.0, 1.0}, &winners).total; },
        {.eps = 1e-5, .max_components_per_param = 6, .sample_seed = 99});
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    detail = "max rel err " + format_num(err) + " over sampled components of all " +
             std::to_string(model.params.entries.size()) + " parameter arrays, " +
             format_num(secs) + " s";
    return err < 1e-4 && secs < 120.0;
}

// --- criterion 2 -----------------------------------------------------------

bool c2_identity_freeness(std::string& detail) {
    ModelConfig cfg;
    HimapModel model = HimapModel::init(cfg, AblationFlags::all_on(), 7);
    GenSpec spec = gen_spec_preset("default");
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 100; ++i) {
        Scenario s = generate(spec, 50000 + i);
        Scenario sh = reshuffled(s, 90000 + i * 13);
        auto a = model.predict(s);
        auto b = model.predict(sh);
        if (a.size() != b.size()) return false;
        for (const auto& pa : a) {
            const Prediction* pb = nullptr;
            for (const auto& cand : b)
                if (cand.track == pa.track) pb = &cand;
            if (!pb) return false;
            for (std::size_t k = 0; k < pa.forecast.mu.size(); ++k)
                worst = std::max(worst, std::abs(pa.forecast.mu[k] - pb->forecast.mu[k]));
            for (std::size_t k = 0; k < pa.forecast.b.size(); ++k)
                worst = std::max(worst, std::abs(pa.forecast.b[k] - pb->forecast.b[k]));
            for (std::size_t k = 0; k < pa.forecast.pi.size(); ++k)
                worst = std::max(worst, std::abs(pa.forecast.pi[k] - pb->forecast.pi[k]));
            for (std::size_t k = 0; k < pa.recon_pos.size(); ++k) {
                worst = std::max(worst, std::abs(pa.recon_pos[k][0] - pb->recon_pos[k][0]));
                worst = std::max(worst, std::abs(pa.recon_pos[k][1] - pb->recon_pos[k][1]));
            }
        }
    }
    detail = "100 scenarios, worst output shift " + format_num(worst);
    return worst < 1e-9;
}

// --- criterion 3 -----------------------------------------------------------

bool c3_se2_equivariance(std::string& detail) {
    ModelConfig cfg;
    HimapModel model = HimapModel::init(cfg, AblationFlags::all_on(), 7);
    GenSpec spec = gen_spec_preset("default");
    Rng rng(31);
    double worst_mu = 0.0, worst_pi = 0.0;
    for (int i = 0; i < 50; ++i) {
        Scenario s = generate(spec, 60000 + static_cast<std::uint64_t>(i));
        RigidTransform2 g{rng.uniform(-kPi, kPi), rng.uniform(-100.0, 100.0),
                          rng.uniform(-100.0, 100.0)};
        auto base = model.predict(s);
        auto moved = model.predict(transformed(s, g));
        if (base.size() != moved.size()) return false;
        for (std::size_t t = 0; t < base.size(); ++t) {
            for (std::size_t k = 0; k < base[t].forecast.pi.size(); ++k)
                worst_pi = std::max(worst_pi, std::abs(base[t].forecast.pi[k] -
                                                       moved[t].forecast.pi[k]));
            for (std::size_t m = 0; m < base[t].forecast.k; ++m)
                for (std::size_t tt = 0; tt < base[t].forecast.horizon; ++tt) {
                    auto g0 = local_to_global(base[t].anchor,
                                              base[t].forecast.mu_at(m, tt, 0),
                                              base[t].forecast.mu_at(m, tt, 1));
                    auto [gx, gy] = apply_se2(g, g0[0], g0[1]);
                    auto g1 = local_to_global(moved[t].anchor,
                                              moved[t].forecast.mu_at(m, tt, 0),
                                              moved[t].forecast.mu_at(m, tt, 1));
                    worst_mu = std::max({worst_mu, std::abs(gx - g1[0]), std::abs(gy - g1[1])});
                }
        }
    }
    detail = "50 transforms, worst mu drift " + format_num(worst_mu) + ", worst pi drift " +
             format_num(worst_pi);
    return worst_mu < 1e-6 && worst_pi < 1e-6;
}

// --- criterion 4 -----------------------------------------------------------

bool c4_exact_anchors(std::string& detail) {
    bool ok = true;
    std::string fails;

    // empty-frame occupancy equals the lane embeddings exactly
    {
        ModelConfig cfg;
        ParamStore store;
        ParamBuilder pb{store, 3};
        register_encoder_params(pb, cfg);
        register_occupancy_params(pb, cfg);
        Scenario s = generate(gen_spec_preset("default"), 70001);
        Graph g;
        GraphCtx ctx(g, store);
        LaneEncoding lanes = encode_lanes(ctx, s.lanes, cfg);
        AgentEncoding empty = encode_agents(ctx, {}, cfg);
        EdgeSet edges = build_edges(empty.poses, lanes.poses, cfg.radius,
                                    EdgeDirection::AgentToLane);
        NodeId occ = occupancy_frame(ctx, empty.rows, lanes.rows, edges, cfg);
        if (max_abs_diff(g.val(occ), g.val(lanes.rows)) != 0.0) {
            ok = false;
            fails += " empty-frame-occupancy";
        }
    }
    // mode probabilities form a simplex
    {
        ModelConfig cfg;
        HimapModel model = HimapModel::init(cfg, AblationFlags::all_on(), 11);
        Scenario s = generate(gen_spec_preset("default"), 70002);
        for (const auto& p : model.predict(s)) {
            double total = std::accumulate(p.forecast.pi.begin(), p.forecast.pi.end(), 0.0);
            if (std::abs(total - 1.0) > 1e-6) {
                ok = false;
                fails += " simplex";
            }
        }
    }
    // Laplace closed forms
    {
        Forecast f;
        f.k = 1;
        f.horizon = 1;
        f.mu = {0.0, 0.0};
        f.b = {1.0, 1.0};
        f.pi = {1.0};
        if (std::abs(laplace_nll(f, {{0.0, 0.0}}, 0) - 2.0 * std::log(2.0)) > 1e-12) {
            ok = false;
            fails += " nll-2log2";
        }
        f.b = {0.5, 0.5};
        if (std::abs(laplace_nll(f, {{2.0, 0.0}}, 0) - 4.0) > 1e-12) {
            ok = false;
            fails += " nll-4.0";
        }
    }
    // metric anchors: uniform (3,4) offset -> 5/5, MR 1
    {
        Forecast f;
        f.k = 1;
        f.horizon = 12;
        f.mu.assign(24, 0.0);
        f.b.assign(24, 1.0);
        f.pi = {1.0};
        TrajectoryXY gt(12, {3.0, 4.0});
        MetricRow row = metrics({f}, {gt}, 1);
        if (std::abs(row.min_ade - 5.0) > 1e-12 || std::abs(row.min_fde - 5.0) > 1e-12 ||
            row.miss_rate != 1.0) {
            ok = false;
            fails += " metric-3-4";
        }
    }
    // uniform-pi cross entropy
    {
        std::vector<double> uniform(6, 1.0 / 6.0);
        if (std::abs(mode_cls_loss(uniform, 3) - std::log(6.0)) > 1e-9) {
            ok = false;
            fails += " ce-log6";
        }
    }
    detail = ok ? "all exact anchors hold" : ("failed:" + fails);
    return ok;
}

// --- criterion 5 -----------------------------------------------------------

bool c5_oracle_equivalence(std::string& detail) {
    Rng rng(505);
    // metrics + best_mode against scalar brute force
    for (int trial = 0; trial < 100; ++trial) {
        Forecast f;
        f.k = 6;
        f.horizon = 12;
        f.mu.resize(6 * 12 * 2);
        f.b.assign(6 * 12 * 2, 1.0);
        f.pi.resize(6);
        for (auto& x : f.mu) x = rng.uniform(-10.0, 10.0);
        double total = 0.0;
        for (auto& p : f.pi) {
            p = rng.uniform(0.01, 1.0);
            total += p;
        }
        for (auto& p : f.pi) p /= total;
        TrajectoryXY gt(12);
        for (auto& p : gt) p = {rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0)};

        // best_mode oracle
        int best = -1;
        double best_err = 1e300;
        for (std::size_t m = 0; m < 6; ++m) {
            double err = 0.0;
            for (std::size_t t = 0; t < 12; ++t)
                err += std::hypot(f.mu_at(m, t, 0) - gt[t][0], f.mu_at(m, t, 1) - gt[t][1]);
            if (err / 12.0 < best_err) {
                best_err = err / 12.0;
                best = static_cast<int>(m);
            }
        }
        if (best_mode(f, gt) != best) {
            detail = "best_mode mismatch at trial " + std::to_string(trial);
            return false;
        }

        // metrics oracle (K_eval = 6: every mode)
        MetricRow row = metrics({f}, {gt}, 6);
        double o_ade = 1e300, o_fde = 1e300, fde_pi = 0.0;
        for (std::size_t m = 0; m < 6; ++m) {
            double ade = 0.0;
            for (std::size_t t = 0; t < 12; ++t)
                ade += std::hypot(f.mu_at(m, t, 0) - gt[t][0], f.mu_at(m, t, 1) - gt[t][1]);
            o_ade = std::min(o_ade, ade / 12.0);
            double fde = std::hypot(f.mu_at(m, 11, 0) - gt[11][0], f.mu_at(m, 11, 1) - gt[11][1]);
            if (fde < o_fde) {
                o_fde = fde;
                fde_pi = f.pi[m];
            }
        }
        double o_bfde = o_fde + (1.0 - fde_pi) * (1.0 - fde_pi);
        double o_mr = o_fde > 2.0 ? 1.0 : 0.0;
        if (std::abs(row.min_ade - o_ade) > 1e-9 || std::abs(row.min_fde - o_fde) > 1e-9 ||
            std::abs(row.b_min_fde - o_bfde) > 1e-9 || row.miss_rate != o_mr) {
            detail = "metrics mismatch at trial " + std::to_string(trial);
            return false;
        }
    }

    // GRU cell against a scalar loop oracle
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t d = 5;
        ParamStore store;
        ParamBuilder pb{store, 600 + static_cast<std::uint64_t>(trial)};
        register_gru_params(pb, "tm.gru", d);
        for (const char* b : {"tm.gru.bz", "tm.gru.br", "tm.gru.bn"})
            for (double& x : store.at(b).value.v) x = rng.uniform(-0.5, 0.5);
        NdArray x({2, d}), h({2, d});
        for (auto& v : x.v) v = rng.uniform(-1.0, 1.0);
        for (auto& v : h.v) v = rng.uniform(-1.0, 1.0);
        Graph g;
        GraphCtx ctx(g, store);
        const NdArray& out = g.val(gru_cell(ctx, "tm.gru", g.input(x), g.input(h)));
        auto mat = [&](const char* name) -> const NdArray& { return store.at(name).value; };
        for (std::size_t row = 0; row < 2; ++row)
            for (std::size_t j = 0; j < d; ++j) {
                auto dot = [&](const NdArray& m, const NdArray& v) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < d; ++i) acc += v.v[row * d + i] * m.v[i * d + j];
                    return acc;
                };
                double z = 1.0 / (1.0 + std::exp(-(dot(mat("tm.gru.Wz"), x) +
                                                   dot(mat("tm.gru.Uz"), h) +
                                                   mat("tm.gru.bz").v[j])));
                double r = 1.0 / (1.0 + std::exp(-(dot(mat("tm.gru.Wr"), x) +
                                                   dot(mat("tm.gru.Ur"), h) +
                                                   mat("tm.gru.br").v[j])));
                double nn = std::tanh(dot(mat("tm.gru.Wn"), x) + r * dot(mat("tm.gru.Un"), h) +
                                      mat("tm.gru.bn").v[j]);
                double expect = (1.0 - z) * nn + z * h.v[row * d + j];
                if (std::abs(out.v[row * d + j] - expect) > 1e-9) {
                    detail = "gru mismatch at trial " + std::to_string(trial);
                    return false;
                }
            }
    }

    // edge building against the all-pairs filter
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Pose2> agents, lanes;
        std::size_t na = rng.uniform_int(6) + 1, nl = rng.uniform_int(10) + 1;
        for (std::size_t i = 0; i < na; ++i)
            agents.push_back({rng.uniform(-60.0, 60.0), rng.uniform(-60.0, 60.0), 0.0});
        for (std::size_t i = 0; i < nl; ++i)
            lanes.push_back({rng.uniform(-60.0, 60.0), rng.uniform(-60.0, 60.0), 0.0});
        double r = rng.uniform(5.0, 80.0);
        EdgeSet set = build_edges(agents, lanes, r, EdgeDirection::AgentToLane);
        std::size_t expect = 0;
        for (const auto& a : agents)
            for (const auto& l : lanes)
                if (std::sqrt((a.x - l.x) * (a.x - l.x) + (a.y - l.y) * (a.y - l.y)) <= r) ++expect;
        if (set.edges.size() != expect) {
            detail = "edge count mismatch at trial " + std::to_string(trial);
            return false;
        }
    }
    detail = "metrics, best_mode, GRU cell, and edge building match brute force on 100 instances each";
    return true;
}

// --- criterion 6 -----------------------------------------------------------

bool c6_desk_scale_learning(std::string& detail) {
    auto t0 = Clock::now();
    g.full_cfg = desk_config();
    GenSpec spec = g.full_cfg.gen;
    g.train_corpus = corpus_of(500, 100000, spec);
    g.heldout = corpus_of(100, 200000, spec);

    TrainedHimap trained =
        train_himap(g.train_corpus, g.full_cfg, AblationFlags::all_on(), himap_ckpt_path());
    write_train_log_csv(trained.result.log, (fs::path(g_out) / "himap_train_log.csv").string());
    g.himap = std::move(trained.model);

    EvalResult ev = evaluate(*g.himap, g.heldout);
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    double ratio = ev.recon_hi_ade / ev.zero_disp_recon_ade;
    detail = "recon_hi_ADE " + format_num(ev.recon_hi_ade) + " vs zero-displacement " +
             format_num(ev.zero_disp_recon_ade) + " (ratio " + format_num(ratio) + "), minADE_6 " +
             format_num(ev.report.k6.min_ade) + ", " + format_num(secs) + " s";
    return ratio < 0.30 && secs < 1800.0;
}

// --- criterion 7 -----------------------------------------------------------

bool c7_ablation_direction(std::string& detail) {
    GenSpec spec = gen_spec_preset("default");
    std::vector<Scenario> train_c = corpus_of(150, 20000, spec);
    std::vector<Scenario> eval_c = corpus_of(60, 21000, spec);
    AppConfig cfg;
    cfg.model.d_model = 16;
    cfg.model.heads = 4;
    cfg.train.schedule = {60, 900, 3e-4, 1e-6};
    cfg.train.batch_size = 4;
    cfg.train.log_interval = 900;
    cfg.train.val_fraction = 0.0;

    std::vector<std::pair<std::string, AblationFlags>> rows{
        {"all_off", AblationFlags::all_off()}, {"all_on", AblationFlags::all_on()}};
    std::vector<AblationRow> table = run_ablation(train_c, eval_c, cfg, rows, {1, 2, 3});
    write_ablation_csv(table, (fs::path(g_out) / "ablation_endpoints.csv").string());

    int ade_wins = 0, recon_wins = 0;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const AblationRow *off = nullptr, *on = nullptr;
        for (const auto& r : table) {
            if (r.seed != seed) continue;
            (r.name == "all_off" ? off : on) = &r;
        }
        if (on->min_ade6 < off->min_ade6) ++ade_wins;
        if (on->recon_hi_ade < off->recon_hi_ade) ++recon_wins;
    }
    detail = "full beats all-off on minADE_6 in " + std::to_string(ade_wins) +
             "/3 seeds and on recon_hi_ADE in " + std::to_string(recon_wins) + "/3 seeds";
    return ade_wins >= 2 && recon_wins >= 2;
}

// --- criterion 8 -----------------------------------------------------------

bool c8_sweep_shape(std::string& detail) {
    ensure_shared();
    // The baseline curve comes from the tracking-trained reference model
    // evaluated with progressively fewer ID'd frames available.
    TrainedBaseline baseline = train_baseline(BaselineKind::parse("tracked_full"),
                                              g.train_corpus, g.full_cfg,
                                              (fs::path(g_out) / "baseline_full.bin").string());
    std::vector<int> ns;
    for (int n = 0; n <= g.heldout.front().t_obs - 1; ++n) ns.push_back(n);
    SweepResult sweep = run_tracking_sweep(*g.himap, baseline.model, g.heldout, ns);

    std::string sweep_csv = (fs::path(g_out) / "sweep.csv").string();
    write_sweep_csv(sweep.rows, sweep_csv);
    write_text_file((fs::path(g_out) / "sweep_summary.txt").string(), sweep.summary);
    plot_sweep_csv(sweep_csv, (fs::path(g_out) / "fig_sweep.svg").string());

    // (a) constant himap rows
    double h_ade = -1.0, h_fde = -1.0;
    bool constant = true;
    std::vector<double> base_ade;
    for (const auto& row : sweep.rows) {
        if (row.model == "himap") {
            if (h_ade < 0) {
                h_ade = row.min_ade6;
                h_fde = row.min_fde6;
            }
            constant = constant && row.min_ade6 == h_ade && row.min_fde6 == h_fde;
        } else {
            base_ade.push_back(row.min_ade6);
        }
    }
    // (b) baseline non-increasing within 5% of the running minimum
    bool monotone = true;
    double running_min = base_ade.front();
    for (double x : base_ade) {
        if (x > 1.05 * running_min) monotone = false;
        running_min = std::min(running_min, x);
    }
    // (c) crossover reported
    bool crossover = sweep.crossover_ade.has_value() || sweep.crossover_fde.has_value();
    bool reported = sweep.summary.find("near n =") != std::string::npos ||
                    sweep.summary.find("never beats") != std::string::npos;

    detail = std::string("himap rows constant: ") + (constant ? "yes" : "NO") +
             "; baseline monotone within 5%: " + (monotone ? "yes" : "NO") + "; crossover: " +
             (sweep.crossover_ade ? ("ADE at n=" + format_num(*sweep.crossover_ade)) : "no ADE") +
             ", " +
             (sweep.crossover_fde ? ("FDE at n=" + format_num(*sweep.crossover_fde)) : "no FDE");
    return constant && monotone && crossover && reported;
}

// --- criterion 9 -----------------------------------------------------------

bool c9_reproducibility(std::string& detail) {
    // corpus bytes
    GenSpec spec = gen_spec_preset("default");
    std::string a, b;
    for (std::uint64_t i = 0; i < 50; ++i) a += scenario_to_json(generate(spec, 300 + i)).dump() + "\n";
    for (std::uint64_t i = 0; i < 50; ++i) b += scenario_to_json(generate(spec, 300 + i)).dump() + "\n";
    if (a != b) {
        detail = "corpus bytes differ across identical generate() calls";
        return false;
    }

    // training trajectory at 64-bit
    std::vector<Scenario> corpus = corpus_of(40, 77000, spec);
    AppConfig cfg;
    cfg.train.schedule = {20, 120, 3e-4, 1e-6};
    cfg.train.batch_size = 8;
    cfg.train.log_interval = 20;
    cfg.train.val_fraction = 0.1;
    TrainedHimap r1 = train_himap(corpus, cfg, AblationFlags::all_on());
    TrainedHimap r2 = train_himap(corpus, cfg, AblationFlags::all_on());
    if (r1.result.log.size() != r2.result.log.size()) {
        detail = "training logs differ in length";
        return false;
    }
    for (std::size_t i = 0; i < r1.result.log.size(); ++i)
        if (r1.result.log[i].total != r2.result.log[i].total ||
            r1.result.log[i].recon_ade != r2.result.log[i].recon_ade) {
            detail = "training trajectories diverge at log row " + std::to_string(i);
            return false;
        }
    for (std::size_t i = 0; i < r1.model.params.entries.size(); ++i)
        if (max_abs_diff(r1.model.params.entries[i].value, r2.model.params.entries[i].value) !=
            0.0) {
            detail = "final parameters differ: " + r1.model.params.entries[i].name;
            return false;
        }

    // evaluation CSVs
    std::vector<Scenario> eval_c = corpus_of(20, 88000, spec);
    EvalResult e1 = evaluate(r1.model, eval_c);
    EvalResult e2 = evaluate(r1.model, eval_c);
    std::string m1 = join_csv(e1.report.csv_row());
    std::string m2 = join_csv(e2.report.csv_row());
    std::string p1, p2;
    for (const auto& r : e1.per_scenario) p1 += join_csv(r.csv_row()) + "\n";
    for (const auto& r : e2.per_scenario) p2 += join_csv(r.csv_row()) + "\n";
    if (m1 != m2 || p1 != p2) {
        detail = "evaluation CSVs differ across identical runs";
        return false;
    }
    detail = "corpus bytes, 120-step training trajectory, and evaluation CSVs identical";
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--out" && i + 1 < argc) {
            g_out = argv[++i];
        } else if (arg == "--only" && i + 1 < argc) {
            for (const auto& tok : split(argv[++i], ','))
                if (!trim(tok).empty()) only.insert(std::stoi(tok));
        } else {
            std::fprintf(stderr, "usage: %s [--out DIR] [--only 1,2,...]\n", argv[0]);
            return 64;
        }
    }
    fs::create_directories(g_out);

    struct Criterion {
        int id;
        const char* name;
        std::function<bool(std::string&)> run;
    };
    std::vector<Criterion> criteria{
        {1, "gradient integrity", c1_gradient_integrity},
        {2, "identity-freeness", c2_identity_freeness},
        {3, "SE(2) equivariance", c3_se2_equivariance},
        {4, "exact anchors", c4_exact_anchors},
        {5, "oracle equivalence", c5_oracle_equivalence},
        {6, "desk-scale learning", c6_desk_scale_learning},
        {7, "ablation direction", c7_ablation_direction},
        {8, "sweep shape", c8_sweep_shape},
        {9, "reproducibility", c9_reproducibility},
    };

    int failures = 0;
    for (auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        auto t0 = Clock::now();
        std::string detail;
        bool pass = false;
        try {
            pass = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        std::printf("[%s] criterion %d (%s): %s (%.1f s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                    detail.c_str(), secs);
        std::fflush(stdout);
        if (!pass) ++failures;
    }
    return failures;
}
