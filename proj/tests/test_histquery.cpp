// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "himap/histquery.hpp"
#include "himap/rng.hpp"

using namespace himap;

namespace {

ParamStore gru_store(std::size_t d, std::uint64_t seed = 5) {
    ParamStore store;
    ParamBuilder pb{store, seed};
    register_gru_params(pb, "tm.gru", d);
    return store;
}

NdArray random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    NdArray a(std::move(shape));
    for (double& x : a.v) x = rng.uniform(lo, hi);
    return a;
}

// Independent scalar-loop GRU oracle reading the same weights.
NdArray gru_oracle(const ParamStore& store, const NdArray& x, const NdArray& h) {
    std::size_t n = x.shape[0], d = x.shape[1];
    auto W = [&](const char* name) -> const NdArray& { return store.at(name).value; };
    NdArray out({n, d});
    for (std::size_t row = 0; row < n; ++row) {
        for (std::size_t j = 0; j < d; ++j) {
            auto cell = [&](const NdArray& m, const NdArray& v) {
                double acc = 0.0;
                for (std::size_t i = 0; i < d; ++i) acc += v.v[row * d + i] * m.v[i * d + j];
                return acc;
            };
            double z = 1.0 / (1.0 + std::exp(-(cell(W("tm.gru.Wz"), x) + cell(W("tm.gru.Uz"), h) +
                                               W("tm.gru.bz").v[j])));
            double r = 1.0 / (1.0 + std::exp(-(cell(W("tm.gru.Wr"), x) + cell(W("tm.gru.Ur"), h) +
                                               W("tm.gru.br").v[j])));
            double nn = std::tanh(cell(W("tm.gru.Wn"), x) + r * cell(W("tm.gru.Un"), h) +
                                  W("tm.gru.bn").v[j]);
            out.v[row * d + j] = (1.0 - z) * nn + z * h.v[row * d + j];
        }
    }
    return out;
}

}  // namespace

TEST_CASE("gru cell anchors") {
    std::size_t d = 8;
    ParamStore store = gru_store(d);

    SECTION("zero input, zero hidden, zero biases gives zero") {
        Graph g;
        GraphCtx ctx(g, store);
        NodeId out = gru_cell(ctx, "tm.gru", g.input(NdArray({2, d})), g.input(NdArray({2, d})));
        for (double x : g.val(out).v) CHECK(x == 0.0);
    }
    SECTION("saturated update gate carries the hidden state") {
        ParamStore carry = store;
        for (double& x : carry.at("tm.gru.bz").value.v) x = 40.0;  // z ~ 1
        Graph g;
        GraphCtx ctx(g, carry);
        Rng rng(3);
        NdArray h = random_array({2, d}, rng);
        NodeId out =
            gru_cell(ctx, "tm.gru", g.input(random_array({2, d}, rng)), g.input(h));
        CHECK(max_abs_diff(g.val(out), h) < 1e-6);
    }
    SECTION("shape mismatch is rejected") {
        Graph g;
        GraphCtx ctx(g, store);
        CHECK_THROWS_WITH(
            gru_cell(ctx, "tm.gru", g.input(NdArray({2, d})), g.input(NdArray({3, d}))),
            Catch::Matchers::ContainsSubstring("gru_cell"));
    }
}

TEST_CASE("gru cell matches the scalar oracle and its gradient checks out") {
    std::size_t d = 6;
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        ParamStore store = gru_store(d, 100 + static_cast<std::uint64_t>(trial));
        // biases random too (registration starts them at zero)
        for (const char* b : {"tm.gru.bz", "tm.gru.br", "tm.gru.bn"})
            for (double& x : store.at(b).value.v) x = rng.uniform(-0.5, 0.5);
        NdArray x = random_array({3, d}, rng);
        NdArray h = random_array({3, d}, rng);
        Graph g;
        GraphCtx ctx(g, store);
        NodeId out = gru_cell(ctx, "tm.gru", g.input(x), g.input(h));
        CHECK(max_abs_diff(g.val(out), gru_oracle(store, x, h)) < 1e-12);
    }

    // gradient check through all weights and the inputs
    ParamStore store = gru_store(d, 55);
    Rng grng(21);
    store.add("x", random_array({2, d}, grng));
    store.add("h", random_array({2, d}, grng));
    NdArray w_out = random_array({2, d}, grng);
    double err = grad_check_params(
        store,
        [&](Graph& g) {
            GraphCtx ctx(g, store);
            NodeId out = gru_cell(ctx, "tm.gru", ctx.P("x"), ctx.P("h"));
            return g.sum(g.mul(out, g.input(w_out)));
        },
        {.eps = 1e-5});
    CHECK(err < 1e-5);
}

TEST_CASE("temporal map equals hand-unrolled GRU application") {
    std::size_t d = 8;
    ModelConfig cfg;
    cfg.d_model = static_cast<int>(d);
    cfg.heads = 4;
    ParamStore store = gru_store(d, 77);
    Rng rng(31);
    std::vector<NdArray> frames{random_array({2, d}, rng), random_array({2, d}, rng),
                                random_array({2, d}, rng)};

    Graph g;
    GraphCtx ctx(g, store);
    std::vector<NodeId> stack;
    for (const auto& f : frames) stack.push_back(g.input(f));
    NodeId tm = temporal_map(ctx, stack, cfg);

    NdArray h({2, d});
    for (const auto& f : frames) h = gru_oracle(store, f, h);
    CHECK(max_abs_diff(g.val(tm), h) < 1e-12);

    SECTION("lanes are processed independently: permuting rows permutes outputs") {
        Graph g2;
        GraphCtx ctx2(g2, store);
        std::vector<NodeId> swapped;
        for (const auto& f : frames) {
            NdArray sw({2, d});
            for (std::size_t j = 0; j < d; ++j) {
                sw.v[j] = f.v[d + j];
                sw.v[d + j] = f.v[j];
            }
            swapped.push_back(g2.input(sw));
        }
        const NdArray& out = g2.val(temporal_map(ctx2, swapped, cfg));
        for (std::size_t j = 0; j < d; ++j) {
            CHECK(out.v[j] == h.v[d + j]);
            CHECK(out.v[d + j] == h.v[j]);
        }
    }
    SECTION("single zero frame with zero biases maps to zero") {
        Graph g3;
        GraphCtx ctx3(g3, store);
        std::vector<NodeId> zero{g3.input(NdArray({2, d}))};
        for (double x : g3.val(temporal_map(ctx3, zero, cfg)).v) CHECK(x == 0.0);
    }
}

namespace {

ParamStore hq_store(const ModelConfig& cfg, const AblationFlags& flags, std::uint64_t seed = 9) {
    ParamStore store;
    ParamBuilder pb{store, seed};
    register_histquery_params(pb, cfg, flags);
    return store;
}

}  // namespace

TEST_CASE("init_query fallbacks") {
    ModelConfig cfg;
    AblationFlags flags;
    ParamStore store = hq_store(cfg, flags);
    Rng rng(41);
    std::size_t d = static_cast<std::size_t>(cfg.d_model);
    NdArray agent = random_array({1, d}, rng);
    NdArray map_rows = random_array({4, d}, rng);

    SECTION("no lanes in radius keeps the agent embedding") {
        Graph g;
        GraphCtx ctx(g, store);
        EdgeList empty;
        empty.n_src = 4;
        empty.n_dst = 1;
        NodeId q = init_query(ctx, g.input(agent), g.input(map_rows), empty, cfg);
        CHECK(max_abs_diff(g.val(q), agent) == 0.0);
    }
    SECTION("saturating the gate towards zero recovers the agent embedding") {
        ParamStore sat = store;
        for (double& x : sat.at("hq.init.gate.2.b").value.v) x = -40.0;
        Graph g;
        GraphCtx ctx(g, sat);
        EdgeSet set = build_edges({Pose2{1.0, 0.0, 0.2}}, {Pose2{3.0, 1.0, 0.0}}, 50.0,
                                  EdgeDirection::LaneToAgent);
        EdgeList el = to_edge_list(set, cfg.descriptor_fourier());
        NodeId q = init_query(ctx, g.input(agent), g.input(NdArray({1, d},
                              std::vector<double>(map_rows.v.begin(), map_rows.v.begin() + d))),
                              el, cfg);
        CHECK(max_abs_diff(g.val(q), agent) < 1e-6);
    }
}

TEST_CASE("unroll contract") {
    ModelConfig cfg;
    AblationFlags flags;
    ParamStore store = hq_store(cfg, flags);
    Rng rng(51);
    std::size_t d = static_cast<std::size_t>(cfg.d_model);

    EdgeSet set = build_edges({Pose2{0.0, 0.0, 0.0}},
                              {Pose2{5.0, 2.0, 0.3}, Pose2{-3.0, 8.0, -1.0}}, 50.0,
                              EdgeDirection::LaneToAgent);
    EdgeList el = to_edge_list(set, cfg.descriptor_fourier());

    SECTION("zero steps returns the initial query and an empty history") {
        Graph g;
        GraphCtx ctx(g, store);
        NodeId q0 = g.input(random_array({1, d}, rng));
        UnrollResult ur = unroll_history(ctx, q0, {}, {}, cfg);
        CHECK(ur.final_query == q0);
        CHECK(g.val(ur.displacements).shape == Shape{0, 2});
    }
    SECTION("zero displacement head emits zero displacements") {
        ParamStore zeroed = store;
        for (double& x : zeroed.at("hq.disp.2.W").value.v) x = 0.0;
        Graph g;
        GraphCtx ctx(g, zeroed);
        std::vector<NodeId> sources{g.input(random_array({2, d}, rng)),
                                    g.input(random_array({2, d}, rng))};
        UnrollResult ur = unroll_history(ctx, g.input(random_array({1, d}, rng)), sources,
                                         {&el, &el}, cfg);
        CHECK(g.val(ur.displacements).shape == Shape{2, 2});
        for (double x : g.val(ur.displacements).v) CHECK(x == 0.0);
    }
    SECTION("reversing the frame order changes the output") {
        std::vector<NdArray> srcs{random_array({2, d}, rng), random_array({2, d}, rng),
                                  random_array({2, d}, rng)};
        NdArray q0 = random_array({1, d}, rng);
        auto run = [&](bool reversed) {
            Graph g;
            GraphCtx ctx(g, store);
            std::vector<NodeId> sources;
            for (std::size_t i = 0; i < srcs.size(); ++i)
                sources.push_back(g.input(srcs[reversed ? srcs.size() - 1 - i : i]));
            UnrollResult ur =
                unroll_history(ctx, g.input(q0), sources, {&el, &el, &el}, cfg);
            return g.val(ur.displacements);
        };
        CHECK(max_abs_diff(run(false), run(true)) > 1e-8);
    }
    SECTION("one shared parameter set serves every step") {
        std::size_t step_params = 0;
        for (const auto& e : store.entries)
            if (e.name.rfind("hq.step.", 0) == 0 || e.name.rfind("hq.disp.", 0) == 0)
                ++step_params;
        CHECK(step_params > 0);
        ModelConfig longer = cfg;
        longer.t_hist = 30;
        ParamStore store30 = hq_store(longer, flags);
        CHECK(store30.entries.size() == store.entries.size());
        for (std::size_t i = 0; i < store.entries.size(); ++i)
            CHECK(store30.entries[i].name == store.entries[i].name);
    }
}

TEST_CASE("unroll frame clamping reuses the oldest frame") {
    CHECK(unroll_frame_index(10, 1) == 8u);
    CHECK(unroll_frame_index(10, 9) == 0u);
    CHECK(unroll_frame_index(10, 10) == 0u);  // clamped
    CHECK(unroll_frame_index(10, 15) == 0u);
}
