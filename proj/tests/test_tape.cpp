// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Computation-engine tests: exact anchors, finite-difference gradient checks
// for every op kind, and the softmax / scatter-add invariants.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "himap/rng.hpp"
#include "himap/tape.hpp"

using namespace himap;

namespace {

NdArray random_array(Shape shape, Rng& rng, double lo = -1.5, double hi = 1.5) {
    NdArray a(std::move(shape));
    for (double& x : a.v) x = rng.uniform(lo, hi);
    return a;
}

}  // namespace

TEST_CASE("elementwise forward anchors") {
    Graph g;
    NodeId a = g.input(NdArray({1}, {2.0}));
    NodeId b = g.input(NdArray({1}, {3.0}));
    CHECK(g.val(g.mul(a, b)).v[0] == 6.0);

    NodeId logits = g.input(NdArray({3}, {1.0, 1.0, 1.0}));
    const NdArray& sm = g.val(g.softmax(logits, 0));
    for (double x : sm.v) CHECK(x == Catch::Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("layer-norm matches hand computation with the documented epsilon") {
    // Oracle: (x - mean) / sqrt(var + 1e-5) computed by hand for [1,2,3].
    double mean = 2.0;
    double var = ((1 - 2.0) * (1 - 2.0) + 0.0 + (3 - 2.0) * (3 - 2.0)) / 3.0;
    double inv = 1.0 / std::sqrt(var + 1e-5);
    Graph g;
    NodeId x = g.input(NdArray({3}, {1.0, 2.0, 3.0}));
    const NdArray& y = g.val(g.layer_norm(x, 0));
    CHECK(y.v[0] == Catch::Approx((1.0 - mean) * inv).epsilon(1e-12));
    CHECK(y.v[1] == Catch::Approx(0.0).margin(1e-12));
    CHECK(y.v[2] == Catch::Approx((3.0 - mean) * inv).epsilon(1e-12));
    double m = (y.v[0] + y.v[1] + y.v[2]) / 3.0;
    CHECK(m == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("backward anchors") {
    SECTION("d(x*x)/dx = 2x at x=3") {
        ParamStore store;
        store.add("x", NdArray::scalar(3.0));
        Graph g;
        NodeId x = g.param("x", store.at("x").value);
        NodeId loss = g.mul(x, x);
        GradientMap gm = g.backward(loss, store);
        CHECK(gm.at(store, "x").v[0] == Catch::Approx(6.0).epsilon(1e-14));
    }
    SECTION("sum(softmax(z)) has zero gradient for any z") {
        Rng rng(11);
        for (int trial = 0; trial < 5; ++trial) {
            ParamStore store;
            store.add("z", random_array({4}, rng, -3.0, 3.0));
            Graph g;
            NodeId z = g.param("z", store.at("z").value);
            NodeId loss = g.sum(g.softmax(z, 0));
            GradientMap gm = g.backward(loss, store);
            for (double x : gm.at(store, "z").v) CHECK(std::abs(x) < 1e-12);
        }
    }
    SECTION("sum(A*B) gradients match central differences") {
        Rng rng(7);
        std::vector<NdArray> inputs{random_array({3, 4}, rng), random_array({4, 2}, rng)};
        double err = grad_check(
            [](Graph& g, const std::vector<NodeId>& in) { return g.sum(g.matmul(in[0], in[1])); },
            inputs, {.eps = 1e-5});
        CHECK(err < 1e-6);
    }
}

TEST_CASE("grad_check identity is exactly zero") {
    // Inputs chosen so x +/- eps is exact and the central difference is
    // computed without rounding: the analytic and FD gradients are both 1.0.
    std::vector<NdArray> inputs{NdArray({2}, {0.0, 0.0})};
    double err =
        grad_check([](Graph& g, const std::vector<NodeId>& in) { return g.sum(in[0]); }, inputs);
    CHECK(err == 0.0);
}

TEST_CASE("every op kind passes finite-difference checks over 20 seeds") {
    // Property required of the engine: analytic gradients vs central
    // differences (step 1e-5) within rel. tolerance 1e-4 on random inputs.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        // Offsets keep log/div/abs/relu away from their singular points.
        NdArray m34 = random_array({3, 4}, rng);
        NdArray m42 = random_array({4, 2}, rng);
        NdArray v4 = random_array({4}, rng);
        NdArray pos34 = random_array({3, 4}, rng, 0.5, 2.5);
        NdArray far34 = random_array({3, 4}, rng, 0.2, 1.7);

        auto check = [&](const char* what, std::vector<NdArray> inputs,
                         std::function<NodeId(Graph&, const std::vector<NodeId>&)> f) {
            INFO("op " << what << " seed " << seed);
            CHECK(grad_check(f, inputs) < 1e-4);
        };

        check("matmul", {m34, m42},
              [](Graph& g, const std::vector<NodeId>& in) { return g.sum(g.matmul(in[0], in[1])); });
        check("add", {m34, m34},
              [](Graph& g, const std::vector<NodeId>& in) {
                  return g.sum(g.mul(g.add(in[0], in[1]), in[0]));
              });
        check("add-bcast-last", {m34, v4},
              [](Graph& g, const std::vector<NodeId>& in) {
                  return g.sum(g.mul(g.add(in[0], in[1]), in[0]));
              });
        check("sub", {m34, m34},
              [](Graph& g, const std::vector<NodeId>& in) {
                  return g.sum(g.mul(g.sub(in[0], in[1]), in[1]));
              });
        check("elemwise-mul", {m34, m34},
              [](Graph& g, const std::vector<NodeId>& in) { return g.sum(g.mul(in[0], in[1])); });
        check("elemwise-div", {m34, pos34},
              [](Graph& g, const std::vector<NodeId>& in) { return g.sum(g.div(in[0], in[1])); });
        check("concat", {m34, m34},
              [](Graph& g, const std::vector<NodeId>& in) {
                  return g.sum(g.mul(g.concat({in[0], in[1]}, 1), g.concat({in[1], in[0]}, 1)));
              });
        check("slice", {m34},
              [](Graph& g, const std::vector<NodeId>& in) {
                  NodeId s = g.slice(in[0], 1, 1, 3);
                  return g.sum(g.mul(s, s));
              });
        check("reshape", {m34},
              [](Graph& g, const std::vector<NodeId>& in) {
                  NodeId r = g.reshape(in[0], {2, 6});
                  return g.sum(g.mul(r, r));
              });
        check("sigmoid", {m34},
              [](Graph& g, const std::vector<NodeId>& in) { return g.sum(g.sigmoid(in[0])); });
        check("tanh", {m34},
              [](Graph& g, const std::vector<NodeId>& in) { return g.sum(g.tanh(in[0])); });
        check("relu", {far34},
              [](Graph& g, const std::vector<NodeId>& in) { return g.sum(g.relu(in[0])); });
        check("softplus", {m34},
              [](Graph& g, const std::vector<NodeId>& in) { return g.sum(g.softplus(in[0])); });
        check("exp", {m34},
              [](Graph& g, const std::vector<NodeId>& in) { return g.sum(g.exp(in[0])); });
        check("log", {pos34},
              [](Graph& g, const std::vector<NodeId>& in) { return g.sum(g.log(in[0])); });
        check("abs", {far34},
              [](Graph& g, const std::vector<NodeId>& in) { return g.sum(g.abs(in[0])); });
        check("sin", {m34},
              [](Graph& g, const std::vector<NodeId>& in) { return g.sum(g.sin(in[0])); });
        check("cos", {m34},
              [](Graph& g, const std::vector<NodeId>& in) { return g.sum(g.cos(in[0])); });
        check("scale", {m34},
              [](Graph& g, const std::vector<NodeId>& in) { return g.sum(g.scale(in[0], -2.5)); });
        check("softmax", {m34},
              [](Graph& g, const std::vector<NodeId>& in) {
                  return g.sum(g.mul(g.softmax(in[0], 1), in[0]));
              });
        check("layer-norm", {m34},
              [](Graph& g, const std::vector<NodeId>& in) {
                  return g.sum(g.mul(g.layer_norm(in[0], 1), in[0]));
              });
        check("sum-axis", {m34},
              [](Graph& g, const std::vector<NodeId>& in) {
                  NodeId s = g.sum(in[0], 0);
                  return g.sum(g.mul(s, s));
              });
        check("mean-axis", {m34},
              [](Graph& g, const std::vector<NodeId>& in) {
                  NodeId s = g.mean(in[0], 1);
                  return g.sum(g.mul(s, s));
              });
        check("gather-rows", {m34},
              [](Graph& g, const std::vector<NodeId>& in) {
                  NodeId s = g.gather_rows(in[0], {2, 0, 2});
                  return g.sum(g.mul(s, s));
              });
        check("scatter-add-rows", {m34},
              [](Graph& g, const std::vector<NodeId>& in) {
                  NodeId s = g.scatter_add_rows(in[0], {1, 0, 1}, 2);
                  return g.sum(g.mul(s, s));
              });
    }
}

TEST_CASE("softmax rows lie in (0,1) and sum to 1 within 1e-9") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        NdArray logits = random_array({5, 7}, rng, -20.0, 20.0);
        Graph g;
        const NdArray& sm = g.val(g.softmax(g.input(logits), 1));
        for (std::size_t r = 0; r < 5; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < 7; ++c) {
                double p = sm.at2(r, c);
                CHECK(p > 0.0);
                CHECK(p < 1.0);
                s += p;
            }
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("scatter-add-rows is permutation invariant within 1e-12") {
    // The implementation accumulates sequentially in the order given, so a
    // permuted edge list may reassociate the sums; the documented bound is
    // 1e-12, not bitwise equality.
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        std::size_t e = 24, m = 5, d = 6;
        NdArray rows = random_array({e, d}, rng);
        std::vector<int> idx(e);
        for (auto& i : idx) i = static_cast<int>(rng.uniform_int(m));

        Graph g;
        const NdArray& base = g.val(g.scatter_add_rows(g.input(rows), idx, m));

        auto perm = rng.permutation(e);
        NdArray rows_p({e, d});
        std::vector<int> idx_p(e);
        for (std::size_t k = 0; k < e; ++k) {
            idx_p[k] = idx[perm[k]];
            for (std::size_t c = 0; c < d; ++c) rows_p.at2(k, c) = rows.at2(perm[k], c);
        }
        Graph g2;
        const NdArray& permuted = g2.val(g2.scatter_add_rows(g2.input(rows_p), idx_p, m));
        CHECK(max_abs_diff(base, permuted) < 1e-12);
    }
}

TEST_CASE("shape errors carry the op name and offending shapes") {
    Graph g;
    NodeId a = g.input(NdArray({2, 3}));
    NodeId b = g.input(NdArray({4, 2}));
    CHECK_THROWS_WITH(g.matmul(a, b),
                      Catch::Matchers::ContainsSubstring("matmul") &&
                          Catch::Matchers::ContainsSubstring("[2,3]") &&
                          Catch::Matchers::ContainsSubstring("[4,2]"));
    CHECK_THROWS_WITH(g.add(a, b), Catch::Matchers::ContainsSubstring("add"));
    CHECK_THROWS_WITH(g.backward(a, ParamStore{}),
                      Catch::Matchers::ContainsSubstring("scalar"));
}

TEST_CASE("non-finite intermediates are reported with node identity when checking") {
    Graph g;
    g.check_finite = true;
    NodeId a = g.input(NdArray({1}, {-1.0}));
    CHECK_THROWS_WITH(g.log(a), Catch::Matchers::ContainsSubstring("non-finite") &&
                                    Catch::Matchers::ContainsSubstring("log"));
}

TEST_CASE("empty edge arrays flow through gather/scatter/matmul") {
    Graph g;
    NodeId empty = g.input(NdArray({0, 4}));
    NodeId w = g.input(random_array({4, 4}, *std::make_unique<Rng>(3)));
    CHECK(g.val(g.matmul(empty, w)).shape == Shape{0, 4});
    CHECK(g.val(g.gather_rows(w, {})).shape == Shape{0, 4});
    const NdArray& scat = g.val(g.scatter_add_rows(empty, {}, 3));
    CHECK(scat.shape == Shape{3, 4});
    for (double x : scat.v) CHECK(x == 0.0);
}

TEST_CASE("gradients are zero for parameters unreachable from the loss") {
    ParamStore store;
    store.add("used", NdArray::scalar(2.0));
    store.add("unused", NdArray({3}, {1.0, 2.0, 3.0}));
    Graph g;
    NodeId x = g.param("used", store.at("used").value);
    GradientMap gm = g.backward(g.mul(x, x), store);
    CHECK(gm.at(store, "used").v[0] == 4.0);
    for (double v : gm.at(store, "unused").v) CHECK(v == 0.0);
}
