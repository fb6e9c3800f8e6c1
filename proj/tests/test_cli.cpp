// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the command-line surface, run against the built
// binary (path injected by the build).

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>

#include "himap/plot.hpp"
#include "himap/scenario.hpp"
#include "himap/trainkit.hpp"

using namespace himap;
namespace fs = std::filesystem;

namespace {

#ifndef HIMAP_CLI_PATH
#error "HIMAP_CLI_PATH must be defined by the build"
#endif

const std::string kCli = HIMAP_CLI_PATH;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("himap_cli_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    std::string s(const std::string& rel) const { return (path / rel).string(); }
};

int run(const std::string& args) {
    std::string cmd = kCli + " " + args + " >/dev/null 2>/dev/null";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::string kSmall =
    " --set model.d_model=16 --set model.heads=4 --set train.total_steps=8"
    " --set train.warmup_steps=2 --set train.log_interval=4";

}  // namespace

TEST_CASE("gen writes the requested number of scenario documents plus a manifest") {
    TempDir tmp;
    REQUIRE(run("gen --spec default --count 17 --seed 7 --out " + tmp.s("d")) == 0);
    auto corpus = read_corpus(tmp.s("d/corpus.ndjson"));
    CHECK(corpus.size() == 17);
    CHECK(fs::exists(tmp.s("d/manifest.json")));

    SECTION("same seed regenerates byte-identical corpora") {
        REQUIRE(run("gen --spec default --count 17 --seed 7 --out " + tmp.s("d2")) == 0);
        CHECK(read_text_file(tmp.s("d/corpus.ndjson")) == read_text_file(tmp.s("d2/corpus.ndjson")));
    }
}

TEST_CASE("unknown flags are usage errors (exit 1)") {
    TempDir tmp;
    CHECK(run("gen --count 3 --out " + tmp.s("x") + " --definitely-not-a-flag") == 1);
    CHECK(run("definitely-not-a-command") == 1);
    CHECK(run("eval --ckpt " + tmp.s("missing.bin") + " --corpus " + tmp.s("missing.ndjson") +
              " --out " + tmp.s("y")) == 2);
}

TEST_CASE("train/eval round trip is reproducible byte for byte") {
    TempDir tmp;
    REQUIRE(run("gen --spec default --count 12 --seed 5 --out " + tmp.s("d")) == 0);
    std::uint64_t corpus_hash = fnv1a64(read_text_file(tmp.s("d/corpus.ndjson")));
    REQUIRE(run("train --corpus " + tmp.s("d/corpus.ndjson") + " --out " + tmp.s("t") +
                " --seed 3" + kSmall) == 0);
    REQUIRE(fs::exists(tmp.s("t/checkpoint.bin")));
    REQUIRE(fs::exists(tmp.s("t/train_log.csv")));

    REQUIRE(run("eval --ckpt " + tmp.s("t/checkpoint.bin") + " --corpus " + tmp.s("d/corpus.ndjson") +
                " --out " + tmp.s("e1")) == 0);
    REQUIRE(run("eval --ckpt " + tmp.s("t/checkpoint.bin") + " --corpus " + tmp.s("d/corpus.ndjson") +
                " --out " + tmp.s("e2")) == 0);
    CHECK(read_text_file(tmp.s("e1/metrics.csv")) == read_text_file(tmp.s("e2/metrics.csv")));
    CHECK(read_text_file(tmp.s("e1/per_scenario.csv")) ==
          read_text_file(tmp.s("e2/per_scenario.csv")));
    // no command mutates its inputs
    CHECK(fnv1a64(read_text_file(tmp.s("d/corpus.ndjson"))) == corpus_hash);

    SECTION("conflicting config overrides are rejected with a fingerprint diff") {
        CHECK(run("eval --ckpt " + tmp.s("t/checkpoint.bin") + " --corpus " +
                  tmp.s("d/corpus.ndjson") + " --out " + tmp.s("e3") +
                  " --set model.d_model=32") == 2);
    }
}

TEST_CASE("sweep and plot emit well-formed artifacts") {
    TempDir tmp;
    REQUIRE(run("gen --spec default --count 10 --seed 11 --out " + tmp.s("d")) == 0);
    REQUIRE(run("train --corpus " + tmp.s("d/corpus.ndjson") + " --out " + tmp.s("hm") +
                " --seed 3" + kSmall) == 0);
    REQUIRE(run("train --corpus " + tmp.s("d/corpus.ndjson") + " --out " + tmp.s("bl") +
                " --seed 3 --baseline tracked_full" + kSmall) == 0);
    REQUIRE(run("sweep --himap " + tmp.s("hm/checkpoint.bin") + " --baseline " +
                tmp.s("bl/checkpoint.bin") + " --corpus " + tmp.s("d/corpus.ndjson") +
                " --n 0,4,9 --out " + tmp.s("sw")) == 0);
    REQUIRE(fs::exists(tmp.s("sw/sweep.csv")));
    REQUIRE(fs::exists(tmp.s("sw/summary.txt")));

    SECTION("the tracking-free series renders as dashed horizontal lines") {
        std::string svg = read_text_file(tmp.s("sw/fig_sweep.svg"));
        CHECK(svg.find("<svg") != std::string::npos);
        CHECK(svg.find("stroke-dasharray") != std::string::npos);
        CHECK(svg.find("himap minADE_6") != std::string::npos);
        CHECK(svg.rfind("</svg>\n") == svg.size() - 7);
    }

    SECTION("axis ranges cover the data extrema with a 5% margin") {
        std::string svg = read_text_file(tmp.s("sw/fig_sweep.svg"));
        auto attr = [&](const std::string& name) {
            std::size_t pos = svg.find(name + "=\"");
            REQUIRE(pos != std::string::npos);
            pos += name.size() + 2;
            return std::stod(svg.substr(pos, svg.find('"', pos) - pos));
        };
        double xmin = attr("data-xmin"), xmax = attr("data-xmax");
        double ymin = attr("data-ymin"), ymax = attr("data-ymax");

        CsvTable companion = read_csv(tmp.s("sw/fig_sweep.csv"));
        companion.require_columns({"series", "x", "y"});
        double dx_lo = 1e300, dx_hi = -1e300, dy_lo = 1e300, dy_hi = -1e300;
        for (std::size_t r = 0; r < companion.rows.size(); ++r) {
            double x = companion.num(r, 1);
            dx_lo = std::min(dx_lo, x);
            dx_hi = std::max(dx_hi, x);
            if (companion.rows[r][0].find("distance traveled") != std::string::npos) continue;
            double y = companion.num(r, 2);
            dy_lo = std::min(dy_lo, y);
            dy_hi = std::max(dy_hi, y);
        }
        double xspan = dx_hi - dx_lo, yspan = dy_hi - dy_lo;
        CHECK(xmin <= dx_lo - 0.049 * xspan);
        CHECK(xmax >= dx_hi + 0.049 * xspan);
        CHECK(ymin <= dy_lo - 0.049 * yspan);
        CHECK(ymax >= dy_hi + 0.049 * yspan);
    }

    SECTION("a single-point sweep still renders valid SVG") {
        REQUIRE(run("sweep --himap " + tmp.s("hm/checkpoint.bin") + " --baseline " +
                    tmp.s("bl/checkpoint.bin") + " --corpus " + tmp.s("d/corpus.ndjson") +
                    " --n 4 --out " + tmp.s("sw1")) == 0);
        std::string svg = read_text_file(tmp.s("sw1/fig_sweep.svg"));
        CHECK(svg.find("<svg") != std::string::npos);
        CHECK(svg.rfind("</svg>\n") == svg.size() - 7);
    }

    SECTION("plot rejects schema-mismatched input naming the missing columns") {
        write_text_file(tmp.s("bad.csv"), "a,b\n1,2\n");
        CHECK(run("plot --sweep " + tmp.s("bad.csv") + " --out " + tmp.s("bad.svg")) == 2);
        try {
            plot_sweep_csv(tmp.s("bad.csv"), tmp.s("bad.svg"));
            FAIL("expected rejection");
        } catch (const std::exception& e) {
            CHECK(std::string(e.what()).find("n_tracked_steps") != std::string::npos);
        }
    }

    SECTION("train-log plots render too") {
        REQUIRE(run("plot --train " + tmp.s("hm/train_log.csv") + " --out " + tmp.s("loss.svg")) ==
                0);
        CHECK(fs::exists(tmp.s("loss.svg")));
        CHECK(fs::exists(tmp.s("loss.csv")));
    }
}

TEST_CASE("train resume continues to the configured horizon") {
    TempDir tmp;
    REQUIRE(run("gen --spec default --count 10 --seed 13 --out " + tmp.s("d")) == 0);
    const std::string base = " --set model.d_model=16 --set model.heads=4"
                             " --set train.warmup_steps=2 --set train.log_interval=4"
                             " --set train.ckpt_interval=4";
    REQUIRE(run("train --corpus " + tmp.s("d/corpus.ndjson") + " --out " + tmp.s("t1") +
                " --seed 3 --set train.total_steps=4" + base) == 0);
    REQUIRE(run("train --corpus " + tmp.s("d/corpus.ndjson") + " --out " + tmp.s("t2") +
                " --seed 3 --resume " + tmp.s("t1/checkpoint.bin") +
                " --set train.total_steps=8" + base) == 0);
    Checkpoint ck = load_checkpoint(tmp.s("t2/checkpoint.bin"));
    CHECK(ck.step == 8);
}
