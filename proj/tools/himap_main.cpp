// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Single entry point for the tracking-free forecasting toolkit: scenario
// generation, training (tracking-free model and tracked baselines),
// evaluation, ablation tables, the tracking-availability sweep, and SVG plot
// emission. Every run writes a manifest with the command, configuration
// fingerprint, seed, and artifact paths. Exit codes: 0 success, 1 usage
// error, 2 runtime failure. HIMAP_THREADS caps evaluation parallelism.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "himap/harness.hpp"
#include "himap/plot.hpp"

namespace fs = std::filesystem;
using namespace himap;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 1;
    std::string out;
};

AppConfig load_config(const CommonArgs& args) {
    AppConfig cfg = args.config_path.empty() ? AppConfig{} : AppConfig::from_file(args.config_path);
    cfg.apply_overrides(args.overrides);
    return cfg;
}

void write_manifest(const std::string& dir, const std::string& command,
                    const std::vector<std::string>& argv, const AppConfig& cfg,
                    std::uint64_t seed, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    const std::string& name = "manifest.json") {
    nlohmann::json m;
    m["schema"] = "himap-manifest/1";
    m["command"] = command;
    m["argv"] = argv;
    m["seed"] = seed;
    m["config_fingerprint"] = cfg.fingerprint();
    m["config"] = cfg.canonical();
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    write_text_file((fs::path(dir) / name).string(), m.dump(2) + "\n");
}

std::vector<std::string> collect_argv(int argc, char** argv) {
    std::vector<std::string> out;
    for (int i = 0; i < argc; ++i) out.emplace_back(argv[i]);
    return out;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    for (const auto& tok : split(s, ','))
        if (!trim(tok).empty()) out.push_back(std::stoi(trim(tok)));
    return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    for (const auto& tok : split(s, ','))
        if (!trim(tok).empty()) out.push_back(std::stoull(trim(tok)));
    return out;
}

void check_config_compatible(const AppConfig& requested, const AppConfig& from_ckpt) {
    if (requested.canonical() == from_ckpt.canonical()) return;
    std::string msg = "config/checkpoint mismatch (fingerprints " +
                      std::to_string(requested.fingerprint()) + " vs " +
                      std::to_string(from_ckpt.fingerprint()) + ")";
    auto a = split(requested.canonical(), '\n');
    auto b = split(from_ckpt.canonical(), '\n');
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
        if (a[i] != b[i]) {
            msg += "; first difference: '" + a[i] + "' vs '" + b[i] + "'";
            break;
        }
    throw std::invalid_argument(msg);
}

void check_corpus_compatible(const ModelConfig& mc, const std::vector<Scenario>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("corpus is empty");
    if (corpus.front().t_obs != mc.t_obs || corpus.front().t_future != mc.t_future)
        throw std::invalid_argument(
            "corpus horizons (t_obs " + std::to_string(corpus.front().t_obs) + ", t_future " +
            std::to_string(corpus.front().t_future) + ") do not match the model (t_obs " +
            std::to_string(mc.t_obs) + ", t_future " + std::to_string(mc.t_future) + ")");
}

// --- gen ---------------------------------------------------------------

int cmd_gen(const CommonArgs& common, const std::string& spec_preset, bool spec_given, int count,
            const std::vector<std::string>& argv) {
    AppConfig cfg = load_config(common);
    // an explicit --spec overrides a config file's gen section; --set wins last
    if (spec_given || common.config_path.empty()) cfg.gen = gen_spec_preset(spec_preset);
    cfg.apply_overrides(common.overrides);
    cfg.validate();
    fs::create_directories(common.out);

    std::vector<Scenario> corpus;
    Rng root = Rng(common.seed).derive("gen");
    for (int i = 0; i < count; ++i)
        corpus.push_back(generate(cfg.gen, root.derive(static_cast<std::uint64_t>(i)).next_u64()));
    std::string corpus_path = (fs::path(common.out) / "corpus.ndjson").string();
    write_corpus(corpus, corpus_path);
    write_manifest(common.out, "gen", argv, cfg, common.seed, {}, {corpus_path});
    std::cout << "wrote " << count << " scenario documents to " << corpus_path << "\n";
    return 0;
}

// --- train -------------------------------------------------------------

int cmd_train(const CommonArgs& common, const std::string& corpus_path, const std::string& flags_s,
              const std::string& baseline_s, const std::string& resume_path,
              const std::vector<std::string>& argv) {
    fs::create_directories(common.out);
    std::vector<Scenario> corpus = read_corpus(corpus_path);
    std::string ckpt_path = (fs::path(common.out) / "checkpoint.bin").string();
    std::string log_path = (fs::path(common.out) / "train_log.csv").string();

    AppConfig cfg = load_config(common);
    cfg.train.seed = common.seed;
    cfg.apply_overrides(common.overrides);

    TrainResult result;
    if (!baseline_s.empty()) {
        if (!resume_path.empty())
            throw std::invalid_argument("baseline training does not support --resume");
        cfg.validate();
        check_corpus_compatible(cfg.model, corpus);
        BaselineKind kind = BaselineKind::parse(baseline_s);
        TrainedBaseline trained = train_baseline(kind, corpus, cfg, ckpt_path);
        result = trained.result;
    } else if (!resume_path.empty()) {
        RestoredModel restored = restore_model(load_checkpoint(resume_path));
        if (!restored.himap) throw std::invalid_argument("--resume: checkpoint is not a himap model");
        if (!common.config_path.empty() || !common.overrides.empty()) {
            // extending the schedule horizon is the point of resuming;
            // everything else must match the checkpoint
            AppConfig requested = cfg;
            AppConfig saved = restored.cfg;
            requested.train.schedule.total_steps = saved.train.schedule.total_steps;
            requested.train.seed = saved.train.seed;
            check_config_compatible(requested, saved);
            restored.cfg.train.schedule.total_steps = cfg.train.schedule.total_steps;
        }
        check_corpus_compatible(restored.cfg.model, corpus);
        OptimState optim = restored.ckpt.optim;
        TrainedHimap trained =
            train_himap(corpus, restored.cfg, restored.flags, ckpt_path, restored.ckpt.step,
                        restored.ckpt.has_optim ? &optim : nullptr, restored.ckpt.history);
        result = trained.result;
        cfg = restored.cfg;
    } else {
        cfg.validate();
        check_corpus_compatible(cfg.model, corpus);
        AblationFlags flags = flags_s.empty() ? AblationFlags::all_on() : parse_flags_arg(flags_s);
        TrainedHimap trained = train_himap(corpus, cfg, flags, ckpt_path);
        result = trained.result;
    }
    write_train_log_csv(result.log, log_path);
    write_manifest(common.out, "train", argv, cfg, common.seed, {corpus_path},
                   {ckpt_path, log_path});
    std::cout << "trained to step " << result.final_step << "; checkpoint at " << ckpt_path << "\n";
    return 0;
}

// --- eval --------------------------------------------------------------

int cmd_eval(const CommonArgs& common, const std::string& ckpt_path, const std::string& corpus_path,
             int n_history, const std::vector<std::string>& argv) {
    fs::create_directories(common.out);
    RestoredModel restored = restore_model(load_checkpoint(ckpt_path));
    if (!common.config_path.empty() || !common.overrides.empty())
        check_config_compatible(load_config(common), restored.cfg);
    std::vector<Scenario> corpus = read_corpus(corpus_path);
    check_corpus_compatible(restored.cfg.model, corpus);

    EvalResult ev;
    if (restored.himap) {
        ev = evaluate(*restored.himap, corpus);
    } else {
        int n = n_history >= 0 ? n_history : restored.baseline->full_history();
        ev = evaluate(*restored.baseline, corpus, n);
    }
    std::string metrics_path = (fs::path(common.out) / "metrics.csv").string();
    std::string per_path = (fs::path(common.out) / "per_scenario.csv").string();
    write_metrics_csv(ev.report, metrics_path);
    write_per_scenario_csv(ev.per_scenario, per_path);
    write_manifest(common.out, "eval", argv, restored.cfg, common.seed, {ckpt_path, corpus_path},
                   {metrics_path, per_path});
    std::cout << "minADE_6 = " << format_num(ev.report.k6.min_ade)
              << ", minFDE_6 = " << format_num(ev.report.k6.min_fde)
              << ", MR_6 = " << format_num(ev.report.k6.miss_rate)
              << ", recon_hi_ADE = " << format_num(ev.recon_hi_ade) << "\n";
    return 0;
}

// --- sweep -------------------------------------------------------------

int cmd_sweep(const CommonArgs& common, const std::string& himap_ckpt,
              const std::string& baseline_ckpt, const std::string& corpus_path,
              const std::string& n_list, const std::vector<std::string>& argv) {
    fs::create_directories(common.out);
    RestoredModel hm = restore_model(load_checkpoint(himap_ckpt));
    RestoredModel bm = restore_model(load_checkpoint(baseline_ckpt));
    if (!hm.himap) throw std::invalid_argument("--himap checkpoint is not a himap model");
    if (!bm.baseline) throw std::invalid_argument("--baseline checkpoint is not a tracked baseline");
    std::vector<Scenario> corpus = read_corpus(corpus_path);
    check_corpus_compatible(hm.cfg.model, corpus);

    std::vector<int> ns;
    if (n_list.empty())
        for (int n = 0; n <= corpus.front().t_obs - 1; ++n) ns.push_back(n);
    else
        ns = parse_int_list(n_list);

    SweepResult sweep = run_tracking_sweep(*hm.himap, *bm.baseline, corpus, ns);
    std::string sweep_path = (fs::path(common.out) / "sweep.csv").string();
    std::string summary_path = (fs::path(common.out) / "summary.txt").string();
    std::string svg_path = (fs::path(common.out) / "fig_sweep.svg").string();
    write_sweep_csv(sweep.rows, sweep_path);
    write_text_file(summary_path, sweep.summary);
    plot_sweep_csv(sweep_path, svg_path);
    write_manifest(common.out, "sweep", argv, hm.cfg, common.seed,
                   {himap_ckpt, baseline_ckpt, corpus_path},
                   {sweep_path, summary_path, svg_path});
    std::cout << sweep.summary;
    return 0;
}

// --- ablate ------------------------------------------------------------

int cmd_ablate(const CommonArgs& common, const std::string& corpus_path,
               const std::string& eval_corpus_path, const std::string& rows_s,
               const std::string& seeds_s, const std::vector<std::string>& argv) {
    fs::create_directories(common.out);
    AppConfig cfg = load_config(common);
    cfg.train.seed = common.seed;
    cfg.validate();

    std::vector<Scenario> train_corpus = read_corpus(corpus_path);
    std::vector<Scenario> eval_corpus;
    std::vector<std::string> inputs{corpus_path};
    if (!eval_corpus_path.empty()) {
        eval_corpus = read_corpus(eval_corpus_path);
        inputs.push_back(eval_corpus_path);
    } else {
        // hold out the trailing 20% for evaluation
        std::size_t cut = train_corpus.size() - train_corpus.size() / 5;
        eval_corpus.assign(train_corpus.begin() + static_cast<std::ptrdiff_t>(cut),
                           train_corpus.end());
        train_corpus.resize(cut);
    }
    check_corpus_compatible(cfg.model, train_corpus);
    if (eval_corpus.empty()) throw std::invalid_argument("ablate: evaluation corpus is empty");

    std::vector<std::pair<std::string, AblationFlags>> rows;
    if (rows_s == "hqm")
        for (int r = 1; r <= 5; ++r)
            rows.emplace_back("hqm_row" + std::to_string(r), AblationFlags::hqm_row(r));
    else if (rows_s == "decoder")
        for (int r = 1; r <= 4; ++r)
            rows.emplace_back("decoder_row" + std::to_string(r), AblationFlags::decoder_row(r));
    else if (rows_s == "endpoints") {
        rows.emplace_back("all_off", AblationFlags::all_off());
        rows.emplace_back("all_on", AblationFlags::all_on());
    } else {
        throw std::invalid_argument("--rows must be hqm, decoder, or endpoints");
    }
    std::vector<std::uint64_t> seeds =
        seeds_s.empty() ? std::vector<std::uint64_t>{1, 2, 3} : parse_u64_list(seeds_s);

    std::vector<AblationRow> table = run_ablation(train_corpus, eval_corpus, cfg, rows, seeds);
    std::string out_path = (fs::path(common.out) / "ablation.csv").string();
    write_ablation_csv(table, out_path);
    write_manifest(common.out, "ablate", argv, cfg, common.seed, inputs, {out_path});
    std::cout << "wrote " << table.size() << " ablation rows to " << out_path << "\n";
    return 0;
}

// --- plot --------------------------------------------------------------

int cmd_plot(const CommonArgs& common, const std::string& sweep_csv, const std::string& train_csv,
             const std::vector<std::string>& argv) {
    if (sweep_csv.empty() == train_csv.empty())
        throw std::invalid_argument("plot: pass exactly one of --sweep or --train");
    fs::path out_svg(common.out);
    if (out_svg.has_parent_path()) fs::create_directories(out_svg.parent_path());
    std::string input = sweep_csv.empty() ? train_csv : sweep_csv;
    if (sweep_csv.empty())
        plot_train_csv(train_csv, common.out);
    else
        plot_sweep_csv(sweep_csv, common.out);
    std::string companion = common.out;
    std::size_t dot = companion.rfind('.');
    companion = (dot == std::string::npos ? companion : companion.substr(0, dot)) + ".csv";
    AppConfig cfg;
    write_manifest(out_svg.has_parent_path() ? out_svg.parent_path().string() : ".", "plot", argv,
                   cfg, common.seed, {input}, {common.out, companion},
                   out_svg.stem().string() + ".manifest.json");
    std::cout << "wrote " << common.out << " and " << companion << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "himap: tracking-free multi-agent trajectory forecasting on historical occupancy maps"};
    app.require_subcommand(1);
    std::vector<std::string> argv_copy = collect_argv(argc, argv);

    CommonArgs common;
    auto add_common = [&common](CLI::App* sub, bool out_required = true) {
        sub->add_option("--config", common.config_path, "key=value config file");
        sub->add_option("--set", common.overrides, "config override key=value (repeatable)");
        sub->add_option("--seed", common.seed, "run seed");
        auto* out = sub->add_option("--out", common.out, "output directory");
        if (out_required) out->required();
    };

    // gen
    auto* gen = app.add_subcommand("gen", "generate a scenario corpus");
    std::string gen_spec = "default";
    int gen_count = 100;
    auto* gen_spec_opt =
        gen->add_option("--spec", gen_spec, "generator preset (default|straight|stationary|fork)");
    gen->add_option("--count", gen_count, "number of scenarios")->check(CLI::PositiveNumber);
    add_common(gen);

    // train
    auto* train = app.add_subcommand("train", "train a model on a corpus");
    std::string train_corpus, train_flags, train_baseline_s, train_resume;
    train->add_option("--corpus", train_corpus, "scenario corpus (ndjson)")->required();
    train->add_option("--flags", train_flags,
                      "ablation flags: all_on|all_off|hqm_row:<k>|decoder_row:<k>");
    train->add_option("--baseline", train_baseline_s,
                      "train a tracked baseline instead: tracked_full|tracked_partial:<n>|masked_finetune");
    train->add_option("--resume", train_resume, "resume from a checkpoint");
    add_common(train);

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
    std::string eval_ckpt, eval_corpus;
    int eval_n_history = -1;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--corpus", eval_corpus, "scenario corpus (ndjson)")->required();
    eval->add_option("--n-history", eval_n_history,
                     "baseline checkpoints: ID'd history frames visible");
    add_common(eval);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "tracking-availability sweep");
    std::string sweep_himap, sweep_baseline, sweep_corpus, sweep_n;
    sweep->add_option("--himap", sweep_himap, "himap checkpoint")->required();
    sweep->add_option("--baseline", sweep_baseline, "baseline checkpoint")->required();
    sweep->add_option("--corpus", sweep_corpus, "scenario corpus (ndjson)")->required();
    sweep->add_option("--n", sweep_n, "comma-separated tracked-step counts (default 0..t_obs-1)");
    add_common(sweep);

    // ablate
    auto* ablate = app.add_subcommand("ablate", "train and evaluate ablation rows");
    std::string ab_corpus, ab_eval_corpus, ab_rows = "hqm", ab_seeds;
    ablate->add_option("--corpus", ab_corpus, "training corpus (ndjson)")->required();
    ablate->add_option("--eval-corpus", ab_eval_corpus,
                       "held-out corpus (default: trailing 20% of --corpus)");
    ablate->add_option("--rows", ab_rows, "hqm|decoder|endpoints");
    ablate->add_option("--seeds", ab_seeds, "comma-separated training seeds (default 1,2,3)");
    add_common(ablate);

    // plot
    auto* plot = app.add_subcommand("plot", "render an SVG from result CSVs");
    std::string plot_sweep_in, plot_train_in;
    plot->add_option("--sweep", plot_sweep_in, "sweep.csv to plot");
    plot->add_option("--train", plot_train_in, "train_log.csv to plot");
    plot->add_option("--out", common.out, "output .svg path")->required();
    plot->add_option("--config", common.config_path, "unused; recorded in the manifest");
    plot->add_option("--seed", common.seed, "unused; recorded in the manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed())
            return cmd_gen(common, gen_spec, gen_spec_opt->count() > 0, gen_count, argv_copy);
        if (train->parsed())
            return cmd_train(common, train_corpus, train_flags, train_baseline_s, train_resume,
                             argv_copy);
        if (eval->parsed())
            return cmd_eval(common, eval_ckpt, eval_corpus, eval_n_history, argv_copy);
        if (sweep->parsed())
            return cmd_sweep(common, sweep_himap, sweep_baseline, sweep_corpus, sweep_n, argv_copy);
        if (ablate->parsed())
            return cmd_ablate(common, ab_corpus, ab_eval_corpus, ab_rows, ab_seeds, argv_copy);
        if (plot->parsed()) return cmd_plot(common, plot_sweep_in, plot_train_in, argv_copy);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
