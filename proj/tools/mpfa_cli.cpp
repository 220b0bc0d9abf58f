// Command-line front end: reproducible training, evaluation, ablations,
// sweeps, synthetic data generation and attention export.
//
// Exit codes: 0 success, 1 runtime/numeric failure, 2 usage or config error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpfa/io.hpp"
#include "mpfa/mpfa.hpp"

namespace fs = std::filesystem;
using namespace mpfa;

namespace {

struct RunConfig {
    TrainConfig train;
    std::string data;
    std::string schema = "auto";
    std::string out;
    // eval / export options
    std::string checkpoint;
    std::string model = "mpfa";
    std::string task = "linkpred";
    std::string range = "test";
    double edgebank_window = 0.0;
    // sweep options
    std::string sweep_parameter;
    std::vector<double> sweep_values;
    std::vector<int> k_list = {1, 2, 3, 5, 10, 20, 30};
    // synth options
    int synth_nodes = 100;
    long synth_events = 10000;
    double synth_recurrence = 0.9;
    double synth_noise = 0.5;

    /// Full echo written into every artifact. Filesystem locations that are
    /// inherently per-invocation (the output directory, the checkpoint path)
    /// are not part of the echo: identical-seed runs must produce
    /// byte-identical artifacts regardless of where they read and write.
    /// For checkpoint-driven subcommands the echoed training configuration
    /// is the effective one loaded from the checkpoint.
    json echo(const std::string& subcommand, const TrainConfig* effective = nullptr) const {
        json j = train_config_to_json(effective != nullptr ? *effective : train);
        j["subcommand"] = subcommand;
        j["data"] = data;
        j["schema"] = schema;
        if (subcommand == "eval" || subcommand == "export-attention") {
            j["model"] = model;
            j["task"] = task;
            j["range"] = range;
            j["edgebank_window"] = edgebank_window;
        }
        if (subcommand == "sweep") {
            j["param"] = sweep_parameter;
            j["values"] = sweep_values;
        }
        if (subcommand == "sweep-neighbors") j["k_list"] = k_list;
        if (subcommand == "synth") {
            j["nodes"] = synth_nodes;
            j["events"] = synth_events;
            j["recurrence"] = synth_recurrence;
            j["noise"] = synth_noise;
        }
        return j;
    }
};

CsvSchema schema_of(const std::string& s) {
    if (s == "auto") return CsvSchema::Auto;
    if (s == "jodie") return CsvSchema::Jodie;
    if (s == "plain") return CsvSchema::Plain;
    throw ConfigError("unknown schema '" + s + "' (auto|jodie|plain)");
}

void load_config_file(RunConfig& rc, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open config file: " + path);
    json j = json::parse(f, nullptr, true);
    // TrainConfig keys plus the run-level ones; anything else is rejected.
    const std::vector<std::string> extra = {
        "data",  "schema", "out",   "checkpoint", "model",  "task",   "range", "edgebank_window",
        "param", "values", "k_list", "nodes",     "events", "recurrence",      "noise"};
    train_config_merge_json(rc.train, j, extra);
    if (j.contains("data")) rc.data = j.at("data").get<std::string>();
    if (j.contains("schema")) rc.schema = j.at("schema").get<std::string>();
    if (j.contains("out")) rc.out = j.at("out").get<std::string>();
    if (j.contains("checkpoint")) rc.checkpoint = j.at("checkpoint").get<std::string>();
    if (j.contains("model")) rc.model = j.at("model").get<std::string>();
    if (j.contains("task")) rc.task = j.at("task").get<std::string>();
    if (j.contains("range")) rc.range = j.at("range").get<std::string>();
    if (j.contains("edgebank_window")) rc.edgebank_window = j.at("edgebank_window").get<double>();
    if (j.contains("param")) rc.sweep_parameter = j.at("param").get<std::string>();
    if (j.contains("values")) rc.sweep_values = j.at("values").get<std::vector<double>>();
    if (j.contains("k_list")) rc.k_list = j.at("k_list").get<std::vector<int>>();
    if (j.contains("nodes")) rc.synth_nodes = j.at("nodes").get<int>();
    if (j.contains("events")) rc.synth_events = j.at("events").get<long>();
    if (j.contains("recurrence")) rc.synth_recurrence = j.at("recurrence").get<double>();
    if (j.contains("noise")) rc.synth_noise = j.at("noise").get<double>();
}

EventStream load_data(const RunConfig& rc) {
    if (rc.data.empty()) throw ConfigError("--data is required");
    if (!fs::exists(rc.data)) throw LoadError("data file does not exist: " + rc.data);
    return load_csv(rc.data, schema_of(rc.schema));
}

SplitPlan make_plan(const EventStream& s, const TrainConfig& cfg) {
    SplitPlan plan = chronological_split(s, cfg.train_frac, cfg.val_frac);
    if (cfg.inductive())
        plan = inductive_mask(s, plan, cfg.inductive_fraction, mix_seed(cfg.seed, "mask"));
    return plan;
}

fs::path ensure_out(const RunConfig& rc) {
    if (rc.out.empty()) throw ConfigError("--out is required");
    fs::create_directories(rc.out);
    return fs::path(rc.out);
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

int cmd_train(RunConfig rc) {
    Timer timer;
    rc.train.validate();
    EventStream stream = load_data(rc);
    SplitPlan plan = make_plan(stream, rc.train);
    const fs::path out = ensure_out(rc);
    const json echo = rc.echo("train");

    std::vector<std::string> files;
    std::vector<EvalReport> test_reports;
    for (int rep = 0; rep < rc.train.repeats; ++rep) {
        TrainConfig cfg = rc.train;
        cfg.seed = rc.train.seed + static_cast<std::uint64_t>(rep);
        ModelParams params(cfg.model_config(stream.edge_dim));
        TrainResult tr = train(stream, plan, params, cfg);

        MpfaScorer scorer(stream, params, ablation_from_name(cfg.ablation), tr.state_at_test);
        EvalReport rep_test = evaluate_linkpred(stream, plan, scorer, EvalRange::Test,
                                                cfg.batch_size, mix_seed(cfg.seed, "negatives.test"));
        rep_test.train_loss_curve = tr.report.train_loss_curve;
        rep_test.val_ap_curve = tr.report.val_ap_curve;
        rep_test.best_epoch = tr.report.best_epoch;
        test_reports.push_back(rep_test);

        json run_echo = echo;
        run_echo["seed"] = cfg.seed;
        const std::string suffix = rc.train.repeats > 1 ? "_" + std::to_string(rep) : "";
        const std::string report_path = (out / ("report" + suffix + ".json")).string();
        const std::string curves_path = (out / ("curves" + suffix + ".csv")).string();
        const std::string ck_path = (out / ("checkpoint" + suffix + ".json")).string();
        write_json_file(report_path, report_to_json(rep_test, run_echo));
        write_curves_csv(curves_path, rep_test, run_echo);
        save_checkpoint(ck_path, params, cfg, nullptr, &tr.state_at_test);
        files.insert(files.end(), {report_path, curves_path, ck_path});

        std::printf("run %d: test ap=%.4f auc=%.4f acc=%.4f (best epoch %d)\n", rep, rep_test.ap,
                    rep_test.auc, rep_test.acc, rep_test.best_epoch);
    }

    if (rc.train.repeats > 1) {
        auto mean_std = [&](auto get) {
            double m = 0.0;
            for (const EvalReport& r : test_reports) m += get(r);
            m /= static_cast<double>(test_reports.size());
            double v = 0.0;
            for (const EvalReport& r : test_reports) v += (get(r) - m) * (get(r) - m);
            v = std::sqrt(v / static_cast<double>(test_reports.size()));
            return json{{"mean", m}, {"std", v}};
        };
        json summary{{"run_id", run_id_of(echo)},
                     {"config", echo},
                     {"repeats", rc.train.repeats},
                     {"ap", mean_std([](const EvalReport& r) { return r.ap; })},
                     {"auc", mean_std([](const EvalReport& r) { return r.auc; })},
                     {"acc", mean_std([](const EvalReport& r) { return r.acc; })}};
        const std::string sp = (out / "summary.json").string();
        write_json_file(sp, summary);
        files.push_back(sp);
    }
    write_manifest(out.string(), echo, files, timer.seconds());
    return 0;
}

int cmd_eval(RunConfig rc) {
    Timer timer;
    EventStream stream = load_data(rc);
    const fs::path out = ensure_out(rc);

    EvalReport report;
    TrainConfig cfg = rc.train;
    if (rc.model == "mpfa") {
        if (rc.checkpoint.empty()) throw ConfigError("--checkpoint is required for --model mpfa");
        LoadedCheckpoint meta = load_checkpoint_meta(rc.checkpoint);
        cfg = meta.cfg;
        if (meta.edge_dim != static_cast<int>(stream.edge_dim))
            throw LoadError("checkpoint feature dimension does not match the dataset");
        SplitPlan plan = make_plan(stream, cfg);
        ModelParams params(cfg.model_config(stream.edge_dim));
        load_checkpoint_params(rc.checkpoint, params);

        if (rc.task == "nodeclass") {
            report = node_classification(stream, plan, params, cfg);
        } else if (rc.task == "linkpred") {
            if (!meta.has_state)
                throw LoadError("checkpoint carries no state snapshot; cannot warm-start evaluation");
            MpfaScorer scorer(stream, params, ablation_from_name(cfg.ablation), meta.state);
            report = evaluate_linkpred(stream, plan, scorer,
                                       rc.range == "val" ? EvalRange::Val : EvalRange::Test,
                                       cfg.batch_size, mix_seed(cfg.seed, "negatives." + rc.range));
        } else {
            throw ConfigError("unknown task '" + rc.task + "' (linkpred|nodeclass)");
        }
    } else if (rc.model == "edgebank" || rc.model == "random") {
        if (rc.task != "linkpred") throw ConfigError("baselines only support --task linkpred");
        rc.train.validate();
        SplitPlan plan = make_plan(stream, cfg);
        std::unique_ptr<LinkScorer> scorer;
        if (rc.model == "edgebank") {
            auto eb = std::make_unique<EdgeBankScorer>(stream, rc.edgebank_window);
            eb->warm(plan.train_indices);
            if (rc.range != "val") {
                Rng warm_rng(mix_seed(cfg.seed, "negatives.val"));
                for (Batch& b : make_batches(plan.train_end, plan.val_end, cfg.batch_size)) {
                    negative_sample(stream, b, warm_rng);
                    eb->score_and_advance(b, &plan);
                }
            }
            scorer = std::move(eb);
        } else {
            scorer = std::make_unique<RandomScorer>(stream, mix_seed(cfg.seed, "random-baseline"));
        }
        report = evaluate_linkpred(stream, plan, *scorer,
                                   rc.range == "val" ? EvalRange::Val : EvalRange::Test,
                                   cfg.batch_size, mix_seed(cfg.seed, "negatives." + rc.range));
    } else {
        throw ConfigError("unknown model '" + rc.model + "' (mpfa|edgebank|random)");
    }

    const json echo = rc.echo("eval", &cfg);
    const std::string report_path = (out / "report.json").string();
    write_json_file(report_path, report_to_json(report, echo));
    write_manifest(out.string(), echo, {report_path}, timer.seconds());
    std::printf("%s %s: ap=%.4f auc=%.4f acc=%.4f n=%ld\n", rc.model.c_str(), report.mode.c_str(),
                report.ap, report.auc, report.acc, report.n_scored);
    return 0;
}

int cmd_ablate(RunConfig rc) {
    Timer timer;
    rc.train.validate();
    EventStream stream = load_data(rc);
    SplitPlan plan = make_plan(stream, rc.train);
    const fs::path out = ensure_out(rc);
    const json echo = rc.echo("ablate");

    std::vector<AblationRow> rows = run_ablations(stream, plan, rc.train);
    const std::string path = (out / "ablations.csv").string();
    write_ablation_csv(path, rows, echo);
    write_manifest(out.string(), echo, {path}, timer.seconds());
    for (const AblationRow& r : rows)
        std::printf("%-6s ap=%.4f auc=%.4f acc=%.4f\n", r.variant.c_str(), r.ap, r.auc, r.acc);
    return 0;
}

int cmd_sweep_neighbors(RunConfig rc) {
    Timer timer;
    rc.train.validate();
    EventStream stream = load_data(rc);
    SplitPlan plan = make_plan(stream, rc.train);
    const fs::path out = ensure_out(rc);
    const json echo = rc.echo("sweep-neighbors");

    std::vector<SweepRow> rows = sweep_neighbors(stream, plan, rc.train, rc.k_list);
    const std::string path = (out / "sweep_neighbors.csv").string();
    write_sweep_csv(path, "k", rows, echo);
    write_manifest(out.string(), echo, {path}, timer.seconds());
    for (const SweepRow& r : rows)
        std::printf("k=%-3g ap=%.4f auc=%.4f acc=%.4f\n", r.value, r.ap, r.auc, r.acc);
    return 0;
}

int cmd_sweep(RunConfig rc) {
    Timer timer;
    rc.train.validate();
    if (rc.sweep_parameter.empty() || rc.sweep_values.empty())
        throw ConfigError("sweep requires --param and --values");
    EventStream stream = load_data(rc);
    SplitPlan plan = make_plan(stream, rc.train);
    const fs::path out = ensure_out(rc);
    const json echo = rc.echo("sweep");

    std::vector<SweepRow> rows = sweep_param(stream, plan, rc.train, rc.sweep_parameter, rc.sweep_values);
    const std::string path = (out / ("sweep_" + rc.sweep_parameter + ".csv")).string();
    write_sweep_csv(path, rc.sweep_parameter, rows, echo);
    write_manifest(out.string(), echo, {path}, timer.seconds());
    for (const SweepRow& r : rows)
        std::printf("%s=%-6g ap=%.4f auc=%.4f acc=%.4f\n", rc.sweep_parameter.c_str(), r.value, r.ap,
                    r.auc, r.acc);
    return 0;
}

int cmd_synth(RunConfig rc) {
    Timer timer;
    const fs::path out = ensure_out(rc);
    EventStream s = synth_recurrent(rc.synth_nodes, rc.synth_events, rc.synth_recurrence,
                                    rc.synth_noise, rc.train.seed);
    const std::string path = (out / "synth.csv").string();
    write_csv(s, path);
    const json echo = rc.echo("synth");
    write_manifest(out.string(), echo, {path}, timer.seconds());
    std::printf("wrote %ld events over %d nodes to %s\n", s.size(), s.num_nodes, path.c_str());
    return 0;
}

int cmd_export_attention(RunConfig rc) {
    Timer timer;
    EventStream stream = load_data(rc);
    const fs::path out = ensure_out(rc);

    TrainConfig cfg = rc.train;
    std::unique_ptr<ModelParams> params;
    if (!rc.checkpoint.empty()) {
        LoadedCheckpoint meta = load_checkpoint_meta(rc.checkpoint);
        cfg = meta.cfg;
        params = std::make_unique<ModelParams>(cfg.model_config(stream.edge_dim));
        load_checkpoint_params(rc.checkpoint, *params);
    } else {
        cfg.validate();
        params = std::make_unique<ModelParams>(cfg.model_config(stream.edge_dim));
        params->init_weights(mix_seed(cfg.seed, "init"));
    }

    SplitPlan plan = make_plan(stream, cfg);
    long lo = 0, hi = stream.size();
    if (rc.range == "train") hi = plan.train_end;
    if (rc.range == "val") {
        lo = plan.train_end;
        hi = plan.val_end;
    }
    if (rc.range == "test") {
        lo = plan.val_end;
        hi = plan.n;
    }

    MpfaEngine engine(stream, *params, ablation_from_name(cfg.ablation));
    engine.reset();
    // replay history up to the range start, respecting inductive filtering
    std::vector<long> warm;
    for (long i : plan.train_indices)
        if (i < lo) warm.push_back(i);
    for (long i = plan.train_end; i < lo; ++i) warm.push_back(i);
    for (Batch& b : make_batches(warm, cfg.batch_size)) {
        Tape tape(false);
        StateView view(tape, engine.state());
        model_ops::DropoutCtx drop;
        engine.forward_batch(view, b, nullptr, drop);
        engine.commit_batch(b);
    }

    // one row per neighbor per perspective, source endpoint of each event
    std::vector<AttnDumpRow> rows;
    for (long i = lo; i < hi; ++i) {
        engine.flush_now();
        const Event& e = stream.events[i];
        auto fe = engine.forward_event(e.src, e.dst, e.t, i);
        for (const AttnDumpRow& r : fe.dumps)
            if (r.node == e.src) rows.push_back(r);
        engine.advance_range(i, i + 1, 1, nullptr, nullptr);
    }
    engine.flush_now();

    const json echo = rc.echo("export-attention", &cfg);
    const std::string path = (out / "attention.csv").string();
    write_attention_csv(path, rows, echo);
    write_manifest(out.string(), echo, {path}, timer.seconds());
    std::printf("wrote %zu attention rows to %s\n", rows.size(), path.c_str());
    return 0;
}

void add_common_options(CLI::App* sub, RunConfig& rc, std::string& config_path) {
    sub->add_option("--config", config_path, "JSON config file; flags override its values");
    sub->add_option("--data", rc.data, "dataset CSV path (.gz accepted)");
    sub->add_option("--schema", rc.schema, "csv schema: auto|jodie|plain");
    sub->add_option("--out", rc.out, "output directory");
    sub->add_option("--seed", rc.train.seed, "global seed; all randomness derives from it");
    sub->add_option("--batch-size", rc.train.batch_size, "events per batch");
    sub->add_option("--lr", rc.train.lr, "learning rate");
    sub->add_option("--epochs", rc.train.epochs, "max training epochs");
    sub->add_option("--patience", rc.train.patience, "early-stopping patience (epochs)");
    sub->add_option("--grad-clip", rc.train.grad_clip, "global-norm gradient clip (0 = off)");
    sub->add_option("--lr-min", rc.train.lr_min, "cosine-decay floor for the rate (0 = constant)");
    sub->add_option("--dropout", rc.train.dropout, "dropout probability");
    sub->add_option("--k-neighbors", rc.train.k_neighbors, "temporal neighbors per node");
    sub->add_option("--d", rc.train.d, "embedding dimension");
    sub->add_option("--d-h", rc.train.d_h, "evolving-information dimension");
    sub->add_option("--d-t", rc.train.d_t, "time-encoding dimension");
    sub->add_option("--ablate", rc.train.ablation, "full|wo_rp|wo_ep|wo_red|wo_ed");
    sub->add_option("--mode", rc.train.mode, "transductive|inductive");
    sub->add_option("--train-frac", rc.train.train_frac, "training fraction of the stream");
    sub->add_option("--val-frac", rc.train.val_frac, "validation fraction of the stream");
    sub->add_option("--inductive-fraction", rc.train.inductive_fraction,
                    "fraction of eval-period nodes masked in inductive mode");
    sub->add_option("--repeats", rc.train.repeats, "independent runs (seed, seed+1, ...)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continuous-time dynamic-graph link prediction (dual-perspective attention)"};
    app.require_subcommand(1);

    RunConfig rc;
    std::string config_path;

    CLI::App* s_train = app.add_subcommand("train", "train a model and write checkpoint + report");
    CLI::App* s_eval = app.add_subcommand("eval", "evaluate a checkpoint or baseline");
    CLI::App* s_ablate = app.add_subcommand("ablate", "train/evaluate all ablation variants");
    CLI::App* s_sweepn = app.add_subcommand("sweep-neighbors", "AP versus neighbor count table");
    CLI::App* s_sweep = app.add_subcommand("sweep", "single-knob hyperparameter sweep");
    CLI::App* s_synth = app.add_subcommand("synth", "generate a synthetic recurrent stream");
    CLI::App* s_export = app.add_subcommand("export-attention", "dump attention weights as CSV");

    for (CLI::App* sub : {s_train, s_eval, s_ablate, s_sweepn, s_sweep, s_synth, s_export})
        add_common_options(sub, rc, config_path);

    s_eval->add_option("--checkpoint", rc.checkpoint, "checkpoint written by train");
    s_eval->add_option("--model", rc.model, "mpfa|edgebank|random");
    s_eval->add_option("--task", rc.task, "linkpred|nodeclass");
    s_eval->add_option("--range", rc.range, "val|test");
    s_eval->add_option("--edgebank-window", rc.edgebank_window,
                       "time window for edgebank (0 = unlimited)");
    s_export->add_option("--checkpoint", rc.checkpoint, "checkpoint written by train");
    s_export->add_option("--range", rc.range, "train|val|test|all");
    s_sweepn->add_option("--k-list", rc.k_list, "neighbor counts to sweep");
    s_sweep->add_option("--param", rc.sweep_parameter, "batch|embed|neighbors|dropout|lr");
    s_sweep->add_option("--values", rc.sweep_values, "values to sweep");
    s_synth->add_option("--nodes", rc.synth_nodes, "node count");
    s_synth->add_option("--events", rc.synth_events, "event count");
    s_synth->add_option("--recurrence", rc.synth_recurrence, "preferred-partner probability");
    s_synth->add_option("--noise", rc.synth_noise, "feature noise scale and timestamp jitter");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        // config file first, then re-parse so explicit flags take precedence
        if (!config_path.empty()) {
            load_config_file(rc, config_path);
            try {
                app.clear();
                app.parse(argc, argv);
            } catch (const CLI::ParseError& e) {
                const int code = app.exit(e);
                return code == 0 ? 0 : 2;
            }
        }
        if (s_train->parsed()) return cmd_train(rc);
        if (s_eval->parsed()) return cmd_eval(rc);
        if (s_ablate->parsed()) return cmd_ablate(rc);
        if (s_sweepn->parsed()) return cmd_sweep_neighbors(rc);
        if (s_sweep->parsed()) return cmd_sweep(rc);
        if (s_synth->parsed()) return cmd_synth(rc);
        if (s_export->parsed()) return cmd_export_attention(rc);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParameterError& e) {
        std::cerr << "parameter error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const LoadError& e) {
        std::cerr << "load error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
