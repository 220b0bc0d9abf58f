// Acceptance suite: runs every gate and prints one PASS/FAIL line each.
// Exit code is the number of failed gates (the MOOC anchor is advisory and
// never gates). Heavy training runs execute on a small thread pool; the
// k=10 learning runs are shared with the neighbor-stability comparison.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdarg>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "mpfa/io.hpp"
#include "mpfa/mpfa.hpp"

#include "../support/metric_oracles.hpp"
#include "../support/toy_gradcheck.hpp"

namespace fs = std::filesystem;
using namespace mpfa;

namespace {

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail, bool gating = true) {
    std::printf("[%s] %-24s %s\n", pass ? "PASS" : (gating ? "FAIL" : "soft-FAIL"), name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass && gating) ++g_failures;
}

void report_skip(const std::string& name, const std::string& detail) {
    std::printf("[SKIP] %-24s %s\n", name.c_str(), detail.c_str());
    std::fflush(stdout);
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return std::string(buf);
}

Tensor random_tensor(std::vector<long> shape, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

// ---------------------------------------------------------------------------
// 1. gradient integrity
// ---------------------------------------------------------------------------

void criterion_gradients() {
    Timer timer;
    Rng rng(4242);
    using Build = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;
    struct OpCase {
        const char* name;
        Build build;
        std::vector<std::vector<long>> shapes;
    };
    Tensor w6 = random_tensor({6}, rng);
    std::vector<OpCase> cases = {
        {"add", [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.add(in[0], in[1])); }, {{6}, {6}}},
        {"sub", [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.sub(in[0], in[1])); }, {{6}, {6}}},
        {"mul", [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.mul(in[0], in[1])); }, {{6}, {6}}},
        {"affine", [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.affine(in[0], -2.5, 0.3)); }, {{6}}},
        {"sigmoid", [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.sigmoid(in[0])); }, {{6}}},
        {"tanh", [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.tanh_act(in[0])); }, {{6}}},
        {"relu",
         [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.relu(t.affine(in[0], 1.0, 0.37))); },
         {{6}}},
        {"log",
         [](Tape& t, const std::vector<NodeId>& in) {
             return t.sum(t.log_op(t.affine(t.sigmoid(in[0]), 1.0, 0.1)));
         },
         {{6}}},
        {"clamp", [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.clamp(in[0], -0.4, 0.4)); }, {{6}}},
        {"matmul", [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.matmul(in[0], in[1])); }, {{3, 4}, {4, 2}}},
        {"matmul_nt", [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.matmul_nt(in[0], in[1])); }, {{3, 4}, {2, 4}}},
        {"matvec", [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.matvec(in[0], in[1])); }, {{3, 4}, {4}}},
        {"matvec_t", [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.matvec_t(in[0], in[1])); }, {{3, 4}, {3}}},
        {"add_rowvec", [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.add_rowvec(in[0], in[1])); }, {{3, 4}, {4}}},
        {"concat", [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.concat({in[0], in[1]})); }, {{3}, {4}}},
        {"stack_rows",
         [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.stack_rows({in[0], in[1], in[2]})); },
         {{4}, {4}, {4}}},
        {"stack_scalars",
         [](Tape& t, const std::vector<NodeId>& in) {
             return t.dot(t.stack_scalars({in[0], in[1]}), t.stack_scalars({in[1], in[0]}));
         },
         {{1}, {1}}},
        {"reshape",
         [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.mul(t.reshape(in[0], {12}), in[1])); },
         {{3, 4}, {12}}},
        {"dot", [](Tape& t, const std::vector<NodeId>& in) { return t.dot(in[0], in[1]); }, {{6}, {6}}},
        {"sum", [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.mul(in[0], in[0])); }, {{6}}},
        {"mean", [](Tape& t, const std::vector<NodeId>& in) { return t.mean(t.mul(in[0], in[0])); }, {{6}}},
        {"softmax",
         [&w6](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.cmul(t.softmax(in[0]), w6)); },
         {{6}}},
        {"softmax_rows",
         [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.mul(t.softmax(in[0], 1), in[1])); },
         {{3, 4}, {3, 4}}},
        {"softmax_cols",
         [](Tape& t, const std::vector<NodeId>& in) { return t.sum(t.mul(t.softmax(in[0], 0), in[1])); },
         {{3, 4}, {3, 4}}},
        {"gru_cell",
         [](Tape& t, const std::vector<NodeId>& in) {
             GruIds g{in[0], in[1], in[2], in[0], in[1], in[2], in[0], in[1], in[2]};
             return t.sum(gru_cell(t, g, in[3], in[4]));
         },
         {{4, 3}, {4, 4}, {4}, {3}, {4}}},
        {"bce",
         [](Tape& t, const std::vector<NodeId>& in) {
             return bce_loss(t, t.sigmoid(in[0]), {1, 0, 1, 0, 1, 1});
         },
         {{6}}},
    };
    double worst_op = 0.0;
    std::string worst_name;
    for (const auto& c : cases) {
        for (int inst = 0; inst < 100; ++inst) {
            std::vector<Tensor> inputs;
            for (const auto& s : c.shapes) inputs.push_back(random_tensor(s, rng));
            const double err = grad_check(c.build, std::move(inputs)).max_rel_err;
            if (err > worst_op) {
                worst_op = err;
                worst_name = c.name;
            }
        }
    }

    auto toy = mpfa_test::toy_model_gradcheck();
    const double secs = timer.seconds();
    const bool pass = worst_op < 1e-4 && toy.worst < 1e-4 && secs < 60.0;
    report("gradient-integrity", pass,
           fmt("per-op worst %.3g (%s, 100 inst/op), whole-model worst %.3g over %ld params (%s), "
               "%.1fs (cap 60s)",
               worst_op, worst_name.c_str(), toy.worst, toy.n_params, toy.worst_param.c_str(), secs));
}

// ---------------------------------------------------------------------------
// 2. normalization invariants
// ---------------------------------------------------------------------------

void criterion_normalization() {
    ModelConfig mc;
    mc.d = 6;
    mc.d_h = 6;
    mc.d_t = 4;
    mc.edge_dim = 2;
    mc.k_neighbors = 8;
    Rng rng(99);
    double worst_dev = 0.0;
    bool all_positive = true;
    long passes = 0;
    for (int it = 0; it < 10000; ++it) {
        ModelParams params(mc);
        params.init_weights(rng.next_u64());
        for (auto& pr : params.registry())
            for (double& v : pr.p->v.data) v *= 3.0;

        const int n_nbrs = 1 + static_cast<int>(rng.below(6));
        EventStream s;
        s.num_nodes = n_nbrs + 1;
        s.edge_dim = 2;
        TemporalState st(s.num_nodes, mc.d, mc.d_h);
        for (int k = 0; k < n_nbrs; ++k) {
            double feat[2] = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
            s.push_event(Event{0, k + 1, 1.0 + k, -1}, {feat, 2});
            st.store_h(k + 1, random_tensor({mc.d_h}, rng, 2.0));
        }
        st.store_h(0, random_tensor({mc.d_h}, rng, 2.0));
        TimeEncoder tenc(mc.d_t);
        for (long i = 0; i < s.size(); ++i) {
            const Event& e = s.events[i];
            st.record_raw(0, HistoryEntry{e.dst, e.t, i,
                          model_ops::build_raw_input(st, tenc, 0, e.dst, e.t, s.edge_feat(i))});
        }

        Tape tape(false);
        StateView view(tape, st);
        model_ops::DropoutCtx drop;
        const double t_now = 10.0 + rng.uniform() * 5.0;
        auto nbrs = st.recent_neighbors(0, t_now, mc.k_neighbors);
        auto evo = model_ops::evolving_attention(view, params, tenc, 0, t_now, nbrs, s, drop);
        auto raw = model_ops::raw_aggregation(view, params, tenc, 0, t_now, nbrs, drop);

        for (const auto& head : evo.attn_heads) {
            double sum = 0.0;
            for (double a : head) {
                all_positive = all_positive && a > 0.0;
                sum += a;
            }
            worst_dev = std::max(worst_dev, std::fabs(sum - 1.0));
        }
        double sum = 0.0;
        for (double a : raw.attn) {
            all_positive = all_positive && a > 0.0;
            sum += a;
        }
        worst_dev = std::max(worst_dev, std::fabs(sum - 1.0));
        ++passes;
    }
    const bool pass = worst_dev < 1e-6 && all_positive;
    report("normalization", pass,
           fmt("%ld random passes, worst |sum-1| = %.3g, all weights positive: %s", passes,
               worst_dev, all_positive ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// 3. metric oracles
// ---------------------------------------------------------------------------

void criterion_metrics() {
    Rng rng(777);
    double worst_ap = 0.0, worst_auc = 0.0;
    for (int inst = 0; inst < 1000; ++inst) {
        const long n = 2 + static_cast<long>(rng.below(199));
        std::vector<double> s(static_cast<std::size_t>(n));
        std::vector<int> y(static_cast<std::size_t>(n));
        const bool tied = inst % 3 == 0;
        for (long i = 0; i < n; ++i) {
            double v = rng.uniform();
            if (tied) v = std::floor(v * 8.0) / 8.0;
            s[static_cast<std::size_t>(i)] = v;
            y[static_cast<std::size_t>(i)] = rng.uniform() < 0.4 ? 1 : 0;
        }
        y[0] = 1;
        y[static_cast<std::size_t>(n - 1)] = 0;
        worst_ap = std::max(worst_ap, std::fabs(metric_ap(s, y) - mpfa_test::ap_oracle(s, y)));
        worst_auc = std::max(worst_auc, std::fabs(metric_auc(s, y) - mpfa_test::auc_oracle(s, y)));
    }
    const double worked = metric_ap({0.9, 0.8, 0.3}, {1, 0, 1});
    const bool worked_ok = std::fabs(worked - (1.0 + 2.0 / 3.0) / 2.0) < 1e-12;
    const bool pass = worst_ap < 1e-9 && worst_auc < 1e-9 && worked_ok;
    report("metric-oracles", pass,
           fmt("1000 instances: |dAP| <= %.2g, |dAUC| <= %.2g; worked AP example = %.6f", worst_ap,
               worst_auc, worked));
}

// ---------------------------------------------------------------------------
// 4 + 5. learning signal and neighbor stability (shared training runs)
// ---------------------------------------------------------------------------

struct LearnRun {
    double mpfa_ap = 0.0, edgebank_ap = 0.0, random_auc = 0.0;
};

LearnRun learning_run(std::uint64_t seed, int k_neighbors) {
    TrainConfig cfg;
    cfg.batch_size = 200;
    cfg.lr = 1e-3;
    cfg.epochs = 32;
    cfg.patience = 32;
    cfg.dropout = 0.0;
    cfg.k_neighbors = k_neighbors;
    cfg.d = 24;
    cfg.d_h = 24;
    cfg.d_t = 8;
    cfg.seed = seed;

    EventStream s = synth_recurrent(100, 10000, 0.9, 0.1, seed * 1000 + 7);
    SplitPlan plan = chronological_split(s);

    ModelParams params(cfg.model_config(s.edge_dim));
    TrainResult tr = train(s, plan, params, cfg);
    MpfaScorer scorer(s, params, {}, tr.state_at_test);
    LearnRun out;
    out.mpfa_ap = evaluate_linkpred(s, plan, scorer, EvalRange::Test, cfg.batch_size,
                                    mix_seed(seed, "negatives.test"))
                      .ap;

    EdgeBankScorer eb(s);
    eb.warm(plan.train_indices);
    Rng warm_rng(mix_seed(seed, "negatives.val"));
    for (Batch& b : make_batches(plan.train_end, plan.val_end, cfg.batch_size)) {
        negative_sample(s, b, warm_rng);
        eb.score_and_advance(b, &plan);
    }
    out.edgebank_ap = evaluate_linkpred(s, plan, eb, EvalRange::Test, cfg.batch_size,
                                        mix_seed(seed, "negatives.test"))
                          .ap;

    RandomScorer rnd(s, mix_seed(seed, "random-baseline"));
    out.random_auc = evaluate_linkpred(s, plan, rnd, EvalRange::Test, cfg.batch_size,
                                       mix_seed(seed, "negatives.test"))
                         .auc;
    return out;
}

template <class Job>
void run_pool(std::vector<Job>& jobs) {
    std::atomic<std::size_t> next{0};
    const unsigned n_threads =
        std::min<unsigned>(static_cast<unsigned>(jobs.size()),
                           std::max(2u, std::thread::hardware_concurrency()));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t)
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= jobs.size()) return;
                jobs[i]();
            }
        });
    for (auto& th : pool) th.join();
}

void criteria_learning_and_stability() {
    const std::vector<std::uint64_t> seeds = {1, 2, 3};

    Timer t4;
    std::vector<LearnRun> k10(seeds.size());
    {
        std::vector<std::function<void()>> jobs;
        for (std::size_t i = 0; i < seeds.size(); ++i)
            jobs.push_back([&, i]() { k10[i] = learning_run(seeds[i], 10); });
        run_pool(jobs);
    }
    const double secs4 = t4.seconds();

    double mpfa_mean = 0.0, eb_mean = 0.0, rnd_mean = 0.0;
    for (const LearnRun& r : k10) {
        mpfa_mean += r.mpfa_ap;
        eb_mean += r.edgebank_ap;
        rnd_mean += r.random_auc;
    }
    mpfa_mean /= static_cast<double>(k10.size());
    eb_mean /= static_cast<double>(k10.size());
    rnd_mean /= static_cast<double>(k10.size());

    const bool pass4 = mpfa_mean >= 0.80 && mpfa_mean >= eb_mean && rnd_mean >= 0.48 &&
                       rnd_mean <= 0.52 && secs4 < 300.0;
    report("learning-signal", pass4,
           fmt("3-seed mean AP: mpfa %.4f (>= 0.80, >= edgebank %.4f), random AUC %.4f in "
               "[0.48,0.52], %.0fs (cap 300s)",
               mpfa_mean, eb_mean, rnd_mean, secs4));

    std::vector<LearnRun> k3(seeds.size());
    {
        std::vector<std::function<void()>> jobs;
        for (std::size_t i = 0; i < seeds.size(); ++i)
            jobs.push_back([&, i]() { k3[i] = learning_run(seeds[i], 3); });
        run_pool(jobs);
    }
    double k3_mean = 0.0;
    for (const LearnRun& r : k3) k3_mean += r.mpfa_ap;
    k3_mean /= static_cast<double>(k3.size());
    const double gap = std::fabs(k3_mean - mpfa_mean);
    report("neighbor-stability", gap <= 0.02,
           fmt("3-seed mean AP: k=3 %.4f vs k=10 %.4f, |gap| = %.4f (cap 0.02)", k3_mean, mpfa_mean,
               gap));
}

// ---------------------------------------------------------------------------
// 6. ablation direction
// ---------------------------------------------------------------------------

void criterion_ablation_direction() {
    const int n_seeds = 5;
    std::vector<double> full_ap(n_seeds), wo_ed_ap(n_seeds);
    std::vector<std::function<void()>> jobs;
    for (int i = 0; i < n_seeds; ++i) {
        jobs.push_back([&, i]() {
            TrainConfig cfg;
            cfg.batch_size = 200;
            cfg.lr = 1e-3;
            cfg.epochs = 12;
            cfg.patience = 12;
            cfg.dropout = 0.0;
            cfg.k_neighbors = 10;
            cfg.d = 16;
            cfg.d_h = 16;
            cfg.d_t = 8;
            cfg.seed = 10 + static_cast<std::uint64_t>(i);
            EventStream s = synth_recurrent(80, 3000, 0.9, 0.1, cfg.seed * 77 + 5);
            SplitPlan plan = chronological_split(s);
            {
                TrainConfig c = cfg;
                c.ablation = "full";
                full_ap[static_cast<std::size_t>(i)] = run_single(s, plan, c, 0).ap;
            }
            {
                TrainConfig c = cfg;
                c.ablation = "wo_ed";
                wo_ed_ap[static_cast<std::size_t>(i)] = run_single(s, plan, c, 0).ap;
            }
        });
    }
    run_pool(jobs);
    double mf = 0.0, mw = 0.0;
    for (int i = 0; i < n_seeds; ++i) {
        mf += full_ap[static_cast<std::size_t>(i)];
        mw += wo_ed_ap[static_cast<std::size_t>(i)];
    }
    mf /= n_seeds;
    mw /= n_seeds;
    report("ablation-direction", mf > mw,
           fmt("5-seed mean AP: full %.4f > wo_ed %.4f", mf, mw));
}

// ---------------------------------------------------------------------------
// 7. determinism through the CLI
// ---------------------------------------------------------------------------

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void criterion_determinism() {
#ifndef MPFA_CLI_PATH
    report_skip("determinism", "CLI path not configured");
    return;
#else
    const std::string cli = MPFA_CLI_PATH;
    const fs::path work = fs::temp_directory_path() / "mpfa_acceptance_determinism";
    fs::remove_all(work);
    fs::create_directories(work);

    auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
        return std::system(cmd.c_str());
    };
    const std::string synth_args =
        "synth --nodes 60 --events 2000 --recurrence 0.9 --noise 0.1 --seed 5 --out " +
        (work / "data").string();
    if (run(synth_args) != 0) {
        report("determinism", false, "synth subcommand failed");
        return;
    }
    const std::string data = (work / "data" / "synth.csv").string();
    const std::string train_args = " --data " + data +
                                   " --schema plain --seed 1 --epochs 3 --d 12 --d-h 12 --d-t 4 "
                                   "--k-neighbors 5 --lr 1e-3 --dropout 0.1 --batch-size 100";
    bool ok = true;
    std::string detail;
    for (const char* which : {"a", "b"}) {
        const fs::path out = work / which;
        if (run("train" + train_args + " --out " + out.string()) != 0) {
            ok = false;
            detail = "train subcommand failed";
            break;
        }
        if (run("export-attention --data " + data + " --schema plain --checkpoint " +
                (out / "checkpoint.json").string() + " --range test --out " +
                (out / "att").string()) != 0) {
            ok = false;
            detail = "export-attention subcommand failed";
            break;
        }
    }
    if (ok) {
        const bool rep_eq = read_file(work / "a" / "report.json") == read_file(work / "b" / "report.json");
        const bool ck_eq =
            read_file(work / "a" / "checkpoint.json") == read_file(work / "b" / "checkpoint.json");
        const bool att_eq = read_file(work / "a" / "att" / "attention.csv") ==
                            read_file(work / "b" / "att" / "attention.csv");
        const bool nonempty = !read_file(work / "a" / "report.json").empty() &&
                              !read_file(work / "a" / "att" / "attention.csv").empty();
        ok = rep_eq && ck_eq && att_eq && nonempty;
        detail = fmt("report %s, checkpoint %s, attention dump %s",
                     rep_eq ? "byte-identical" : "DIFFERS", ck_eq ? "byte-identical" : "DIFFERS",
                     att_eq ? "byte-identical" : "DIFFERS");
    }
    report("determinism", ok, detail);
#endif
}

// ---------------------------------------------------------------------------
// 8. leakage freedom
// ---------------------------------------------------------------------------

void criterion_leakage() {
    EventStream s = synth_recurrent(40, 600, 0.8, 0.5, 4242);
    ModelConfig mc;
    mc.d = 10;
    mc.d_h = 10;
    mc.d_t = 6;
    mc.edge_dim = 4;
    mc.k_neighbors = 6;
    ModelParams params(mc);
    params.init_weights(11);

    bool all_equal = true;
    for (long target : {137L, 388L, 599L}) {
        const Event& ev = s.events[target];

        MpfaEngine full(s, params, {});
        full.reset();
        Tensor z_src_full, z_dst_full;
        for (Batch& b : make_batches(0, target + 1, 1)) {
            Tape tape(false);
            StateView view(tape, full.state());
            model_ops::DropoutCtx drop;
            full.forward_batch(view, b, nullptr, drop);
            if (b.idx[0] == target) {
                auto [zs, zd] = full.cached_embeddings(target);
                z_src_full = zs;
                z_dst_full = zd;
                break;
            }
            full.commit_batch(b);
        }

        EventStream cut;
        cut.num_nodes = s.num_nodes;
        cut.edge_dim = s.edge_dim;
        for (long i = 0; i < s.size(); ++i) {
            if (s.events[i].t >= ev.t) break;
            cut.push_event(s.events[i], s.edge_feat(i));
        }
        MpfaEngine trunc(cut, params, {});
        trunc.reset();
        trunc.advance_range(0, cut.size(), 1, nullptr, nullptr);
        trunc.flush_now();
        auto fe = trunc.forward_event(ev.src, ev.dst, ev.t);
        all_equal = all_equal && fe.z_src == z_src_full && fe.z_dst == z_dst_full;
    }
    report("leakage-freedom", all_equal,
           all_equal ? "z(t) bit-identical after deleting all events with time >= t (3 cut points)"
                     : "truncation changed an embedding");
}

// ---------------------------------------------------------------------------
// 9. EdgeBank on real MOOC (soft anchor)
// ---------------------------------------------------------------------------

void criterion_mooc() {
    const char* env = std::getenv("MPFA_MOOC_CSV");
    std::string path = env ? env : "";
    if (path.empty() && fs::exists("data/mooc.csv")) path = "data/mooc.csv";
    if (path.empty()) {
        report_skip("edgebank-mooc(soft)", "real MOOC CSV not present (set MPFA_MOOC_CSV)");
        return;
    }
    Timer timer;
    EventStream s = load_csv(path, CsvSchema::Jodie);
    SplitPlan plan = chronological_split(s);
    EdgeBankScorer eb(s);
    eb.warm(plan.train_indices);
    Rng warm_rng(mix_seed(1, "negatives.val"));
    for (Batch& b : make_batches(plan.train_end, plan.val_end, 200)) {
        negative_sample(s, b, warm_rng);
        eb.score_and_advance(b, &plan);
    }
    EvalReport rep = evaluate_linkpred(s, plan, eb, EvalRange::Test, 200, mix_seed(1, "negatives.test"));
    const double secs = timer.seconds();
    const bool in_band = rep.ap >= 0.50 && rep.ap <= 0.60 && secs < 600.0;
    report("edgebank-mooc(soft)", in_band,
           fmt("%d nodes / %ld edges; test AP %.4f (band 0.50-0.60), %.0fs", s.num_nodes, s.size(),
               rep.ap, secs),
           /*gating=*/false);
}

}  // namespace

int main() {
    std::printf("acceptance suite\n");
    criterion_gradients();
    criterion_normalization();
    criterion_metrics();
    criteria_learning_and_stability();
    criterion_ablation_direction();
    criterion_determinism();
    criterion_leakage();
    criterion_mooc();
    std::printf("%s (%d gating failure%s)\n", g_failures == 0 ? "ALL GATES PASSED" : "GATES FAILED",
                g_failures, g_failures == 1 ? "" : "s");
    return g_failures;
}
