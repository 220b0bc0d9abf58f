#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mpfa/grad_check.hpp"
#include "mpfa/mpfa.hpp"

using namespace mpfa;

namespace {

// Brute-force oracles: all-pairs comparisons, no sorting tricks. Independent
// of the implementation route in metrics.hpp.
double ap_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    const long n = static_cast<long>(s.size());
    double ap = 0.0;
    long npos = 0;
    for (long i = 0; i < n; ++i) {
        if (y[static_cast<std::size_t>(i)] != 1) continue;
        ++npos;
        double above_pos = 0, above_tot = 0, tied_pos = 0, tied_tot = 0;
        for (long j = 0; j < n; ++j) {
            if (s[static_cast<std::size_t>(j)] > s[static_cast<std::size_t>(i)]) {
                above_tot += 1;
                above_pos += y[static_cast<std::size_t>(j)];
            } else if (s[static_cast<std::size_t>(j)] == s[static_cast<std::size_t>(i)]) {
                tied_tot += 1;
                tied_pos += y[static_cast<std::size_t>(j)];
            }
        }
        ap += (above_pos + (tied_pos + 1.0) / 2.0) / (above_tot + (tied_tot + 1.0) / 2.0);
    }
    return ap / static_cast<double>(npos);
}

double auc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0;
    long npos = 0, nneg = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] == 1) {
            ++npos;
            for (std::size_t j = 0; j < s.size(); ++j) {
                if (y[j] == 1) continue;
                if (s[i] > s[j])
                    wins += 1.0;
                else if (s[i] == s[j])
                    wins += 0.5;
            }
        } else {
            ++nneg;
        }
    }
    return wins / (static_cast<double>(npos) * static_cast<double>(nneg));
}

std::uint64_t hash_params(ModelParams& p) {
    std::uint64_t h = 1469598103934665603ull;
    for (auto& pr : p.registry())
        for (double v : pr.p->v.data) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            h ^= bits;
            h *= 1099511628211ull;
        }
    return h;
}

TrainConfig small_cfg(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.batch_size = 50;
    cfg.lr = 1e-3;
    cfg.epochs = 2;
    cfg.patience = 3;
    cfg.dropout = 0.0;
    cfg.k_neighbors = 5;
    cfg.d = 8;
    cfg.d_h = 8;
    cfg.d_t = 4;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("average precision worked example", "[metrics]") {
    CHECK(metric_ap({0.9, 0.8, 0.3}, {1, 0, 1}) == Catch::Approx((1.0 + 2.0 / 3.0) / 2.0));
    CHECK(metric_auc({0.9, 0.1}, {1, 0}) == 1.0);

    // constant scores: everything predicted positive at the 0.5 threshold
    std::vector<double> constant(10, 0.7);
    std::vector<int> half(10, 0);
    for (int i = 0; i < 5; ++i) half[static_cast<std::size_t>(i)] = 1;
    CHECK(metric_acc(constant, half) == Catch::Approx(0.5));

    CHECK_THROWS_AS(metric_ap({0.5, 0.4}, {1, 1}), MetricError);
    CHECK_THROWS_AS(metric_auc({0.5, 0.4}, {0, 0}), MetricError);
    CHECK_THROWS_AS(metric_ap({0.5}, {1, 0}), DimensionError);
}

TEST_CASE("metrics agree with brute-force oracles", "[metrics]") {
    Rng rng(2025);
    double worst_ap = 0.0, worst_auc = 0.0;
    for (int inst = 0; inst < 1000; ++inst) {
        const long n = 2 + static_cast<long>(rng.below(199));
        std::vector<double> s(static_cast<std::size_t>(n));
        std::vector<int> y(static_cast<std::size_t>(n));
        // quantize some instances to force ties
        const bool tied = inst % 3 == 0;
        for (long i = 0; i < n; ++i) {
            double v = rng.uniform();
            if (tied) v = std::floor(v * 8.0) / 8.0;
            s[static_cast<std::size_t>(i)] = v;
            y[static_cast<std::size_t>(i)] = rng.uniform() < 0.4 ? 1 : 0;
        }
        // ensure both classes appear
        y[0] = 1;
        y[static_cast<std::size_t>(n - 1)] = 0;
        worst_ap = std::max(worst_ap, std::fabs(metric_ap(s, y) - ap_oracle(s, y)));
        worst_auc = std::max(worst_auc, std::fabs(metric_auc(s, y) - auc_oracle(s, y)));
    }
    CHECK(worst_ap < 1e-9);
    CHECK(worst_auc < 1e-9);
}

TEST_CASE("binary cross entropy", "[metrics]") {
    // logit 0, label 1 -> -log 0.5
    Tape t;
    NodeId s = t.constant(Tensor::vec({0.0}));
    CHECK(t.value(bce_loss(t, s, {1}, true))[0] == Catch::Approx(std::log(2.0)));

    // near-perfect predictions drive the loss to zero
    NodeId good = t.constant(Tensor::vec({1.0 - 1e-12, 1e-12}));
    CHECK(t.value(bce_loss(t, good, {1, 0}))[0] < 1e-9);

    NodeId bad = t.constant(Tensor::vec({0.5}));
    CHECK_THROWS_AS(bce_loss(t, bad, {1, 0}), DimensionError);
    CHECK_THROWS_AS(bce_loss(t, bad, {2}), ParameterError);

    // gradient against finite differences
    Rng rng(6);
    std::vector<int> labels;
    for (int i = 0; i < 8; ++i) labels.push_back(static_cast<int>(rng.below(2)));
    auto build = [&labels](Tape& tp, const std::vector<NodeId>& in) {
        return bce_loss(tp, tp.sigmoid(in[0]), labels);
    };
    Tensor logits = Tensor::zeros({8});
    for (double& v : logits.data) v = rng.uniform(-2, 2);
    CHECK(grad_check(build, {logits}).max_rel_err < 1e-6);
}

TEST_CASE("train on synthetic recurrent data beats chance", "[train]") {
    EventStream s = synth_recurrent(40, 1500, 0.9, 0.5, 11);
    SplitPlan plan = chronological_split(s);
    TrainConfig cfg = small_cfg(5);
    cfg.epochs = 1;
    ModelParams params(cfg.model_config(s.edge_dim));
    TrainResult r = train(s, plan, params, cfg);
    CHECK(r.report.val_ap_curve.size() == 1);
    CHECK(r.report.ap > 0.5);  // strictly better than a random scorer after one epoch
}

TEST_CASE("training is deterministic and lr=0 freezes parameters", "[train]") {
    EventStream s = synth_recurrent(30, 600, 0.8, 0.5, 21);
    SplitPlan plan = chronological_split(s);

    auto curves = [&](std::uint64_t seed) {
        TrainConfig cfg = small_cfg(seed);
        ModelParams params(cfg.model_config(s.edge_dim));
        return train(s, plan, params, cfg).report.train_loss_curve;
    };
    CHECK(curves(9) == curves(9));
    CHECK(curves(9) != curves(10));

    // lr = 0: parameters keep their init values, loss stays flat
    TrainConfig cfg = small_cfg(3);
    cfg.lr = 0.0;
    cfg.epochs = 2;
    ModelParams params(cfg.model_config(s.edge_dim));
    ModelParams init_copy(cfg.model_config(s.edge_dim));
    init_copy.init_weights(mix_seed(cfg.seed, "init"));
    TrainResult r = train(s, plan, params, cfg);
    for (std::size_t i = 0; i < params.registry().size(); ++i)
        CHECK(params.registry()[i].p->v == init_copy.registry()[i].p->v);
    CHECK(r.report.train_loss_curve[0] == Catch::Approx(r.report.train_loss_curve[1]));
}

TEST_CASE("training loss decreases in expectation", "[train]") {
    std::vector<double> first, third;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        EventStream s = synth_recurrent(40, 1200, 0.9, 0.5, 100 + seed);
        SplitPlan plan = chronological_split(s);
        TrainConfig cfg = small_cfg(seed);
        cfg.epochs = 3;
        cfg.patience = 10;
        ModelParams params(cfg.model_config(s.edge_dim));
        TrainResult r = train(s, plan, params, cfg);
        first.push_back(r.report.train_loss_curve.front());
        third.push_back(r.report.train_loss_curve[2]);
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    CHECK(median(third) < median(first));
}

TEST_CASE("evaluation leaves parameters untouched and is repeatable", "[train]") {
    EventStream s = synth_recurrent(30, 800, 0.85, 0.5, 77);
    SplitPlan plan = chronological_split(s);
    TrainConfig cfg = small_cfg(13);
    ModelParams params(cfg.model_config(s.edge_dim));
    TrainResult r = train(s, plan, params, cfg);

    const std::uint64_t before = hash_params(params);
    MpfaScorer scorer(s, params, {}, r.state_at_test);
    EvalReport e1 = evaluate_linkpred(s, plan, scorer, EvalRange::Test, cfg.batch_size, 42);
    CHECK(hash_params(params) == before);

    // scoring twice from the same snapshot gives identical reports
    MpfaScorer scorer2(s, params, {}, r.state_at_test);
    EvalReport e2 = evaluate_linkpred(s, plan, scorer2, EvalRange::Test, cfg.batch_size, 42);
    CHECK(e1.ap == e2.ap);
    CHECK(e1.auc == e2.auc);
    CHECK(e1.acc == e2.acc);
    CHECK(e1.n_scored == e2.n_scored);

    // perfect/pathological scores sanity: all positives 1, negatives 0
    std::vector<double> sc;
    std::vector<int> lb;
    for (int i = 0; i < 50; ++i) {
        sc.push_back(1.0);
        lb.push_back(1);
        sc.push_back(0.0);
        lb.push_back(0);
    }
    CHECK(metric_ap(sc, lb) == 1.0);
    CHECK(metric_auc(sc, lb) == 1.0);
    CHECK(metric_acc(sc, lb) == 1.0);

    // evaluating before the train range is consumed is a protocol error
    TemporalState fresh_state(s.num_nodes, cfg.d, cfg.d_h);
    MpfaScorer early(s, params, {}, fresh_state.snapshot());
    CHECK_THROWS_AS(evaluate_linkpred(s, plan, early, EvalRange::Test, cfg.batch_size, 42),
                    ProtocolError);
}

TEST_CASE("inductive evaluation scores only masked events", "[train]") {
    EventStream s = synth_recurrent(40, 1500, 0.8, 0.5, 55);
    SplitPlan base = chronological_split(s);
    SplitPlan plan = inductive_mask(s, base, 0.3, 99);
    TrainConfig cfg = small_cfg(4);
    cfg.mode = "inductive";
    ModelParams params(cfg.model_config(s.edge_dim));
    TrainResult r = train(s, plan, params, cfg);

    MpfaScorer scorer(s, params, ablation_from_name(cfg.ablation), r.state_at_test);
    // drive the scorer manually to inspect which events were scored
    scorer.check_position(static_cast<long>(plan.train_indices.size()) +
                          (plan.val_end - plan.train_end));
    Rng neg(1);
    long scored = 0, kept_expected = 0;
    for (Batch& b : make_batches(plan.val_end, plan.n, cfg.batch_size)) {
        negative_sample(s, b, neg);
        ScoreBatchResult res = scorer.score_and_advance(b, &plan);
        for (long idx : res.scored) {
            const Event& e = s.events[idx];
            CHECK((plan.is_masked(e.src) || plan.is_masked(e.dst)));
        }
        scored += static_cast<long>(res.scored.size());
    }
    for (long i = plan.val_end; i < plan.n; ++i)
        kept_expected += plan.eval_keeps(s.events[i]) ? 1 : 0;
    CHECK(scored == kept_expected);
    CHECK(scored > 0);

    // no training event touches a masked node (checked exhaustively)
    for (long idx : plan.train_indices) {
        CHECK_FALSE(plan.is_masked(s.events[idx].src));
        CHECK_FALSE(plan.is_masked(s.events[idx].dst));
    }
}

TEST_CASE("mlp head oracles", "[train]") {
    Rng rng(8);
    // oracle features: the label itself -> separable, AUC 1
    std::vector<Tensor> xtr, xte;
    std::vector<int> ytr, yte;
    for (int i = 0; i < 400; ++i) {
        const int y = static_cast<int>(rng.below(2));
        xtr.push_back(Tensor::vec({static_cast<double>(y)}));
        ytr.push_back(y);
    }
    for (int i = 0; i < 400; ++i) {
        const int y = static_cast<int>(rng.below(2));
        xte.push_back(Tensor::vec({static_cast<double>(y)}));
        yte.push_back(y);
    }
    CHECK(train_eval_mlp_head(xtr, ytr, xte, yte, 1) == 1.0);

    // featureless noise: AUC stays near one half
    std::vector<Tensor> ntr, nte;
    std::vector<int> lytr, lyte;
    for (int i = 0; i < 1500; ++i) {
        ntr.push_back(Tensor::vec({rng.uniform(-1, 1), rng.uniform(-1, 1)}));
        lytr.push_back(static_cast<int>(rng.below(2)));
        nte.push_back(Tensor::vec({rng.uniform(-1, 1), rng.uniform(-1, 1)}));
        lyte.push_back(static_cast<int>(rng.below(2)));
    }
    const double auc = train_eval_mlp_head(ntr, lytr, nte, lyte, 2, 1e-3, 10);
    CHECK(auc > 0.47);
    CHECK(auc < 0.53);

    // single-class training labels are an error
    std::vector<int> zeros(ytr.size(), 0);
    CHECK_THROWS_AS(train_eval_mlp_head(xtr, zeros, xte, yte, 1), MetricError);
}

TEST_CASE("node classification end to end", "[train]") {
    // synthetic labels carried by the stream; independent of structure, so
    // the pipeline should land near AUC 0.5, and it must run through the
    // full replay path without errors.
    EventStream s = synth_recurrent(30, 1200, 0.8, 0.5, 31);
    Rng lrng(3);
    for (Event& e : s.events) e.label = static_cast<int>(lrng.below(2));
    SplitPlan plan = chronological_split(s);
    TrainConfig cfg = small_cfg(17);
    ModelParams params(cfg.model_config(s.edge_dim));
    params.init_weights(mix_seed(cfg.seed, "init"));
    EvalReport rep = node_classification(s, plan, params, cfg);
    CHECK(rep.task == "node_classification");
    CHECK(rep.auc > 0.35);
    CHECK(rep.auc < 0.65);

    EventStream unlabeled = synth_recurrent(10, 50, 0.5, 0.1, 1);
    SplitPlan p2 = chronological_split(unlabeled);
    CHECK_THROWS_AS(node_classification(unlabeled, p2, params, cfg), ConfigError);
}

TEST_CASE("sweeps and ablations produce the expected tables", "[train]") {
    EventStream s = synth_recurrent(25, 500, 0.85, 0.5, 71);
    SplitPlan plan = chronological_split(s);
    TrainConfig cfg = small_cfg(2);
    cfg.epochs = 1;

    auto rows = sweep_neighbors(s, plan, cfg, {10});
    REQUIRE(rows.size() == 1);  // k_list=[10] reduces to one standard run
    CHECK(rows[0].value == 10.0);

    auto batch_rows = sweep_param(s, plan, cfg, "batch", {50, 100});
    CHECK(batch_rows.size() == 2);
    CHECK_THROWS_AS(sweep_param(s, plan, cfg, "nonsense", {1}), ConfigError);

    auto ab = run_ablations(s, plan, cfg);
    REQUIRE(ab.size() == 5);
    CHECK(ab[0].variant == "full");
    CHECK(ab[4].variant == "wo_ed");

    // the frozen-memory variant never updates evolving vectors
    ModelParams params(cfg.model_config(s.edge_dim));
    params.init_weights(1);
    MpfaEngine frozen(s, params, ablation_from_name("wo_ed"));
    frozen.reset();
    frozen.advance_range(0, s.size(), 100, nullptr, nullptr);
    frozen.flush_now();
    for (int i = 0; i < s.num_nodes; ++i) {
        CHECK(frozen.state().node(i).update_count == 0);
        for (double v : frozen.state().node(i).h.data) CHECK(v == 0.0);
    }
}

TEST_CASE("edgebank and random baselines", "[baselines]") {
    EdgeMemory mem;
    CHECK(edgebank_score(mem, 1, 2, 5.0) == 0.0);  // unseen
    mem.insert(1, 2, 1.0);
    CHECK(edgebank_score(mem, 1, 2, 5.0) == 1.0);  // seen
    CHECK(edgebank_score(mem, 2, 1, 5.0) == 1.0);  // undirected

    EdgeMemory windowed(3.0);
    windowed.insert(1, 2, 1.0);
    CHECK(edgebank_score(windowed, 1, 2, 3.5) == 1.0);
    CHECK(edgebank_score(windowed, 1, 2, 10.0) == 0.0);  // expired

    // EdgeBank evaluation is exactly repeatable (zero variance) and scores in {0,1}
    EventStream s = synth_recurrent(30, 2000, 0.9, 0.5, 5);
    SplitPlan plan = chronological_split(s);
    auto run = [&]() {
        EdgeBankScorer eb(s);
        eb.warm(plan.train_indices);
        // advance through validation first (insert val positives)
        Rng warm_rng(7);
        for (Batch& b : make_batches(plan.train_end, plan.val_end, 200)) {
            negative_sample(s, b, warm_rng);
            eb.score_and_advance(b, &plan);
        }
        return evaluate_linkpred(s, plan, eb, EvalRange::Test, 200, 9);
    };
    EvalReport a = run(), b = run();
    CHECK(a.ap == b.ap);
    CHECK(a.auc == b.auc);
    CHECK(a.acc == b.acc);

    // insertions never precede scoring within a batch (no leakage)
    EventStream tiny;
    tiny.num_nodes = 4;
    tiny.edge_dim = 0;
    tiny.push_event(Event{0, 1, 1.0, -1}, {});
    tiny.push_event(Event{0, 1, 2.0, -1}, {});
    EdgeBankScorer eb(tiny);
    Batch both = make_batches(0, 2, 2)[0];
    ScoreBatchResult r = eb.score_and_advance(both, nullptr);
    CHECK(r.pos[0] == 0.0);  // first occurrence scored before insertion
    CHECK(r.pos[1] == 0.0);  // same batch: still not inserted during scoring
    Batch again;
    again.idx = {};
    ScoreBatchResult r2 = eb.score_and_advance(again, nullptr);
    (void)r2;
    CHECK(edgebank_score(eb.memory(), 0, 1, 3.0) == 1.0);
}

TEST_CASE("random baseline calibration", "[baselines]") {
    RandomScore rs(3);
    RandomScore rs2(3);
    std::vector<double> scores;
    std::vector<int> labels;
    Rng lab(5);
    for (int i = 0; i < 10000; ++i) {
        const double v = rs();
        CHECK(v == rs2());  // same seed, same stream
        scores.push_back(v);
        labels.push_back(i % 2);
    }
    const double auc = metric_auc(scores, labels);
    CHECK(auc > 0.48);
    CHECK(auc < 0.52);

    // AP approaches the positive prevalence for random scores
    std::vector<double> s2;
    std::vector<int> y2;
    RandomScore rs3(11);
    for (int i = 0; i < 20000; ++i) {
        s2.push_back(rs3());
        y2.push_back(i % 5 == 0 ? 1 : 0);  // prevalence 0.2
    }
    CHECK(metric_ap(s2, y2) == Catch::Approx(0.2).margin(0.05));
}
