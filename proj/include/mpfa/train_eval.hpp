#pragma once

#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mpfa/baselines.hpp"
#include "mpfa/event_stream.hpp"
#include "mpfa/metrics.hpp"
#include "mpfa/model.hpp"
#include "mpfa/optim.hpp"
#include "mpfa/rng.hpp"

namespace mpfa {

struct TrainConfig {
    long batch_size = 200;
    double lr = 1e-4;
    int epochs = 10;
    int patience = 5;
    double grad_clip = 0.0;  // global-norm clip per step; 0 disables
    double lr_min = 0.0;     // >0: cosine-decay the rate from lr to lr_min over the epochs
    double dropout = 0.1;
    int k_neighbors = 10;
    int d = 172;
    int d_h = 172;
    int d_t = 100;
    std::uint64_t seed = 0;
    std::string ablation = "full";
    double train_frac = 0.70;
    double val_frac = 0.15;
    std::string mode = "transductive";
    double inductive_fraction = 0.10;
    int repeats = 1;

    bool inductive() const { return mode == "inductive"; }

    ModelConfig model_config(long edge_dim) const {
        ModelConfig mc;
        mc.d = d;
        mc.d_h = d_h;
        mc.d_t = d_t;
        mc.edge_dim = static_cast<int>(edge_dim);
        mc.k_neighbors = k_neighbors;
        mc.dropout = dropout;
        return mc;
    }

    void validate() const {
        if (batch_size < 1 || epochs < 1 || patience < 1 || k_neighbors < 1)
            throw ConfigError("batch_size, epochs, patience and k_neighbors must be positive");
        if (lr < 0.0) throw ConfigError("lr must be non-negative");
        if (lr == 0.0) std::fprintf(stderr, "warning: lr=0 disables learning\n");
        if (grad_clip < 0.0) throw ConfigError("grad_clip must be non-negative");
        if (lr_min < 0.0 || lr_min > lr) throw ConfigError("lr_min must be in [0, lr]");
        if (d < 1 || d_h < 1 || d_t < 1) throw ConfigError("dims must be positive");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
        const double listed[] = {0.0, 0.1, 0.2, 0.3, 0.4};
        bool in_list = false;
        for (double v : listed) in_list = in_list || std::fabs(dropout - v) < 1e-12;
        if (!in_list)
            std::fprintf(stderr, "warning: dropout %.3f outside the usual sweep set {0,0.1,0.2,0.3,0.4}\n",
                         dropout);
        if (mode != "transductive" && mode != "inductive")
            throw ConfigError("mode must be 'transductive' or 'inductive'");
        if (inductive_fraction <= 0.0 || inductive_fraction >= 1.0)
            throw ConfigError("inductive_fraction must be in (0,1)");
        if (repeats < 1) throw ConfigError("repeats must be >= 1");
        (void)ablation_from_name(ablation);
    }

    SeedBundle seeds() const { return SeedBundle{seed}; }
};

inline std::uint64_t mix_seed(std::uint64_t base, std::string_view name, std::uint64_t salt = 0) {
    Rng r(base ^ fnv1a64(name) ^ (salt * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull));
    return r.next_u64();
}

struct EvalReport {
    std::string task = "link_prediction";
    std::string mode = "transductive";
    double ap = 0.0, auc = 0.0, acc = 0.0;
    long n_scored = 0;
    int best_epoch = -1;
    std::vector<double> train_loss_curve;
    std::vector<double> val_ap_curve;
    double wall_clock_seconds = 0.0;  // volatile; serialized into the manifest only
};

// ---------------------------------------------------------------------------
// scoring interface shared by the model and the non-learned baselines
// ---------------------------------------------------------------------------

struct ScoreBatchResult {
    std::vector<double> pos, neg;
    std::vector<long> scored;
};

class LinkScorer {
public:
    virtual ~LinkScorer() = default;
    virtual ScoreBatchResult score_and_advance(const Batch& batch, const SplitPlan* filter) = 0;
    virtual void check_position(long expected_events_processed) { (void)expected_events_processed; }
};

class MpfaScorer : public LinkScorer {
public:
    MpfaScorer(const EventStream& s, ModelParams& p, AblationFlags f,
               const TemporalState::Snapshot& snap)
        : engine_(s, p, f) {
        engine_.restore_state(snap);
    }

    ScoreBatchResult score_and_advance(const Batch& batch, const SplitPlan* filter) override {
        Tape tape(false);
        StateView view(tape, engine_.state());
        model_ops::DropoutCtx drop;
        MpfaEngine::BatchForward f = engine_.forward_batch(view, batch, filter, drop);
        ScoreBatchResult r;
        for (NodeId id : f.pos_p) r.pos.push_back(tape.value(id)[0]);
        for (NodeId id : f.neg_p) r.neg.push_back(tape.value(id)[0]);
        r.scored = std::move(f.scored);
        engine_.commit_batch(batch);
        return r;
    }

    void check_position(long expected) override {
        if (engine_.state().events_consumed() != expected)
            throw ProtocolError("evaluate: state has consumed " +
                                std::to_string(engine_.state().events_consumed()) +
                                " events, expected " + std::to_string(expected) +
                                " (evaluation before the preceding ranges were consumed)");
    }

    MpfaEngine& engine() { return engine_; }

private:
    MpfaEngine engine_;
};

class EdgeBankScorer : public LinkScorer {
public:
    EdgeBankScorer(const EventStream& s, double window = 0.0) : stream_(&s), mem_(window) {}

    /// Populates the memory with the training edges.
    void warm(const std::vector<long>& train_indices) {
        for (long i : train_indices)
            mem_.insert(stream_->events[i].src, stream_->events[i].dst, stream_->events[i].t);
    }

    ScoreBatchResult score_and_advance(const Batch& batch, const SplitPlan* filter) override {
        ScoreBatchResult r;
        for (std::size_t k = 0; k < batch.idx.size(); ++k) {
            const Event& e = stream_->events[batch.idx[k]];
            if (filter != nullptr && !filter->eval_keeps(e)) continue;
            r.scored.push_back(batch.idx[k]);
            r.pos.push_back(edgebank_score(mem_, e.src, e.dst, e.t));
            if (!batch.neg_dst.empty()) r.neg.push_back(edgebank_score(mem_, e.src, batch.neg_dst[k], e.t));
        }
        // positives are inserted only after the whole batch is scored
        for (long i : batch.idx) mem_.insert(stream_->events[i].src, stream_->events[i].dst, stream_->events[i].t);
        return r;
    }

    const EdgeMemory& memory() const { return mem_; }

private:
    const EventStream* stream_;
    EdgeMemory mem_;
};

class RandomScorer : public LinkScorer {
public:
    RandomScorer(const EventStream& s, std::uint64_t seed) : stream_(&s), rng_(seed) {}

    ScoreBatchResult score_and_advance(const Batch& batch, const SplitPlan* filter) override {
        ScoreBatchResult r;
        for (std::size_t k = 0; k < batch.idx.size(); ++k) {
            const Event& e = stream_->events[batch.idx[k]];
            if (filter != nullptr && !filter->eval_keeps(e)) continue;
            r.scored.push_back(batch.idx[k]);
            r.pos.push_back(rng_());
            if (!batch.neg_dst.empty()) r.neg.push_back(rng_());
        }
        return r;
    }

private:
    const EventStream* stream_;
    RandomScore rng_;
};

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

enum class EvalRange { Val, Test };

/// Scores one evaluation range batch by batch: sample negatives (seeded),
/// score, then let the scorer advance its state with the batch positives.
/// Inductive plans keep only events touching a masked node.
inline EvalReport evaluate_linkpred(const EventStream& stream, const SplitPlan& plan,
                                    LinkScorer& scorer, EvalRange range, long batch_size,
                                    std::uint64_t neg_seed) {
    const long lo = range == EvalRange::Val ? plan.train_end : plan.val_end;
    const long hi = range == EvalRange::Val ? plan.val_end : plan.n;
    const long expected = static_cast<long>(plan.train_indices.size()) +
                          (range == EvalRange::Test ? plan.val_end - plan.train_end : 0);
    scorer.check_position(expected);

    Rng neg_rng(neg_seed);
    std::vector<double> scores;
    std::vector<int> labels;
    long n_scored = 0;
    for (Batch& b : make_batches(lo, hi, batch_size)) {
        negative_sample(stream, b, neg_rng);
        ScoreBatchResult r = scorer.score_and_advance(b, &plan);
        for (double s : r.pos) {
            scores.push_back(s);
            labels.push_back(1);
        }
        for (double s : r.neg) {
            scores.push_back(s);
            labels.push_back(0);
        }
        n_scored += static_cast<long>(r.scored.size());
    }
    if (scores.empty()) throw MetricError("evaluate: no events to score in the requested range");

    EvalReport rep;
    rep.mode = plan.mode == SplitMode::Inductive ? "inductive" : "transductive";
    rep.ap = metric_ap(scores, labels);
    rep.auc = metric_auc(scores, labels);
    rep.acc = metric_acc(scores, labels);
    rep.n_scored = n_scored;
    return rep;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

/// BCE loss of one batch against the engine's current state. Flushes pending
/// updates onto the tape, embeds positives and negatives, and (when
/// `record_grads`) backpropagates into the parameter gradient buffers.
/// Does not commit the batch.
inline double batch_loss(MpfaEngine& engine, const Batch& batch, bool record_grads,
                         double dropout = 0.0, Rng* drop_rng = nullptr) {
    Tape tape(record_grads);
    StateView view(tape, engine.state());
    model_ops::DropoutCtx drop{dropout, dropout > 0.0 && drop_rng != nullptr, drop_rng};
    MpfaEngine::BatchForward f = engine.forward_batch(view, batch, nullptr, drop);
    std::vector<NodeId> all = f.pos_p;
    all.insert(all.end(), f.neg_p.begin(), f.neg_p.end());
    std::vector<int> labels(f.pos_p.size(), 1);
    labels.insert(labels.end(), f.neg_p.size(), 0);
    const NodeId loss = bce_loss(tape, tape.stack_scalars(all), labels);
    const double lv = tape.value(loss)[0];
    if (record_grads) {
        tape.backward(loss);
        view.grads_to_params();
    }
    return lv;
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
inline void clip_grad_norm(const ParamRegistry& reg, double max_norm) {
    double sq = 0.0;
    for (const ParamRef& pr : reg)
        for (double g : pr.p->g.data) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double scale = max_norm / norm;
    for (const ParamRef& pr : reg)
        for (double& g : pr.p->g.data) g *= scale;
}

struct TrainResult {
    EvalReport report;                       // curves plus best-epoch validation metrics
    TemporalState::Snapshot state_at_test;   // warm state positioned at the test range start
};

/// Full training protocol: per epoch, reset state and stream the train range
/// batch by batch (loss -> backward -> Adam -> state commit), then warm
/// through validation without gradients and measure AP. Early-stops on
/// validation AP and restores the best epoch's parameters; the returned
/// snapshot holds the state right after the best epoch's validation pass.
inline TrainResult train(const EventStream& stream, const SplitPlan& plan, ModelParams& params,
                         const TrainConfig& cfg) {
    cfg.validate();
    if (plan.train_indices.empty()) throw StateError("train: empty training range");
    const AblationFlags flags = ablation_from_name(cfg.ablation);

    params.init_weights(mix_seed(cfg.seed, "init"));
    Adam adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    ParamRegistry reg = params.registry();
    MpfaEngine engine(stream, params, flags);

    TrainResult out;
    out.report.mode = cfg.mode;
    double best_ap = -1.0;
    int since_improve = 0;
    std::vector<Tensor> best_params;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (cfg.lr_min > 0.0 && cfg.epochs > 1) {
            const double phase = static_cast<double>(epoch - 1) / static_cast<double>(cfg.epochs - 1);
            adam.set_lr(cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + std::cos(3.14159265358979324 * phase)));
        }
        engine.reset();
        Rng neg_rng(mix_seed(cfg.seed, "negatives.train", static_cast<std::uint64_t>(epoch)));
        Rng drop_rng(mix_seed(cfg.seed, "dropout", static_cast<std::uint64_t>(epoch)));
        double loss_sum = 0.0;
        long batches = 0;
        for (Batch& b : make_batches(plan.train_indices, cfg.batch_size)) {
            negative_sample(stream, b, neg_rng);
            const double lv = batch_loss(engine, b, true, cfg.dropout, &drop_rng);
            if (!std::isfinite(lv))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batches));
            if (cfg.grad_clip > 0.0) clip_grad_norm(reg, cfg.grad_clip);
            adam.step(reg);
            engine.commit_batch(b);
            loss_sum += lv;
            ++batches;
        }
        out.report.train_loss_curve.push_back(loss_sum / static_cast<double>(std::max<long>(1, batches)));

        // validation pass: state warm-up without gradient, negatives fixed per run
        engine.flush_now();
        Rng val_rng(mix_seed(cfg.seed, "negatives.val"));
        MpfaEngine::RangeScores rs =
            engine.advance_range(plan.train_end, plan.val_end, cfg.batch_size, &plan, &val_rng);
        std::vector<double> scores = rs.pos;
        scores.insert(scores.end(), rs.neg.begin(), rs.neg.end());
        std::vector<int> labels(rs.pos.size(), 1);
        labels.insert(labels.end(), rs.neg.size(), 0);
        const double val_ap = metric_ap(scores, labels);
        out.report.val_ap_curve.push_back(val_ap);

        if (val_ap > best_ap) {
            best_ap = val_ap;
            since_improve = 0;
            out.report.best_epoch = epoch;
            out.report.ap = val_ap;
            out.report.auc = metric_auc(scores, labels);
            out.report.acc = metric_acc(scores, labels);
            out.report.n_scored = static_cast<long>(rs.pos.size());
            best_params.clear();
            for (const ParamRef& pr : reg) best_params.push_back(pr.p->v);
            out.state_at_test = engine.snapshot_state();
        } else if (++since_improve >= cfg.patience) {
            break;
        }
    }

    for (std::size_t i = 0; i < reg.size(); ++i) reg[i].p->v = best_params[i];
    return out;
}

// ---------------------------------------------------------------------------
// dynamic node classification
// ---------------------------------------------------------------------------

/// Trains/evaluates a small 2-layer MLP head (d -> d -> 1, sigmoid) with BCE
/// and Adam, returning AUC over the test features. Exposed separately so the
/// feature pipeline can be swapped for oracle features in tests.
inline double train_eval_mlp_head(const std::vector<Tensor>& x_train, const std::vector<int>& y_train,
                                  const std::vector<Tensor>& x_test, const std::vector<int>& y_test,
                                  std::uint64_t seed, double lr = 1e-3, int epochs = 50,
                                  long batch_size = 200) {
    if (x_train.empty() || x_test.empty()) throw ConfigError("mlp head: empty feature sets");
    {
        long pos = 0;
        for (int y : y_train) pos += y;
        if (pos == 0 || pos == static_cast<long>(y_train.size()))
            throw MetricError("mlp head: training labels are single-class; classifier undefined");
    }
    const long dim = x_train[0].numel();
    Param w1, b1, w2, b2;
    w1.init_zeros({dim, dim});
    b1.init_zeros({dim});
    w2.init_zeros({1, dim});
    b2.init_zeros({1});
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& v : w1.v.data) v = rng.uniform(-bound, bound);
    for (double& v : w2.v.data) v = rng.uniform(-bound, bound);
    ParamRegistry reg{{"w1", &w1}, {"b1", &b1}, {"w2", &w2}, {"b2", &b2}};
    Adam adam(AdamConfig{lr, 0.9, 0.999, 1e-8});

    const long n = static_cast<long>(x_train.size());
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (long lo = 0; lo < n; lo += batch_size) {
            const long hi = std::min(n, lo + batch_size);
            Tape tape(true);
            NodeId w1i = tape.param(w1.v), b1i = tape.param(b1.v);
            NodeId w2i = tape.param(w2.v), b2i = tape.param(b2.v);
            std::vector<NodeId> probs;
            std::vector<int> labels;
            for (long i = lo; i < hi; ++i) {
                const NodeId x = tape.constant(x_train[static_cast<std::size_t>(i)]);
                const NodeId hsig = tape.relu(linear(tape, w1i, x, b1i));
                probs.push_back(tape.sigmoid(linear(tape, w2i, hsig, b2i)));
                labels.push_back(y_train[static_cast<std::size_t>(i)]);
            }
            const NodeId loss = bce_loss(tape, tape.stack_scalars(probs), labels);
            tape.backward(loss);
            w1.g = tape.grad_or_zero(w1i);
            b1.g = tape.grad_or_zero(b1i);
            w2.g = tape.grad_or_zero(w2i);
            b2.g = tape.grad_or_zero(b2i);
            adam.step(reg);
        }
    }

    std::vector<double> scores;
    scores.reserve(x_test.size());
    for (const Tensor& x : x_test) {
        Tape tape(false);
        const NodeId xi = tape.constant(x);
        const NodeId hsig = tape.relu(linear(tape, tape.constant(w1.v), xi, tape.constant(b1.v)));
        scores.push_back(tape.value(tape.sigmoid(linear(tape, tape.constant(w2.v), hsig, tape.constant(b2.v))))[0]);
    }
    return metric_auc(scores, y_test);
}

/// Replays the stream with the frozen link model, harvesting the source-node
/// embedding at every labeled event; trains the head on train-range
/// embeddings and reports AUC on the test range.
inline EvalReport node_classification(const EventStream& stream, const SplitPlan& plan,
                                      ModelParams& params, const TrainConfig& cfg) {
    if (!stream.has_labels())
        throw ConfigError("node_classification: dataset carries no state labels");
    MpfaEngine engine(stream, params, ablation_from_name(cfg.ablation));
    engine.reset();
    auto collected = engine.replay_collect_src(0, plan.n, cfg.batch_size);

    std::vector<Tensor> x_train, x_test;
    std::vector<int> y_train, y_test;
    for (auto& [idx, z] : collected) {
        const int y = stream.events[idx].label;
        if (idx < plan.train_end) {
            x_train.push_back(std::move(z));
            y_train.push_back(y);
        } else if (idx >= plan.val_end) {
            x_test.push_back(std::move(z));
            y_test.push_back(y);
        }
    }
    EvalReport rep;
    rep.task = "node_classification";
    rep.mode = cfg.mode;
    rep.auc = train_eval_mlp_head(x_train, y_train, x_test, y_test, mix_seed(cfg.seed, "nodeclass.init"));
    rep.n_scored = static_cast<long>(x_test.size());
    return rep;
}

// ---------------------------------------------------------------------------
// sweeps and ablations
// ---------------------------------------------------------------------------

struct SweepRow {
    double value = 0.0;
    double ap = 0.0, auc = 0.0, acc = 0.0;
};

/// Trains and test-evaluates one full model per configuration value.
inline SweepRow run_single(const EventStream& stream, const SplitPlan& plan, const TrainConfig& cfg,
                           double tag_value) {
    ModelParams params(cfg.model_config(stream.edge_dim));
    TrainResult tr = train(stream, plan, params, cfg);
    MpfaScorer scorer(stream, params, ablation_from_name(cfg.ablation), tr.state_at_test);
    EvalReport rep = evaluate_linkpred(stream, plan, scorer, EvalRange::Test, cfg.batch_size,
                                       mix_seed(cfg.seed, "negatives.test"));
    return SweepRow{tag_value, rep.ap, rep.auc, rep.acc};
}

inline std::vector<SweepRow> sweep_neighbors(const EventStream& stream, const SplitPlan& plan,
                                             TrainConfig cfg, const std::vector<int>& k_list) {
    std::vector<SweepRow> rows;
    for (int k : k_list) {
        cfg.k_neighbors = k;
        rows.push_back(run_single(stream, plan, cfg, static_cast<double>(k)));
    }
    return rows;
}

/// Generic single-knob sweep: batch | embed | neighbors | dropout | lr.
inline std::vector<SweepRow> sweep_param(const EventStream& stream, const SplitPlan& plan,
                                         TrainConfig cfg, const std::string& param,
                                         const std::vector<double>& values) {
    std::vector<SweepRow> rows;
    for (double v : values) {
        TrainConfig c = cfg;
        if (param == "batch")
            c.batch_size = static_cast<long>(v);
        else if (param == "embed")
            c.d = c.d_h = static_cast<int>(v);
        else if (param == "neighbors")
            c.k_neighbors = static_cast<int>(v);
        else if (param == "dropout")
            c.dropout = v;
        else if (param == "lr")
            c.lr = v;
        else
            throw ConfigError("sweep: unknown parameter '" + param +
                              "' (batch|embed|neighbors|dropout|lr)");
        rows.push_back(run_single(stream, plan, c, v));
    }
    return rows;
}

struct AblationRow {
    std::string variant;
    double ap = 0.0, auc = 0.0, acc = 0.0;
};

/// One train+eval per variant, shared seed: full, W/O RP, W/O EP, W/O RED,
/// W/O ED.
inline std::vector<AblationRow> run_ablations(const EventStream& stream, const SplitPlan& plan,
                                              TrainConfig cfg) {
    std::vector<AblationRow> rows;
    for (const char* variant : {"full", "wo_rp", "wo_ep", "wo_red", "wo_ed"}) {
        cfg.ablation = variant;
        SweepRow r = run_single(stream, plan, cfg, 0.0);
        rows.push_back(AblationRow{variant, r.ap, r.auc, r.acc});
    }
    return rows;
}

}  // namespace mpfa
