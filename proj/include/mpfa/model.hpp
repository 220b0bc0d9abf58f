#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mpfa/errors.hpp"
#include "mpfa/event_stream.hpp"
#include "mpfa/model_params.hpp"
#include "mpfa/rng.hpp"
#include "mpfa/tape.hpp"
#include "mpfa/temporal_state.hpp"
#include "mpfa/time_encoding.hpp"

namespace mpfa {

/// Fig.-4-style ablation switches. `freeze_memory` disables the evolving
/// information update entirely; the *_path flags zero one perspective.
struct AblationFlags {
    bool no_raw = false;        // W/O RP
    bool no_evolving = false;   // W/O EP
    bool freeze_memory = false; // W/O ED (with no_raw) / W/O RED (alone)
};

inline AblationFlags ablation_from_name(const std::string& name) {
    if (name.empty() || name == "full") return {};
    if (name == "wo_rp") return {true, false, false};
    if (name == "wo_ep") return {false, true, false};
    if (name == "wo_red") return {false, false, true};
    if (name == "wo_ed") return {true, false, true};
    throw ConfigError("unknown ablation '" + name + "' (full|wo_rp|wo_ep|wo_red|wo_ed)");
}

/// One attention weight for export: perspective is "evolving" (head-averaged
/// softmax weight) or "raw" (feedback coefficient).
struct AttnDumpRow {
    long event_idx = 0;
    int node = 0;
    const char* perspective = "";
    int neighbor_rank = 0;
    double dt = 0.0;
    double weight = 0.0;
};

/// Per-batch binding of parameters and node states onto one tape. Parameters
/// become tracked leaves (when recording); node h vectors are constants
/// unless the pending-update flush registered a live tape node for them.
class StateView {
public:
    StateView(Tape& tape, const TemporalState& state) : tape_(&tape), state_(&state) {}

    Tape& tape() { return *tape_; }

    NodeId p(Param& param) {
        auto it = params_.find(&param);
        if (it != params_.end()) return it->second;
        const NodeId id = tape_->param(param.v);
        params_.emplace(&param, id);
        return id;
    }

    NodeId h(int node) {
        auto live = live_h_.find(node);
        if (live != live_h_.end()) return live->second;
        auto it = const_h_.find(node);
        if (it != const_h_.end()) return it->second;
        const NodeId id = tape_->constant(state_->node(node).h);
        const_h_.emplace(node, id);
        return id;
    }

    void set_live_h(int node, NodeId id) { live_h_[node] = id; }

    /// After backward(): copy accumulated gradients into the Param buffers.
    void grads_to_params() {
        for (auto& [param, id] : params_) param->g = tape_->grad_or_zero(id);
    }

private:
    Tape* tape_;
    const TemporalState* state_;
    std::unordered_map<Param*, NodeId> params_;
    std::unordered_map<int, NodeId> live_h_;
    std::unordered_map<int, NodeId> const_h_;
};

namespace model_ops {

/// Frozen concatenation feeding the event-message map for the update of
/// `owner`: [z_owner || e || z_partner || phi(t - t_last(owner))].
inline Tensor build_message_input(const TemporalState& st, const TimeEncoder& tenc, int owner,
                                  int partner, double t, std::span<const double> edge_feat) {
    const NodeState& own = st.node(owner);
    const NodeState& par = st.node(partner);
    const Tensor phi = tenc.encode(t - own.t_last);
    Tensor out = Tensor::zeros({own.z_last.numel() + static_cast<long>(edge_feat.size()) +
                                par.z_last.numel() + phi.numel()});
    long off = 0;
    for (long i = 0; i < own.z_last.numel(); ++i) out[off++] = own.z_last[i];
    for (double v : edge_feat) out[off++] = v;
    for (long i = 0; i < par.z_last.numel(); ++i) out[off++] = par.z_last[i];
    for (long i = 0; i < phi.numel(); ++i) out[off++] = phi[i];
    return out;
}

/// Frozen raw record for `owner`'s store: partner embedding first,
/// [z_partner || e || z_owner || phi(t - t_last(owner))].
inline Tensor build_raw_input(const TemporalState& st, const TimeEncoder& tenc, int owner,
                              int partner, double t, std::span<const double> edge_feat) {
    const NodeState& own = st.node(owner);
    const NodeState& par = st.node(partner);
    const Tensor phi = tenc.encode(t - own.t_last);
    Tensor out = Tensor::zeros({par.z_last.numel() + static_cast<long>(edge_feat.size()) +
                                own.z_last.numel() + phi.numel()});
    long off = 0;
    for (long i = 0; i < par.z_last.numel(); ++i) out[off++] = par.z_last[i];
    for (double v : edge_feat) out[off++] = v;
    for (long i = 0; i < own.z_last.numel(); ++i) out[off++] = own.z_last[i];
    for (long i = 0; i < phi.numel(); ++i) out[off++] = phi[i];
    return out;
}

/// Event message X = W_msg [z_i || e || z_j || phi(dt)] + b.
inline NodeId event_message(StateView& view, ModelParams& mp, NodeId msg_input) {
    return linear(view.tape(), view.p(mp.w_msg), msg_input, view.p(mp.b_msg));
}

inline GruIds bind_gru(StateView& view, ModelParams& mp) {
    return GruIds{view.p(mp.gru.w_z), view.p(mp.gru.u_z), view.p(mp.gru.b_z),
                  view.p(mp.gru.w_r), view.p(mp.gru.u_r), view.p(mp.gru.b_r),
                  view.p(mp.gru.w_h), view.p(mp.gru.u_h), view.p(mp.gru.b_h)};
}

struct DropoutCtx {
    double p = 0.0;
    bool training = false;
    Rng* rng = nullptr;

    NodeId apply(Tape& t, NodeId x) const {
        if (!training || p <= 0.0) return x;
        return t.dropout(x, p, true, *rng);
    }
};

struct PerspectiveOut {
    NodeId agg;                // aggregate vector (zeros when no neighbors)
    std::vector<double> attn;  // per-neighbor weight (head-averaged for evolving)
    std::vector<std::vector<double>> attn_heads;  // evolving only: weights per head
};

/// Temporal self-attention over the continuously evolving neighbor states.
/// Query [h_i || phi(0)], keys/values [h_j || e || phi(t - t_j)], two heads
/// with scaled dot-product softmax, head concat mapped back to d_h.
inline PerspectiveOut evolving_attention(StateView& view, ModelParams& mp, const TimeEncoder& tenc,
                                         int node, double t,
                                         const std::vector<const HistoryEntry*>& nbrs,
                                         const EventStream& stream, const DropoutCtx& drop) {
    Tape& tp = view.tape();
    const long j = static_cast<long>(nbrs.size());
    if (j == 0) return {tp.constant(Tensor::zeros({mp.cfg.d_h})), {}};

    const NodeId q_in = tp.concat({view.h(node), tp.constant(tenc.encode(0.0))});
    std::vector<NodeId> rows;
    rows.reserve(static_cast<std::size_t>(j));
    for (const HistoryEntry* e : nbrs) {
        auto feat = stream.edge_feat(e->event_idx);
        std::vector<NodeId> parts{view.h(e->partner)};
        if (!feat.empty())
            parts.push_back(tp.constant(Tensor::vec({feat.begin(), feat.end()})));
        parts.push_back(tp.constant(tenc.encode(t - e->t)));
        rows.push_back(tp.concat(parts));
    }
    const NodeId rmat = tp.stack_rows(rows);

    const double scale = 1.0 / std::sqrt(static_cast<double>(mp.cfg.head_dim()));
    std::vector<NodeId> head_out;
    std::vector<double> attn_mean(static_cast<std::size_t>(j), 0.0);
    std::vector<std::vector<double>> attn_heads;
    for (int h = 0; h < ModelConfig::num_heads; ++h) {
        HeadParams& hp = mp.heads[h];
        const NodeId q = linear(tp, view.p(hp.w_q), q_in, view.p(hp.b_q));
        const NodeId keys = tp.add_rowvec(tp.matmul_nt(rmat, view.p(hp.w_k)), view.p(hp.b_k));
        const NodeId vals = tp.add_rowvec(tp.matmul_nt(rmat, view.p(hp.w_v)), view.p(hp.b_v));
        const NodeId scores = tp.affine(tp.matvec(keys, q), scale, 0.0);
        const NodeId attn = tp.softmax(scores);
        head_out.push_back(tp.matvec_t(vals, attn));
        const Tensor& av = tp.value(attn);
        attn_heads.emplace_back(av.data.begin(), av.data.end());
        for (long i = 0; i < j; ++i)
            attn_mean[static_cast<std::size_t>(i)] += av[i] / ModelConfig::num_heads;
    }
    NodeId agg = linear(tp, view.p(mp.w_con), tp.concat(head_out), view.p(mp.b_con));
    agg = drop.apply(tp, agg);
    return {agg, std::move(attn_mean), std::move(attn_heads)};
}

/// Growth feature g = relu(W [h_i || h_j || phi(t - t_j)] + b).
inline NodeId growth_feature(StateView& view, ModelParams& mp, const TimeEncoder& tenc, int node,
                             int partner, double t, double t_j) {
    Tape& tp = view.tape();
    const NodeId in = tp.concat({view.h(node), view.h(partner), tp.constant(tenc.encode(t - t_j))});
    return tp.relu(linear(tp, view.p(mp.w_growth), in, view.p(mp.b_growth)));
}

/// Time encodings phi(t - t_j) for a neighbor list, stacked as [j x d_t].
inline Tensor stack_time_encodings(const TimeEncoder& tenc, double t,
                                   const std::vector<const HistoryEntry*>& nbrs) {
    Tensor out = Tensor::zeros({static_cast<long>(nbrs.size()), tenc.dim()});
    for (std::size_t r = 0; r < nbrs.size(); ++r) {
        const Tensor phi = tenc.encode(t - nbrs[r]->t);
        std::copy(phi.data.begin(), phi.data.end(), out.data.begin() + static_cast<long>(r) * tenc.dim());
    }
    return out;
}

/// Feedback coefficients: per-neighbor sigmoid logits (each in (0,1))
/// normalized by a softmax across the neighborhood. Computed in matrix form
/// over the whole neighborhood.
inline NodeId feedback_coefficients(StateView& view, ModelParams& mp, const TimeEncoder& tenc,
                                    int node, double t,
                                    const std::vector<const HistoryEntry*>& nbrs) {
    Tape& tp = view.tape();
    const NodeId phi_mat = tp.constant(stack_time_encodings(tenc, t, nbrs));
    std::vector<NodeId> gin_rows;
    gin_rows.reserve(nbrs.size());
    std::vector<NodeId> h_pair{view.h(node), view.h(node)};
    for (const HistoryEntry* e : nbrs) {
        h_pair[1] = view.h(e->partner);
        gin_rows.push_back(tp.concat(h_pair));
    }
    const NodeId gin = tp.concat({tp.stack_rows(gin_rows), phi_mat});
    const NodeId growth =
        tp.relu(tp.add_rowvec(tp.matmul_nt(gin, view.p(mp.w_growth)), view.p(mp.b_growth)));
    const NodeId logits =
        tp.sigmoid(tp.add_rowvec(tp.matmul_nt(growth, view.p(mp.w_fb)), view.p(mp.b_fb)));
    return tp.softmax(tp.reshape(logits, {static_cast<long>(nbrs.size())}));
}

/// Raw aggregation: P_r = sum_j a_j * W_t2 relu(W_t1 [r_j || phi] + b1) + ...
/// with r_j = W_raw * frozen_input_j + b applied lazily at aggregation time.
inline PerspectiveOut raw_aggregation(StateView& view, ModelParams& mp, const TimeEncoder& tenc,
                                      int node, double t,
                                      const std::vector<const HistoryEntry*>& nbrs,
                                      const DropoutCtx& drop) {
    Tape& tp = view.tape();
    const long j = static_cast<long>(nbrs.size());
    if (j == 0) return {tp.constant(Tensor::zeros({mp.cfg.d_h})), {}};

    const NodeId coeffs = feedback_coefficients(view, mp, tenc, node, t, nbrs);

    // frozen per-event records, stacked once as a constant matrix
    Tensor raw_mat = Tensor::zeros({j, mp.cfg.msg_in_dim()});
    for (long r = 0; r < j; ++r) {
        const Tensor& in = nbrs[static_cast<std::size_t>(r)]->raw_input;
        std::copy(in.data.begin(), in.data.end(), raw_mat.data.begin() + r * mp.cfg.msg_in_dim());
    }
    const NodeId r_all =
        tp.add_rowvec(tp.matmul_nt(tp.constant(std::move(raw_mat)), view.p(mp.w_raw)), view.p(mp.b_raw));
    const NodeId ctx = tp.concat({r_all, tp.constant(stack_time_encodings(tenc, t, nbrs))});
    const NodeId hidden = tp.relu(tp.add_rowvec(tp.matmul_nt(ctx, view.p(mp.w_t1)), view.p(mp.b_t1)));
    const NodeId rows = tp.add_rowvec(tp.matmul_nt(hidden, view.p(mp.w_t2)), view.p(mp.b_t2));

    NodeId agg = tp.matvec_t(rows, coeffs);
    agg = drop.apply(tp, agg);
    const Tensor& av = tp.value(coeffs);
    return {agg, {av.data.begin(), av.data.end()}};
}

/// Attention coupling: three projections (self change, evolving aggregate,
/// raw aggregate) fused by a two-layer feedforward net with ReLU after the
/// first layer. Output dimension d.
inline NodeId couple(StateView& view, ModelParams& mp, const TimeEncoder& tenc, int node, double t,
                     double t_last, NodeId p_e, NodeId p_r, const DropoutCtx& drop) {
    Tape& tp = view.tape();
    const NodeId h = view.h(node);
    const NodeId z1 =
        linear(tp, view.p(mp.w_self), tp.concat({h, tp.constant(tenc.encode(t - t_last))}),
               view.p(mp.b_self));
    const NodeId z2 = linear(tp, view.p(mp.w_evo_mix), tp.concat({h, p_e}), view.p(mp.b_evo_mix));
    const NodeId z3 = linear(tp, view.p(mp.w_raw_mix), tp.concat({h, p_r}), view.p(mp.b_raw_mix));
    const NodeId cat = tp.concat({z1, z2, z3});
    NodeId hidden = tp.relu(linear(tp, view.p(mp.w_fnn1), cat, view.p(mp.b_fnn1)));
    hidden = drop.apply(tp, hidden);
    return linear(tp, view.p(mp.w_fnn2), hidden, view.p(mp.b_fnn2));
}

/// Link decoder: MLP over [z_i || z_j] with two ReLU hidden layers and a
/// sigmoid output, strictly inside (0,1).
inline NodeId decode_link(StateView& view, ModelParams& mp, NodeId z_i, NodeId z_j) {
    Tape& tp = view.tape();
    const NodeId cat = tp.concat({z_i, z_j});
    const NodeId a1 = tp.relu(linear(tp, view.p(mp.w_dec1), cat, view.p(mp.b_dec1)));
    const NodeId a2 = tp.relu(linear(tp, view.p(mp.w_dec2), a1, view.p(mp.b_dec2)));
    return tp.sigmoid(linear(tp, view.p(mp.w_dec3), a2, view.p(mp.b_dec3)));
}

}  // namespace model_ops

/// Deferred evolving-information update. The concatenated message input is
/// frozen at event-commit time; the trainable maps (message map + update
/// cell) are applied on the next batch's tape so they receive gradient.
struct PendingUpdate {
    int node = 0;
    double t = 0.0;
    Tensor msg_input;
};

/// Runtime coupling of parameters, temporal state and the batch protocol.
///
/// Every batch is processed in two phases. Phase one (scoring) flushes the
/// previous batch's pending updates onto the current tape and computes all
/// embeddings against that state. Phase two (commit) runs after the loss --
/// and after the optimizer step during training -- and performs the
/// post-prediction protocol per event in order: record raw entries for both
/// endpoints, queue the evolving updates, store last embeddings, advance
/// last-interaction times.
class MpfaEngine {
public:
    MpfaEngine(const EventStream& stream, ModelParams& params, AblationFlags flags = {})
        : stream_(&stream),
          params_(&params),
          flags_(flags),
          tenc_(params.cfg.d_t),
          state_(stream.num_nodes, params.cfg.d, params.cfg.d_h) {
        if (params.cfg.edge_dim != static_cast<int>(stream.edge_dim))
            throw ConfigError("model edge_dim does not match stream feature dimension");
    }

    const TemporalState& state() const { return state_; }
    TemporalState& state_mut() { return state_; }
    ModelParams& params() { return *params_; }
    const EventStream& stream() const { return *stream_; }
    const TimeEncoder& time_encoder() const { return tenc_; }
    const AblationFlags& flags() const { return flags_; }
    long events_consumed() const { return state_.events_consumed(); }

    void reset() {
        state_.reset();
        pending_.clear();
        z_cache_.clear();
    }

    /// Applies queued evolving updates. On a recording tape the GRU steps are
    /// tracked and the produced h nodes stay live for this batch's
    /// embeddings; values are always committed into the state.
    void flush_pending(StateView& view) {
        for (PendingUpdate& u : pending_) {
            const NodeId x = model_ops::event_message(view, *params_, view.tape().constant(u.msg_input));
            const NodeId h_new = gru_cell(view.tape(), model_ops::bind_gru(view, *params_), x, view.h(u.node));
            view.set_live_h(u.node, h_new);
            state_.store_h(u.node, view.tape().value(h_new));
        }
        pending_.clear();
    }

    /// Value-only flush, for snapshots and batch-free boundaries.
    void flush_now() {
        if (pending_.empty()) return;
        Tape t(false);
        StateView view(t, state_);
        flush_pending(view);
    }

    struct Embedding {
        NodeId z;
        std::vector<double> attn_evolving, attn_raw;
        std::vector<const HistoryEntry*> neighbors;
    };

    /// Embeds one node at time t against the current view. Both perspectives
    /// share the same recent-neighbor list.
    Embedding embed(StateView& view, int node, double t, const model_ops::DropoutCtx& drop) {
        auto nbrs = state_.recent_neighbors(node, t, params_->cfg.k_neighbors);
        Tape& tp = view.tape();
        model_ops::PerspectiveOut evo{tp.constant(Tensor::zeros({params_->cfg.d_h})), {}};
        model_ops::PerspectiveOut raw{tp.constant(Tensor::zeros({params_->cfg.d_h})), {}};
        if (!flags_.no_evolving)
            evo = model_ops::evolving_attention(view, *params_, tenc_, node, t, nbrs, *stream_, drop);
        if (!flags_.no_raw)
            raw = model_ops::raw_aggregation(view, *params_, tenc_, node, t, nbrs, drop);
        const NodeId z = model_ops::couple(view, *params_, tenc_, node, t, state_.node(node).t_last,
                                           evo.agg, raw.agg, drop);
        return Embedding{z, std::move(evo.attn), std::move(raw.attn), std::move(nbrs)};
    }

    /// Scores a batch: probability per positive followed by one per sampled
    /// negative. Embeddings for every positive endpoint are cached for the
    /// commit phase. When `recording` the tape tracks gradients and the BCE
    /// machinery can be attached by the caller via the returned ids.
    struct BatchForward {
        std::vector<NodeId> pos_p, neg_p;
        std::vector<long> scored;  // event indices actually scored
    };

    BatchForward forward_batch(StateView& view, const Batch& batch, const SplitPlan* filter,
                               const model_ops::DropoutCtx& drop) {
        long prev = state_.last_event_idx();
        for (long i : batch.idx) {
            if (i <= prev)
                throw ProtocolError("forward_batch: event " + std::to_string(i) +
                                    " is not after the last processed event " + std::to_string(prev));
            prev = i;
        }
        flush_pending(view);
        BatchForward out;
        for (std::size_t k = 0; k < batch.idx.size(); ++k) {
            const long i = batch.idx[k];
            const Event& e = stream_->events[i];
            const bool keep = filter == nullptr || filter->eval_keeps(e);
            Embedding zs = embed(view, e.src, e.t, drop);
            Embedding zd = embed(view, e.dst, e.t, drop);
            z_cache_[i] = {view.tape().value(zs.z), view.tape().value(zd.z)};
            if (!keep) continue;
            out.scored.push_back(i);
            out.pos_p.push_back(model_ops::decode_link(view, *params_, zs.z, zd.z));
            if (!batch.neg_dst.empty()) {
                const int nd = batch.neg_dst[k];
                Embedding zn = embed(view, nd, e.t, drop);
                out.neg_p.push_back(model_ops::decode_link(view, *params_, zs.z, zn.z));
            }
        }
        return out;
    }

    /// Post-loss state protocol, in event order.
    void commit_batch(const Batch& batch) {
        for (long i : batch.idx) {
            const Event& e = stream_->events[i];
            auto it = z_cache_.find(i);
            if (it == z_cache_.end())
                throw ProtocolError("commit_batch: embeddings for event " + std::to_string(i) +
                                    " were never computed");
            const auto feat = stream_->edge_feat(i);
            // raw records first: they freeze the pre-event picture
            state_.record_raw(e.src, HistoryEntry{e.dst, e.t, i,
                              model_ops::build_raw_input(state_, tenc_, e.src, e.dst, e.t, feat)});
            state_.record_raw(e.dst, HistoryEntry{e.src, e.t, i,
                              model_ops::build_raw_input(state_, tenc_, e.dst, e.src, e.t, feat)});
            if (!flags_.freeze_memory) {
                pending_.push_back(PendingUpdate{e.src, e.t,
                                   model_ops::build_message_input(state_, tenc_, e.src, e.dst, e.t, feat)});
                pending_.push_back(PendingUpdate{e.dst, e.t,
                                   model_ops::build_message_input(state_, tenc_, e.dst, e.src, e.t, feat)});
            }
            state_.set_last_embedding(e.src, std::move(it->second.first));
            state_.set_last_embedding(e.dst, std::move(it->second.second));
            state_.touch(e.src, e.t);
            state_.touch(e.dst, e.t);
            z_cache_.erase(it);
            state_.mark_consumed(state_.events_consumed() + 1, i);
        }
        z_cache_.clear();
    }

    /// One-off forward pass for a hypothetical event; does not mutate state.
    struct ForwardEventResult {
        double p = 0.0;
        Tensor z_src, z_dst;
        std::vector<AttnDumpRow> dumps;
    };

    ForwardEventResult forward_event(int i, int j, double t, long event_idx = -1) {
        Tape tape(false);
        StateView view(tape, state_);
        model_ops::DropoutCtx drop;  // eval: no dropout
        Embedding zi = embed(view, i, t, drop);
        Embedding zj = embed(view, j, t, drop);
        const NodeId p = model_ops::decode_link(view, *params_, zi.z, zj.z);
        ForwardEventResult res;
        res.p = tape.value(p)[0];
        res.z_src = tape.value(zi.z);
        res.z_dst = tape.value(zj.z);
        auto dump_node = [&](int node, const Embedding& emb) {
            for (std::size_t r = 0; r < emb.attn_evolving.size(); ++r)
                res.dumps.push_back(AttnDumpRow{event_idx, node, "evolving", static_cast<int>(r),
                                                t - emb.neighbors[r]->t, emb.attn_evolving[r]});
            for (std::size_t r = 0; r < emb.attn_raw.size(); ++r)
                res.dumps.push_back(AttnDumpRow{event_idx, node, "raw", static_cast<int>(r),
                                                t - emb.neighbors[r]->t, emb.attn_raw[r]});
        };
        dump_node(i, zi);
        dump_node(j, zj);
        return res;
    }

    /// Advances state through [lo, hi) in eval mode. Embeddings are computed
    /// for every event (z_last needs them); scores are returned for events
    /// passing the plan filter, negatives per `neg_dst` of each batch.
    struct RangeScores {
        std::vector<double> pos, neg;
        std::vector<long> scored;
    };

    RangeScores advance_range(long lo, long hi, long batch_size, const SplitPlan* filter, Rng* neg_rng) {
        RangeScores out;
        for (Batch& b : make_batches(lo, hi, batch_size)) {
            if (neg_rng != nullptr) negative_sample(*stream_, b, *neg_rng);
            Tape tape(false);
            StateView view(tape, state_);
            model_ops::DropoutCtx drop;
            BatchForward f = forward_batch(view, b, filter, drop);
            for (NodeId id : f.pos_p) out.pos.push_back(tape.value(id)[0]);
            for (NodeId id : f.neg_p) out.neg.push_back(tape.value(id)[0]);
            out.scored.insert(out.scored.end(), f.scored.begin(), f.scored.end());
            commit_batch(b);
        }
        return out;
    }

    /// Replays [lo, hi) without scoring, harvesting the source embedding of
    /// every labeled event (the node-classification feature pipeline).
    std::vector<std::pair<long, Tensor>> replay_collect_src(long lo, long hi, long batch_size) {
        SplitPlan keep_nothing;  // inductive mode with an empty mask keeps no event
        keep_nothing.mode = SplitMode::Inductive;
        std::vector<std::pair<long, Tensor>> out;
        for (Batch& b : make_batches(lo, hi, batch_size)) {
            Tape tape(false);
            StateView view(tape, state_);
            model_ops::DropoutCtx drop;
            forward_batch(view, b, &keep_nothing, drop);
            for (long i : b.idx)
                if (stream_->events[i].label >= 0) out.emplace_back(i, z_cache_[i].first);
            commit_batch(b);
        }
        return out;
    }

    /// Embeddings cached by forward_batch for a not-yet-committed event.
    const std::pair<Tensor, Tensor>& cached_embeddings(long event_idx) const {
        auto it = z_cache_.find(event_idx);
        if (it == z_cache_.end())
            throw ProtocolError("cached_embeddings: event " + std::to_string(event_idx) +
                                " has no cached embeddings");
        return it->second;
    }

    TemporalState::Snapshot snapshot_state() {
        flush_now();
        return state_.snapshot();
    }

    void restore_state(const TemporalState::Snapshot& s) {
        pending_.clear();
        z_cache_.clear();
        state_.restore(s);
    }

    const std::vector<PendingUpdate>& pending() const { return pending_; }

    // Copyable so finite-difference checks can replay a batch from a fixed
    // starting point.
    MpfaEngine(const MpfaEngine&) = default;
    MpfaEngine& operator=(const MpfaEngine&) = default;

private:
    const EventStream* stream_;
    ModelParams* params_;
    AblationFlags flags_;
    TimeEncoder tenc_;
    TemporalState state_;
    std::vector<PendingUpdate> pending_;
    std::unordered_map<long, std::pair<Tensor, Tensor>> z_cache_;
};

}  // namespace mpfa
