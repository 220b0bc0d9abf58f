#pragma once

#include <algorithm>
#include <vector>

#include "mpfa/errors.hpp"
#include "mpfa/tensor.hpp"

namespace mpfa {

/// Per-node mutable state: evolving information h, the last embedding
/// produced by the coupling layer, and the last interaction time. New nodes
/// start with zero vectors and t_last = 0.
struct NodeState {
    Tensor h;
    Tensor z_last;
    double t_last = 0.0;
    bool exists = false;
    long update_count = 0;
};

/// One element of a node's interaction history. `raw_input` is the frozen
/// concatenation captured at event time (partner embedding first, then edge
/// features, own embedding, time encoding); it never changes afterwards. The
/// same entry also backs the evolving perspective, which reads the partner's
/// current h at query time plus the stored edge features via `event_idx`.
struct HistoryEntry {
    int partner = 0;
    double t = 0.0;
    long event_idx = 0;
    Tensor raw_input;
};

/// Node state table plus per-node recency-ordered interaction history.
/// Mutation is single-writer; snapshots are deep copies safe to hand to
/// other threads.
class TemporalState {
public:
    TemporalState() = default;
    TemporalState(int num_nodes, int d, int d_h)
        : num_nodes_(num_nodes), d_(d), d_h_(d_h) {
        reset();
    }

    int num_nodes() const { return num_nodes_; }
    long events_consumed() const { return events_consumed_; }
    long last_event_idx() const { return last_event_idx_; }
    void mark_consumed(long count, long last_idx) {
        events_consumed_ = count;
        last_event_idx_ = last_idx;
    }

    void reset() {
        nodes_.assign(static_cast<std::size_t>(num_nodes_), NodeState{});
        for (NodeState& n : nodes_) {
            n.h = Tensor::zeros({d_h_});
            n.z_last = Tensor::zeros({d_});
        }
        hist_.assign(static_cast<std::size_t>(num_nodes_), {});
        events_consumed_ = 0;
        last_event_idx_ = -1;
    }

    const NodeState& node(int i) const { return nodes_[check(i)]; }

    const std::vector<HistoryEntry>& history(int i) const { return hist_[check(i)]; }

    /// Up to k most recent interactions of node i strictly before time t,
    /// oldest first. Empty history is legal.
    std::vector<const HistoryEntry*> recent_neighbors(int i, double t, int k) const {
        const auto& h = hist_[check(i)];
        std::vector<const HistoryEntry*> out;
        long idx = static_cast<long>(h.size()) - 1;
        while (idx >= 0 && h[static_cast<std::size_t>(idx)].t >= t) --idx;
        const long first = std::max<long>(0, idx - k + 1);
        out.reserve(static_cast<std::size_t>(idx - first + 1));
        for (long j = first; j <= idx; ++j) out.push_back(&h[static_cast<std::size_t>(j)]);
        return out;
    }

    /// Commits a new evolving vector for node i at time t. The caller (the
    /// model) runs the update cell; this only validates time order and stores
    /// the detached value.
    void apply_update(int i, Tensor h_new, double t) {
        NodeState& n = nodes_[check(i)];
        if (t < n.t_last) throw TimeOrderError("apply_update: t precedes last interaction");
        if (h_new.shape != n.h.shape) throw DimensionError("apply_update: h shape mismatch");
        n.h = std::move(h_new);
        n.t_last = t;
        n.exists = true;
        ++n.update_count;
    }

    /// Marks an interaction time without touching h (used when the update
    /// cell is ablated away or when the h update is applied separately).
    void touch(int i, double t) {
        NodeState& n = nodes_[check(i)];
        if (t < n.t_last) throw TimeOrderError("touch: t precedes last interaction");
        n.t_last = t;
        n.exists = true;
    }

    /// Stores the evolving vector for node i without advancing t_last.
    void store_h(int i, Tensor h_new) {
        NodeState& n = nodes_[check(i)];
        if (h_new.shape != n.h.shape) throw DimensionError("store_h: h shape mismatch");
        n.h = std::move(h_new);
        ++n.update_count;
    }

    void record_raw(int i, HistoryEntry entry) {
        auto& h = hist_[check(i)];
        if (!h.empty() && entry.t < h.back().t)
            throw TimeOrderError("record_raw: t precedes last recorded interaction");
        h.push_back(std::move(entry));
    }

    void set_last_embedding(int i, Tensor z) {
        NodeState& n = nodes_[check(i)];
        if (z.shape != n.z_last.shape) throw DimensionError("set_last_embedding: shape mismatch");
        n.z_last = std::move(z);
    }

    struct Snapshot {
        int num_nodes = 0, d = 0, d_h = 0;
        long events_consumed = 0;
        long last_event_idx = -1;
        std::vector<NodeState> nodes;
        std::vector<std::vector<HistoryEntry>> hist;
    };

    Snapshot snapshot() const {
        return Snapshot{num_nodes_, d_, d_h_, events_consumed_, last_event_idx_, nodes_, hist_};
    }

    void restore(const Snapshot& s) {
        if (s.num_nodes != num_nodes_ || s.d != d_ || s.d_h != d_h_)
            throw StateError("restore: snapshot belongs to a different state layout");
        nodes_ = s.nodes;
        hist_ = s.hist;
        events_consumed_ = s.events_consumed;
        last_event_idx_ = s.last_event_idx;
    }

    int dim_d() const { return d_; }
    int dim_h() const { return d_h_; }

    // Checkpoint support: direct access to the underlying tables.
    std::vector<NodeState>& nodes_mut() { return nodes_; }
    std::vector<std::vector<HistoryEntry>>& hist_mut() { return hist_; }
    const std::vector<NodeState>& nodes_ref() const { return nodes_; }
    const std::vector<std::vector<HistoryEntry>>& hist_ref() const { return hist_; }

private:
    std::size_t check(int i) const {
        if (i < 0 || i >= num_nodes_) throw StateError("node id out of range");
        return static_cast<std::size_t>(i);
    }

    int num_nodes_ = 0;
    int d_ = 0;
    int d_h_ = 0;
    long events_consumed_ = 0;
    long last_event_idx_ = -1;
    std::vector<NodeState> nodes_;
    std::vector<std::vector<HistoryEntry>> hist_;
};

}  // namespace mpfa
