#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <zlib.h>

#include "mpfa/errors.hpp"
#include "mpfa/rng.hpp"

namespace mpfa {

/// One timestamped interaction. `label` is the optional binary state label of
/// the source node after the event (-1 when absent). Edge features live in
/// the stream's flat pool, indexed by event position.
struct Event {
    int src = 0;
    int dst = 0;
    double t = 0.0;
    int label = -1;
};

class EventStream {
public:
    std::vector<Event> events;
    int num_nodes = 0;
    int num_users = 0;  // >0 only for bipartite data; items occupy [num_users, num_nodes)
    long edge_dim = 0;
    bool bipartite = false;

    long size() const { return static_cast<long>(events.size()); }

    std::span<const double> edge_feat(long i) const {
        return {feat_pool_.data() + i * edge_dim, static_cast<std::size_t>(edge_dim)};
    }

    bool has_labels() const {
        return std::any_of(events.begin(), events.end(), [](const Event& e) { return e.label >= 0; });
    }

    /// Destination universe for negative sampling: items for bipartite data,
    /// all nodes otherwise.
    std::pair<int, int> dst_universe() const {
        return bipartite ? std::make_pair(num_users, num_nodes) : std::make_pair(0, num_nodes);
    }

    void push_event(Event e, std::span<const double> feat) {
        if (static_cast<long>(feat.size()) != edge_dim)
            throw DimensionError("push_event: feature dimension mismatch");
        events.push_back(e);
        feat_pool_.insert(feat_pool_.end(), feat.begin(), feat.end());
    }

    /// Stable sort by timestamp; equal timestamps keep their insertion order.
    void sort_by_time() {
        std::vector<long> order(events.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](long a, long b) { return events[a].t < events[b].t; });
        std::vector<Event> ev(events.size());
        std::vector<double> pool(feat_pool_.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            ev[i] = events[order[i]];
            std::memcpy(pool.data() + static_cast<long>(i) * edge_dim,
                        feat_pool_.data() + order[i] * edge_dim,
                        static_cast<std::size_t>(edge_dim) * sizeof(double));
        }
        events = std::move(ev);
        feat_pool_ = std::move(pool);
    }

    const std::vector<double>& feat_pool() const { return feat_pool_; }
    std::vector<double>& feat_pool() { return feat_pool_; }

private:
    std::vector<double> feat_pool_;
};

enum class CsvSchema {
    Auto,   // sniff: alphabetic first field means a JODIE-style header
    Jodie,  // header row, bipartite user/item ids, re-indexed on load
    Plain,  // headerless src,dst,t[,label[,feats...]]
};

namespace detail {

inline std::string read_whole_file(const std::string& path) {
    const bool gz = path.size() > 3 && path.substr(path.size() - 3) == ".gz";
    if (gz) {
        gzFile f = gzopen(path.c_str(), "rb");
        if (!f) throw LoadError("cannot open file: " + path);
        std::string out;
        char buf[1 << 16];
        int n;
        while ((n = gzread(f, buf, sizeof(buf))) > 0) out.append(buf, static_cast<std::size_t>(n));
        const bool bad = n < 0;
        gzclose(f);
        if (bad) throw ParseError("gzip read failed: " + path);
        return out;
    }
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open file: " + path);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline double parse_double(std::string_view field, long line_no) {
    if (field.empty()) throw ParseError("empty field at line " + std::to_string(line_no));
    char* end = nullptr;
    std::string tmp(field);
    const double v = std::strtod(tmp.c_str(), &end);
    if (end != tmp.c_str() + tmp.size())
        throw ParseError("non-numeric field '" + tmp + "' at line " + std::to_string(line_no));
    return v;
}

inline long parse_id(std::string_view field, long line_no) {
    const double v = parse_double(field, line_no);
    const long id = static_cast<long>(v);
    if (static_cast<double>(id) != v || id < 0)
        throw ParseError("invalid node id '" + std::string(field) + "' at line " + std::to_string(line_no));
    return id;
}

inline void split_csv_line(std::string_view line, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
}

}  // namespace detail

/// Loads a UTF-8 CSV (gzip accepted by extension). JODIE-style files carry a
/// header and bipartite ids; items are re-indexed into the id range directly
/// after the users so a single state table serves both sides. The stream is
/// stably sorted by timestamp on return.
inline EventStream load_csv(const std::string& path, CsvSchema schema = CsvSchema::Auto) {
    const std::string text = detail::read_whole_file(path);

    struct Row {
        long src, dst;
        double t;
        int label;
    };
    std::vector<Row> rows;
    std::vector<double> feats;
    long feat_dim = -1;
    bool saw_label_col = false;

    std::vector<std::string_view> fields;
    long line_no = 0;
    bool header_checked = false;
    bool jodie = schema == CsvSchema::Jodie;

    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string_view line(text.data() + pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;

        if (!header_checked) {
            header_checked = true;
            const bool alpha_start = std::isalpha(static_cast<unsigned char>(line.front())) != 0;
            if (schema == CsvSchema::Auto) jodie = alpha_start;
            if (jodie) {
                if (!alpha_start)
                    throw ParseError("expected header row at line " + std::to_string(line_no));
                continue;  // skip header
            }
        }

        detail::split_csv_line(line, fields);
        if (fields.size() < 3)
            throw ParseError("expected at least 3 columns at line " + std::to_string(line_no));
        Row r;
        r.src = detail::parse_id(fields[0], line_no);
        r.dst = detail::parse_id(fields[1], line_no);
        r.t = detail::parse_double(fields[2], line_no);
        if (r.t < 0.0 || !std::isfinite(r.t))
            throw ParseError("negative or non-finite timestamp at line " + std::to_string(line_no));
        r.label = -1;
        long nfeat = 0;
        if (fields.size() >= 4) {
            saw_label_col = true;
            if (!fields[3].empty()) {  // empty label field means "no label"
                const double lv = detail::parse_double(fields[3], line_no);
                if (lv != 0.0 && lv != 1.0)
                    throw ParseError("state label must be 0/1 at line " + std::to_string(line_no));
                r.label = static_cast<int>(lv);
            }
            nfeat = static_cast<long>(fields.size()) - 4;
        }
        if (feat_dim < 0)
            feat_dim = nfeat;
        else if (feat_dim != nfeat)
            throw ParseError("ragged feature row at line " + std::to_string(line_no) + " (expected " +
                             std::to_string(feat_dim) + " features, got " + std::to_string(nfeat) + ")");
        for (long k = 0; k < nfeat; ++k)
            feats.push_back(detail::parse_double(fields[static_cast<std::size_t>(4 + k)], line_no));
        rows.push_back(r);
    }
    if (rows.empty()) throw ParseError("no events in file: " + path);

    EventStream s;
    s.edge_dim = std::max<long>(feat_dim, 0);
    s.bipartite = jodie;
    long max_src = -1, max_dst = -1;
    for (const Row& r : rows) {
        max_src = std::max(max_src, r.src);
        max_dst = std::max(max_dst, r.dst);
    }
    if (jodie) {
        s.num_users = static_cast<int>(max_src + 1);
        s.num_nodes = static_cast<int>(max_src + 1 + max_dst + 1);
    } else {
        s.num_nodes = static_cast<int>(std::max(max_src, max_dst) + 1);
    }
    (void)saw_label_col;
    s.events.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Event e;
        e.src = static_cast<int>(rows[i].src);
        e.dst = jodie ? static_cast<int>(s.num_users + rows[i].dst) : static_cast<int>(rows[i].dst);
        e.t = rows[i].t;
        e.label = rows[i].label;
        s.push_event(e, {feats.data() + static_cast<long>(i) * s.edge_dim,
                         static_cast<std::size_t>(s.edge_dim)});
    }
    s.sort_by_time();
    return s;
}

/// Writes the plain headerless schema with full double precision, so that
/// write -> load round-trips exactly. The label column is present only when
/// the stream carries labels.
inline void write_csv(const EventStream& s, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw LoadError("cannot write file: " + path);
    const bool label_col = s.has_labels() || s.edge_dim > 0;
    for (long i = 0; i < s.size(); ++i) {
        const Event& e = s.events[i];
        std::fprintf(f, "%d,%d,%.17g", e.src, e.dst, e.t);
        if (label_col) {
            if (e.label < 0)
                std::fputc(',', f);  // empty field: no label
            else
                std::fprintf(f, ",%d", e.label);
        }
        for (double v : s.edge_feat(i)) std::fprintf(f, ",%.17g", v);
        std::fputc('\n', f);
    }
    std::fclose(f);
}

enum class SplitMode { Transductive, Inductive };

/// Chronological split plan. The base split is by event-count quantiles;
/// inductive masking removes train events touching masked nodes and restricts
/// evaluation scoring to events that touch at least one masked node.
struct SplitPlan {
    long n = 0;
    long train_end = 0;  // train = [0, train_end)
    long val_end = 0;    // val   = [train_end, val_end); test = [val_end, n)
    SplitMode mode = SplitMode::Transductive;
    std::vector<int> masked;          // sorted node ids (inductive only)
    std::vector<long> train_indices;  // events used for training

    bool is_masked(int node) const {
        return std::binary_search(masked.begin(), masked.end(), node);
    }
    bool eval_keeps(const Event& e) const {
        return mode == SplitMode::Transductive || is_masked(e.src) || is_masked(e.dst);
    }
};

inline SplitPlan chronological_split(const EventStream& s, double train_frac = 0.70,
                                     double val_frac = 0.15) {
    if (s.size() == 0) throw StateError("chronological_split: empty stream");
    if (train_frac <= 0.0 || val_frac <= 0.0 || train_frac + val_frac >= 1.0)
        throw ParameterError("chronological_split: fractions must be positive and sum below 1");
    SplitPlan p;
    p.n = s.size();
    p.train_end = static_cast<long>(std::floor(train_frac * static_cast<double>(p.n)));
    p.val_end = p.train_end + static_cast<long>(std::floor(val_frac * static_cast<double>(p.n)));
    p.train_indices.resize(static_cast<std::size_t>(p.train_end));
    std::iota(p.train_indices.begin(), p.train_indices.end(), 0);
    return p;
}

/// Samples `fraction` of the nodes that appear in val+test and hides them
/// from training. Same seed, same masked set.
inline SplitPlan inductive_mask(const EventStream& s, const SplitPlan& base, double fraction,
                                std::uint64_t seed) {
    if (fraction <= 0.0 || fraction >= 1.0)
        throw ParameterError("inductive_mask: fraction must be in (0,1)");
    std::unordered_set<int> eval_nodes;
    for (long i = base.train_end; i < base.n; ++i) {
        eval_nodes.insert(s.events[i].src);
        eval_nodes.insert(s.events[i].dst);
    }
    std::vector<int> candidates(eval_nodes.begin(), eval_nodes.end());
    std::sort(candidates.begin(), candidates.end());
    const long count = static_cast<long>(std::floor(fraction * static_cast<double>(candidates.size())));
    if (count == 0)
        throw ConfigError("inductive_mask: fraction selects zero nodes; inductive evaluation would be empty");
    Rng rng(seed);
    for (std::size_t i = candidates.size(); i > 1; --i)
        std::swap(candidates[i - 1], candidates[rng.below(i)]);
    SplitPlan p = base;
    p.mode = SplitMode::Inductive;
    p.masked.assign(candidates.begin(), candidates.begin() + count);
    std::sort(p.masked.begin(), p.masked.end());
    p.train_indices.clear();
    for (long i = 0; i < base.train_end; ++i)
        if (!p.is_masked(s.events[i].src) && !p.is_masked(s.events[i].dst))
            p.train_indices.push_back(i);
    return p;
}

/// One training/evaluation unit: a chronological slice of positive events
/// (by index, ascending) and one sampled negative destination per positive.
/// Indices are explicit because inductive training works on a filtered,
/// non-contiguous subset of the stream.
struct Batch {
    std::vector<long> idx;
    std::vector<int> neg_dst;

    long size() const { return static_cast<long>(idx.size()); }
};

/// Consecutive chronological slices of an index list; the final partial
/// batch is kept.
inline std::vector<Batch> make_batches(const std::vector<long>& indices, long batch_size) {
    if (batch_size < 1) throw ParameterError("make_batches: batch_size must be >= 1");
    std::vector<Batch> out;
    const long n = static_cast<long>(indices.size());
    for (long b = 0; b < n; b += batch_size) {
        Batch batch;
        batch.idx.assign(indices.begin() + b, indices.begin() + std::min(b + batch_size, n));
        out.push_back(std::move(batch));
    }
    return out;
}

inline std::vector<Batch> make_batches(long lo, long hi, long batch_size) {
    std::vector<long> indices(static_cast<std::size_t>(std::max<long>(0, hi - lo)));
    std::iota(indices.begin(), indices.end(), lo);
    return make_batches(indices, batch_size);
}

/// Draws one negative destination per positive, uniformly over the
/// destination universe, rejecting the true destination.
inline void negative_sample(const EventStream& s, Batch& batch, Rng& rng) {
    const auto [lo, hi] = s.dst_universe();
    const long universe = hi - lo;
    if (universe <= 0) throw SamplingError("negative_sample: empty destination universe");
    batch.neg_dst.resize(static_cast<std::size_t>(batch.size()));
    for (std::size_t k = 0; k < batch.idx.size(); ++k) {
        const int pos_dst = s.events[batch.idx[k]].dst;
        if (universe == 1 && lo == pos_dst)
            throw SamplingError("negative_sample: universe contains only the positive destination");
        int v;
        do {
            v = static_cast<int>(lo + static_cast<long>(rng.below(static_cast<std::uint64_t>(universe))));
        } while (v == pos_dst);
        batch.neg_dst[k] = v;
    }
}

/// Synthetic recurrent-interaction stream for desk-scale experiments. Every
/// node gets a hidden preferred partner; each event picks a uniform source
/// and links it to its partner with probability `recurrence_prob`, otherwise
/// to a uniform random other node. Timestamps are unit-spaced with bounded
/// jitter; edge features are 4-dim Gaussian noise.
inline EventStream synth_recurrent(int num_nodes, long num_events, double recurrence_prob,
                                   double noise, std::uint64_t seed) {
    if (num_nodes < 4) throw ParameterError("synth_recurrent: need at least 4 nodes");
    if (recurrence_prob < 0.0 || recurrence_prob > 1.0)
        throw ParameterError("synth_recurrent: recurrence_prob must be in [0,1]");
    Rng rng(seed);
    std::vector<int> partner(static_cast<std::size_t>(num_nodes));
    for (int i = 0; i < num_nodes; ++i) {
        int p;
        do {
            p = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_nodes)));
        } while (p == i);
        partner[static_cast<std::size_t>(i)] = p;
    }
    EventStream s;
    s.num_nodes = num_nodes;
    s.edge_dim = 4;
    const double jitter = 0.4 * std::min(1.0, std::max(0.0, noise));
    for (long i = 0; i < num_events; ++i) {
        const int src = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_nodes)));
        int dst;
        if (rng.uniform() < recurrence_prob) {
            dst = partner[static_cast<std::size_t>(src)];
        } else {
            do {
                dst = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_nodes)));
            } while (dst == src);
        }
        Event e;
        e.src = src;
        e.dst = dst;
        e.t = static_cast<double>(i) + jitter * rng.uniform();
        double feat[4];
        for (double& v : feat) v = noise * rng.normal();
        s.push_event(e, {feat, 4});
    }
    return s;
}

}  // namespace mpfa
