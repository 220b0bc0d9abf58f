#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mpfa/errors.hpp"
#include "mpfa/tape.hpp"

namespace mpfa {

namespace detail {

inline void check_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw DimensionError("metric: scores/labels length mismatch");
    if (scores.empty()) throw MetricError("metric: empty input");
    for (int y : labels)
        if (y != 0 && y != 1) throw ParameterError("metric: labels must be 0/1");
}

inline std::pair<long, long> class_counts(const std::vector<int>& labels) {
    long pos = 0;
    for (int y : labels) pos += y;
    return {pos, static_cast<long>(labels.size()) - pos};
}

}  // namespace detail

/// Average precision: mean over positives of precision at the positive's
/// rank under descending scores. Ties are handled by midrank: a positive in
/// a tied block counts half of its tied cohort (itself included) on both
/// sides of the ratio.
inline double metric_ap(const std::vector<double>& scores, const std::vector<int>& labels) {
    detail::check_binary(scores, labels);
    const auto [npos, nneg] = detail::class_counts(labels);
    if (npos == 0 || nneg == 0) throw MetricError("metric_ap: needs both classes");

    std::vector<long> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](long a, long b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    long before_pos = 0, before_tot = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        long grp_pos = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            grp_pos += labels[order[j]];
            ++j;
        }
        const long grp_tot = static_cast<long>(j - i);
        if (grp_pos > 0) {
            const double prec = (static_cast<double>(before_pos) + (static_cast<double>(grp_pos) + 1.0) / 2.0) /
                                (static_cast<double>(before_tot) + (static_cast<double>(grp_tot) + 1.0) / 2.0);
            ap += static_cast<double>(grp_pos) * prec;
        }
        before_pos += grp_pos;
        before_tot += grp_tot;
        i = j;
    }
    return ap / static_cast<double>(npos);
}

/// AUC via the Mann-Whitney rank statistic with midrank tie handling.
inline double metric_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    detail::check_binary(scores, labels);
    const auto [npos, nneg] = detail::class_counts(labels);
    if (npos == 0 || nneg == 0) throw MetricError("metric_auc: needs both classes");

    std::vector<long> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](long a, long b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        long grp_pos = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            grp_pos += labels[order[j]];
            ++j;
        }
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        rank_sum_pos += static_cast<double>(grp_pos) * midrank;
        i = j;
    }
    const double u = rank_sum_pos - static_cast<double>(npos) * (static_cast<double>(npos) + 1.0) / 2.0;
    return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

/// Accuracy at a fixed decision threshold (score >= threshold predicts 1).
inline double metric_acc(const std::vector<double>& scores, const std::vector<int>& labels,
                         double threshold = 0.5) {
    detail::check_binary(scores, labels);
    long correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int pred = scores[i] >= threshold ? 1 : 0;
        correct += pred == labels[i];
    }
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

/// Binary cross entropy over a score vector on the tape. Scores are
/// probabilities by default; pass `scores_are_logits` when they are
/// pre-sigmoid. Probabilities are clamped at 1e-12 before the log.
inline NodeId bce_loss(Tape& t, NodeId scores, const std::vector<int>& labels,
                       bool scores_are_logits = false) {
    const Tensor& sv = t.value(scores);
    if (sv.numel() != static_cast<long>(labels.size()))
        throw DimensionError("bce_loss: scores/labels length mismatch");
    Tensor y = Tensor::zeros({sv.numel()});
    Tensor y_inv = Tensor::zeros({sv.numel()});
    for (long i = 0; i < sv.numel(); ++i) {
        if (labels[static_cast<std::size_t>(i)] != 0 && labels[static_cast<std::size_t>(i)] != 1)
            throw ParameterError("bce_loss: labels must be 0/1");
        y[i] = labels[static_cast<std::size_t>(i)];
        y_inv[i] = 1.0 - y[i];
    }
    const NodeId p = scores_are_logits ? t.sigmoid(scores) : scores;
    const NodeId log_p = t.log_op(t.clamp(p, 1e-12, 1.0));
    const NodeId log_q = t.log_op(t.clamp(t.affine(p, -1.0, 1.0), 1e-12, 1.0));
    const NodeId ll = t.add(t.cmul(log_p, y), t.cmul(log_q, y_inv));
    return t.affine(t.mean(ll), -1.0, 0.0);
}

}  // namespace mpfa
