#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mpfa/errors.hpp"
#include "mpfa/tape.hpp"
#include "mpfa/tensor.hpp"

namespace mpfa {

struct GradCheckResult {
    double max_rel_err = 0.0;
    long worst_input = -1;
    long worst_elem = -1;
};

/// Relative error with an absolute floor: for tiny gradients the comparison
/// degrades gracefully to |a-b| / 1e-8 instead of dividing by zero.
inline double rel_err(double a, double b, double floor = 1e-8) {
    const double denom = std::max(std::max(std::fabs(a), std::fabs(b)), floor);
    return std::fabs(a - b) / denom;
}

/// Compares tape gradients of a scalar-valued function against central finite
/// differences (default eps 1e-5).
///
/// `build` receives a tape plus one leaf id per input tensor and must return
/// the id of a scalar output. It is invoked once on a recording tape for the
/// analytic gradients and 2*numel times on non-recording tapes for the
/// differences.
inline GradCheckResult grad_check(
    const std::function<NodeId(Tape&, const std::vector<NodeId>&)>& build,
    std::vector<Tensor> inputs, double eps = 1e-5) {
    // Analytic pass.
    Tape tape(true);
    std::vector<NodeId> ids;
    ids.reserve(inputs.size());
    for (const Tensor& in : inputs) ids.push_back(tape.param(in));
    const NodeId out = build(tape, ids);
    if (tape.value(out).numel() != 1) throw DimensionError("grad_check: output must be scalar");
    if (!tape.value(out).all_finite()) throw NumericError("grad_check: non-finite output");
    tape.backward(out);
    std::vector<Tensor> analytic;
    analytic.reserve(ids.size());
    for (NodeId id : ids) analytic.push_back(tape.grad_or_zero(id));

    auto eval = [&](const std::vector<Tensor>& xs) {
        Tape t(false);
        std::vector<NodeId> leaf_ids;
        leaf_ids.reserve(xs.size());
        for (const Tensor& x : xs) leaf_ids.push_back(t.constant(x));
        const NodeId o = build(t, leaf_ids);
        const double v = t.value(o)[0];
        if (!std::isfinite(v)) throw NumericError("grad_check: non-finite intermediate");
        return v;
    };

    GradCheckResult res;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (long e = 0; e < inputs[k].numel(); ++e) {
            const double orig = inputs[k][e];
            inputs[k][e] = orig + eps;
            const double fp = eval(inputs);
            inputs[k][e] = orig - eps;
            const double fm = eval(inputs);
            inputs[k][e] = orig;
            const double fd = (fp - fm) / (2.0 * eps);
            const double err = rel_err(analytic[k][e], fd);
            if (err > res.max_rel_err) {
                res.max_rel_err = err;
                res.worst_input = static_cast<long>(k);
                res.worst_elem = e;
            }
        }
    }
    return res;
}

}  // namespace mpfa
