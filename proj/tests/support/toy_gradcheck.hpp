#pragma once

// Whole-model gradient check fixture: a five-event toy stream over four
// nodes, processed as one warm-up batch (three events, queued updates) and
// one differentiated batch (two events plus fixed negatives). The loss of
// the second batch reaches every parameter group: message map and update
// cell through the queued-update flush, both attention paths through the
// recorded history, coupling and decoder through the scores.
//
// Fixture constants (seed, weight scale, timestamps, d_t = 2) are chosen so
// that every parameter carries a gradient well above the finite-difference
// noise floor at eps = 1e-5. Softmax shift-invariance otherwise leaves some
// near-constant feature columns with ~1e-8 gradients that finite differences
// cannot resolve at that epsilon.

#include <string>
#include <vector>

#include "mpfa/grad_check.hpp"
#include "mpfa/mpfa.hpp"

namespace mpfa_test {

struct ToyGradCheckResult {
    double worst = 0.0;
    std::string worst_param;
    long n_params = 0;
};

inline ToyGradCheckResult toy_model_gradcheck(double eps = 1e-5) {
    using namespace mpfa;

    EventStream s;
    s.num_nodes = 4;
    s.edge_dim = 2;
    Rng frng(3 * 31 + 7);
    const int srcs[5] = {0, 2, 0, 1, 3};
    const int dsts[5] = {1, 3, 2, 2, 0};
    const double times[5] = {1.0, 3.0, 4.5, 7.0, 11.0};
    for (int i = 0; i < 5; ++i) {
        double feat[2] = {frng.uniform(-1, 1), frng.uniform(-1, 1)};
        s.push_event(Event{srcs[i], dsts[i], times[i], -1}, {feat, 2});
    }

    ModelConfig mc;
    mc.d = 4;
    mc.d_h = 4;
    mc.d_t = 2;
    mc.edge_dim = 2;
    mc.k_neighbors = 3;
    ModelParams params(mc);
    params.init_weights(3);
    Rng brng(3 ^ 77);
    for (auto& pr : params.registry()) {
        for (double& v : pr.p->v.data) v *= 2.0;
        if (!pr.p->v.is_matrix())
            for (double& v : pr.p->v.data) v = brng.uniform(-0.4, 0.4);
    }

    MpfaEngine base(s, params, {});
    base.reset();
    base.advance_range(0, 3, 3, nullptr, nullptr);
    const MpfaEngine frozen = base;  // pending updates still queued

    Batch bb;
    bb.idx = {3, 4};
    bb.neg_dst = {3, 1};

    params.zero_grads();
    MpfaEngine analytic = frozen;
    batch_loss(analytic, bb, true);
    ParamRegistry reg = params.registry();

    ToyGradCheckResult res;
    for (auto& pr : reg) {
        Param& p = *pr.p;
        res.n_params += p.numel();
        for (long e = 0; e < p.numel(); ++e) {
            const double orig = p.v[e];
            p.v[e] = orig + eps;
            MpfaEngine ep = frozen;
            const double fp = batch_loss(ep, bb, false);
            p.v[e] = orig - eps;
            MpfaEngine em = frozen;
            const double fm = batch_loss(em, bb, false);
            p.v[e] = orig;
            const double fd = (fp - fm) / (2.0 * eps);
            const double err = rel_err(p.g[e], fd);
            if (err > res.worst) {
                res.worst = err;
                res.worst_param = pr.name;
            }
        }
    }
    return res;
}

}  // namespace mpfa_test
