#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "mpfa/errors.hpp"
#include "mpfa/param.hpp"

namespace mpfa {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moments are keyed by parameter name so the
/// optimizer state can be checkpointed alongside the parameters.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    long step_count() const { return t_; }
    void set_lr(double lr) { cfg_.lr = lr; }

    void step(const ParamRegistry& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (const ParamRef& pr : params) {
            Moments& mo = moments_[pr.name];
            if (mo.m.data.empty()) {
                mo.m = Tensor::zeros(pr.p->v.shape);
                mo.v = Tensor::zeros(pr.p->v.shape);
            }
            if (!mo.m.same_shape(pr.p->v))
                throw StateError("adam: moment shape mismatch for '" + pr.name + "'");
            Tensor& w = pr.p->v;
            const Tensor& g = pr.p->g;
            for (long i = 0; i < w.numel(); ++i) {
                mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g[i];
                mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mhat = mo.m[i] / bc1;
                const double vhat = mo.v[i] / bc2;
                w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
            if (!w.all_finite()) throw NumericError("adam: non-finite parameter '" + pr.name + "'");
        }
    }

    struct Moments {
        Tensor m, v;
    };
    // Exposed for checkpointing.
    std::map<std::string, Moments>& moments() { return moments_; }
    const std::map<std::string, Moments>& moments() const { return moments_; }
    void set_step_count(long t) { t_ = t; }

private:
    AdamConfig cfg_;
    long t_ = 0;
    std::map<std::string, Moments> moments_;
};

}  // namespace mpfa
