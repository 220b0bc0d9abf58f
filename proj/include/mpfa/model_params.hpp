#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mpfa/errors.hpp"
#include "mpfa/param.hpp"
#include "mpfa/rng.hpp"

namespace mpfa {

/// Dimension choices for the model. `d` is the embedding dimension, `d_h`
/// the evolving-information dimension, `d_t` the time-encoding width. The
/// attention uses exactly two heads.
struct ModelConfig {
    int d = 172;
    int d_h = 172;
    int d_t = 100;
    int edge_dim = 0;
    int k_neighbors = 10;
    double dropout = 0.0;

    static constexpr int num_heads = 2;

    int head_dim() const { return std::max(1, d_h / num_heads); }
    int msg_in_dim() const { return d + edge_dim + d + d_t; }       // [z||e||z||phi]
    int query_in_dim() const { return d_h + d_t; }                  // [h||phi(0)]
    int key_in_dim() const { return d_h + edge_dim + d_t; }         // [h||e||phi]
    int growth_in_dim() const { return d_h + d_h + d_t; }           // [h_i||h_j||phi]
    int raw_ctx_dim() const { return d_h + d_t; }                   // [r||phi]

    void validate() const {
        if (d < 1 || d_h < 1 || d_t < 1) throw ConfigError("model dims must be positive");
        if (edge_dim < 0) throw ConfigError("edge_dim must be >= 0");
        if (k_neighbors < 1) throw ConfigError("k_neighbors must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
    }
};

struct GruParams {
    Param w_z, u_z, b_z;
    Param w_r, u_r, b_r;
    Param w_h, u_h, b_h;
};

struct HeadParams {
    Param w_q, b_q;
    Param w_k, b_k;
    Param w_v, b_v;
};

/// All learnable tensors. Field names follow the role each map plays, not
/// the paper-side symbol soup.
struct ModelParams {
    ModelConfig cfg;

    Param w_msg, b_msg;  // event message map feeding the update cell
    GruParams gru;       // evolving-information update cell

    HeadParams heads[ModelConfig::num_heads];
    Param w_con, b_con;  // head concatenation map

    Param w_raw, b_raw;      // frozen raw record -> r vector
    Param w_growth, b_growth;  // growth feature map
    Param w_fb, b_fb;        // growth feature -> scalar feedback logit
    Param w_t1, b_t1;        // two stacked transforms over [r||phi]
    Param w_t2, b_t2;

    Param w_self, b_self;      // coupling: node's own change
    Param w_evo_mix, b_evo_mix;  // coupling: h with evolving aggregate
    Param w_raw_mix, b_raw_mix;  // coupling: h with raw aggregate
    Param w_fnn1, b_fnn1;      // two-layer feedforward fusion
    Param w_fnn2, b_fnn2;

    Param w_dec1, b_dec1;  // link decoder MLP (2d -> d -> d -> 1)
    Param w_dec2, b_dec2;
    Param w_dec3, b_dec3;

    explicit ModelParams(ModelConfig c = {}) : cfg(c) {
        cfg.validate();
        const long d = cfg.d, dh = cfg.d_h, dt = cfg.d_t;
        const long dk = cfg.head_dim();

        w_msg.init_zeros({dh, cfg.msg_in_dim()});
        b_msg.init_zeros({dh});
        for (Param* p : {&gru.w_z, &gru.w_r, &gru.w_h}) p->init_zeros({dh, dh});
        for (Param* p : {&gru.u_z, &gru.u_r, &gru.u_h}) p->init_zeros({dh, dh});
        for (Param* p : {&gru.b_z, &gru.b_r, &gru.b_h}) p->init_zeros({dh});

        for (HeadParams& h : heads) {
            h.w_q.init_zeros({dk, cfg.query_in_dim()});
            h.b_q.init_zeros({dk});
            h.w_k.init_zeros({dk, cfg.key_in_dim()});
            h.b_k.init_zeros({dk});
            h.w_v.init_zeros({dk, cfg.key_in_dim()});
            h.b_v.init_zeros({dk});
        }
        w_con.init_zeros({dh, ModelConfig::num_heads * dk});
        b_con.init_zeros({dh});

        w_raw.init_zeros({dh, cfg.msg_in_dim()});
        b_raw.init_zeros({dh});
        w_growth.init_zeros({dh, cfg.growth_in_dim()});
        b_growth.init_zeros({dh});
        w_fb.init_zeros({1, dh});
        b_fb.init_zeros({1});
        w_t1.init_zeros({dh, cfg.raw_ctx_dim()});
        b_t1.init_zeros({dh});
        w_t2.init_zeros({dh, dh});
        b_t2.init_zeros({dh});

        w_self.init_zeros({d, dh + dt});
        b_self.init_zeros({d});
        w_evo_mix.init_zeros({d, dh + dh});
        b_evo_mix.init_zeros({d});
        w_raw_mix.init_zeros({d, dh + dh});
        b_raw_mix.init_zeros({d});
        w_fnn1.init_zeros({d, 3 * d});
        b_fnn1.init_zeros({d});
        w_fnn2.init_zeros({d, d});
        b_fnn2.init_zeros({d});

        w_dec1.init_zeros({d, 2 * d});
        b_dec1.init_zeros({d});
        w_dec2.init_zeros({d, d});
        b_dec2.init_zeros({d});
        w_dec3.init_zeros({1, d});
        b_dec3.init_zeros({1});
    }

    /// Stable name -> tensor registry. Order defines initialization and
    /// checkpoint layout.
    ParamRegistry registry() {
        ParamRegistry r;
        auto put = [&r](const std::string& name, Param& p) { r.push_back({name, &p}); };
        put("msg.w", w_msg);
        put("msg.b", b_msg);
        put("gru.w_z", gru.w_z);
        put("gru.u_z", gru.u_z);
        put("gru.b_z", gru.b_z);
        put("gru.w_r", gru.w_r);
        put("gru.u_r", gru.u_r);
        put("gru.b_r", gru.b_r);
        put("gru.w_h", gru.w_h);
        put("gru.u_h", gru.u_h);
        put("gru.b_h", gru.b_h);
        for (int h = 0; h < ModelConfig::num_heads; ++h) {
            const std::string pre = "attn.head" + std::to_string(h) + ".";
            put(pre + "w_q", heads[h].w_q);
            put(pre + "b_q", heads[h].b_q);
            put(pre + "w_k", heads[h].w_k);
            put(pre + "b_k", heads[h].b_k);
            put(pre + "w_v", heads[h].w_v);
            put(pre + "b_v", heads[h].b_v);
        }
        put("attn.w_con", w_con);
        put("attn.b_con", b_con);
        put("raw.w", w_raw);
        put("raw.b", b_raw);
        put("feedback.growth.w", w_growth);
        put("feedback.growth.b", b_growth);
        put("feedback.logit.w", w_fb);
        put("feedback.logit.b", b_fb);
        put("raw.trans1.w", w_t1);
        put("raw.trans1.b", b_t1);
        put("raw.trans2.w", w_t2);
        put("raw.trans2.b", b_t2);
        put("couple.self.w", w_self);
        put("couple.self.b", b_self);
        put("couple.evolving.w", w_evo_mix);
        put("couple.evolving.b", b_evo_mix);
        put("couple.raw.w", w_raw_mix);
        put("couple.raw.b", b_raw_mix);
        put("couple.fnn1.w", w_fnn1);
        put("couple.fnn1.b", b_fnn1);
        put("couple.fnn2.w", w_fnn2);
        put("couple.fnn2.b", b_fnn2);
        put("decoder.l1.w", w_dec1);
        put("decoder.l1.b", b_dec1);
        put("decoder.l2.w", w_dec2);
        put("decoder.l2.b", b_dec2);
        put("decoder.out.w", w_dec3);
        put("decoder.out.b", b_dec3);
        return r;
    }

    /// Weights uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in)); biases zero.
    void init_weights(std::uint64_t seed) {
        Rng rng(seed);
        for (ParamRef& pr : registry()) {
            Param& p = *pr.p;
            if (p.v.is_matrix()) {
                const double bound = 1.0 / std::sqrt(static_cast<double>(p.v.shape[1]));
                for (double& v : p.v.data) v = rng.uniform(-bound, bound);
            } else {
                for (double& v : p.v.data) v = 0.0;
            }
        }
    }

    void zero_all() {
        for (ParamRef& pr : registry())
            for (double& v : pr.p->v.data) v = 0.0;
    }

    void zero_grads() {
        for (ParamRef& pr : registry()) pr.p->zero_grad();
    }

    bool all_finite() {
        for (ParamRef& pr : registry())
            if (!pr.p->v.all_finite()) return false;
        return true;
    }

    /// Zeroes the evolving-attention parameters (heads + concatenation map).
    void zero_evolving_path() {
        for (HeadParams& h : heads)
            for (Param* p : {&h.w_q, &h.b_q, &h.w_k, &h.b_k, &h.w_v, &h.b_v})
                for (double& v : p->v.data) v = 0.0;
        for (Param* p : {&w_con, &b_con})
            for (double& v : p->v.data) v = 0.0;
    }

    /// Zeroes the raw-perspective parameters (raw map, feedback, transforms).
    void zero_raw_path() {
        for (Param* p : {&w_raw, &b_raw, &w_growth, &b_growth, &w_fb, &b_fb, &w_t1, &b_t1, &w_t2, &b_t2})
            for (double& v : p->v.data) v = 0.0;
    }
};

}  // namespace mpfa
