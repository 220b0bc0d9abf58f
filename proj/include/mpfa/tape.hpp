#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mpfa/errors.hpp"
#include "mpfa/rng.hpp"
#include "mpfa/tensor.hpp"

namespace mpfa {

using NodeId = int;

namespace detail {

// Tiny dense kernels. All matrices are row-major. The "acc" variants add into
// the destination, which is what backward accumulation needs.

// Four-accumulator dot product: fixed summation order (deterministic) while
// giving the compiler independent chains to vectorize.
inline double dot_unrolled(const double* a, const double* b, long n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    long i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    double s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline void gemm_nn_acc(const double* a, const double* b, double* c, long m, long k, long n) {
    for (long i = 0; i < m; ++i)
        for (long l = 0; l < k; ++l) {
            const double ail = a[i * k + l];
            if (ail == 0.0) continue;
            const double* brow = b + l * n;
            double* crow = c + i * n;
            for (long j = 0; j < n; ++j) crow[j] += ail * brow[j];
        }
}

// c[m x n] += a[m x k] * b[n x k]^T
inline void gemm_nt_acc(const double* a, const double* b, double* c, long m, long k, long n) {
    for (long i = 0; i < m; ++i)
        for (long j = 0; j < n; ++j)
            c[i * n + j] += dot_unrolled(a + i * k, b + j * k, k);
}

// c[k x n] += a[m x k]^T * b[m x n]
inline void gemm_tn_acc(const double* a, const double* b, double* c, long m, long k, long n) {
    for (long l = 0; l < m; ++l) {
        const double* arow = a + l * k;
        const double* brow = b + l * n;
        for (long i = 0; i < k; ++i) {
            const double ali = arow[i];
            if (ali == 0.0) continue;
            double* crow = c + i * n;
            for (long j = 0; j < n; ++j) crow[j] += ali * brow[j];
        }
    }
}

inline double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

/// Reverse-mode autodiff tape over Tensor values.
///
/// Every operation records its output value and (when recording and at least
/// one input participates in differentiation) a closure implementing the
/// chain rule. backward() replays those closures in reverse order. A tape is
/// built per training step and cleared afterwards; it must not be shared
/// across threads.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) { nodes_.reserve(1 << 16); }

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return recording_; }
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    /// When enabled, every op verifies its output is finite. Used by tests;
    /// too slow to leave on in training loops.
    void set_check_finite(bool on) { check_finite_ = on; }

    // ---- leaves ----------------------------------------------------------

    NodeId constant(Tensor v) { return push(std::move(v), false, nullptr, "constant"); }

    /// Leaf participating in differentiation (when the tape is recording).
    NodeId param(Tensor v) { return push(std::move(v), recording_, nullptr, "param"); }

    const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].val; }

    /// Gradient accumulated by backward(); empty tensor means zero.
    const Tensor& grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    Tensor grad_or_zero(NodeId id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        return n.grad.data.empty() ? Tensor::zeros(n.val.shape) : n.grad;
    }

    // ---- elementwise -----------------------------------------------------

    NodeId add(NodeId a, NodeId b) {
        require_same_shape(a, b, "add");
        Tensor out = value(a);
        const Tensor& vb = value(b);
        for (long i = 0; i < out.numel(); ++i) out[i] += vb[i];
        return push_binary(std::move(out), a, b, "add", [](Tape& t, NodeId o, NodeId x, NodeId y) {
            t.accum(x, t.nodes_[(std::size_t)o].grad);
            t.accum(y, t.nodes_[(std::size_t)o].grad);
        });
    }

    NodeId sub(NodeId a, NodeId b) {
        require_same_shape(a, b, "sub");
        Tensor out = value(a);
        const Tensor& vb = value(b);
        for (long i = 0; i < out.numel(); ++i) out[i] -= vb[i];
        return push_binary(std::move(out), a, b, "sub", [](Tape& t, NodeId o, NodeId x, NodeId y) {
            const Tensor& g = t.nodes_[(std::size_t)o].grad;
            t.accum(x, g);
            Tensor ng = g;
            for (double& v : ng.data) v = -v;
            t.accum(y, ng);
        });
    }

    NodeId mul(NodeId a, NodeId b) {
        require_same_shape(a, b, "mul");
        Tensor out = value(a);
        const Tensor& vb = value(b);
        for (long i = 0; i < out.numel(); ++i) out[i] *= vb[i];
        return push_binary(std::move(out), a, b, "mul", [](Tape& t, NodeId o, NodeId x, NodeId y) {
            const Tensor& g = t.nodes_[(std::size_t)o].grad;
            Tensor gx = g;
            const Tensor& vy = t.value(y);
            for (long i = 0; i < gx.numel(); ++i) gx[i] *= vy[i];
            t.accum(x, gx);
            Tensor gy = g;
            const Tensor& vx = t.value(x);
            for (long i = 0; i < gy.numel(); ++i) gy[i] *= vx[i];
            t.accum(y, gy);
        });
    }

    /// y = s*x + c, elementwise.
    NodeId affine(NodeId a, double s, double c) {
        Tensor out = value(a);
        for (double& v : out.data) v = s * v + c;
        return push_unary(std::move(out), a, "affine", [s](Tape& t, NodeId o, NodeId x) {
            Tensor g = t.nodes_[(std::size_t)o].grad;
            for (double& v : g.data) v *= s;
            t.accum(x, g);
        });
    }

    /// Elementwise multiply by a constant tensor (e.g. a label vector).
    NodeId cmul(NodeId a, Tensor w) {
        require_shape(a, w.shape, "cmul");
        Tensor out = value(a);
        for (long i = 0; i < out.numel(); ++i) out[i] *= w[i];
        NodeId id = push(std::move(out), requires_grad(a), nullptr, "cmul");
        if (node_rg(id))
            set_back(id, [id, a, w = std::move(w)](Tape& t) {
                Tensor g = t.nodes_[(std::size_t)id].grad;
                for (long i = 0; i < g.numel(); ++i) g[i] *= w[i];
                t.accum(a, g);
            });
        return id;
    }

    NodeId sigmoid(NodeId a) {
        Tensor out = value(a);
        for (double& v : out.data) v = detail::stable_sigmoid(v);
        return push_unary(std::move(out), a, "sigmoid", [](Tape& t, NodeId o, NodeId x) {
            const Tensor& y = t.value(o);
            Tensor g = t.nodes_[(std::size_t)o].grad;
            for (long i = 0; i < g.numel(); ++i) g[i] *= y[i] * (1.0 - y[i]);
            t.accum(x, g);
        });
    }

    NodeId tanh_act(NodeId a) {
        Tensor out = value(a);
        for (double& v : out.data) v = std::tanh(v);
        return push_unary(std::move(out), a, "tanh", [](Tape& t, NodeId o, NodeId x) {
            const Tensor& y = t.value(o);
            Tensor g = t.nodes_[(std::size_t)o].grad;
            for (long i = 0; i < g.numel(); ++i) g[i] *= 1.0 - y[i] * y[i];
            t.accum(x, g);
        });
    }

    NodeId relu(NodeId a) {
        Tensor out = value(a);
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        return push_unary(std::move(out), a, "relu", [](Tape& t, NodeId o, NodeId x) {
            const Tensor& vx = t.value(x);
            Tensor g = t.nodes_[(std::size_t)o].grad;
            for (long i = 0; i < g.numel(); ++i)
                if (vx[i] <= 0.0) g[i] = 0.0;
            t.accum(x, g);
        });
    }

    NodeId log_op(NodeId a) {
        Tensor out = value(a);
        for (double& v : out.data) v = std::log(v);
        return push_unary(std::move(out), a, "log", [](Tape& t, NodeId o, NodeId x) {
            const Tensor& vx = t.value(x);
            Tensor g = t.nodes_[(std::size_t)o].grad;
            for (long i = 0; i < g.numel(); ++i) g[i] /= vx[i];
            t.accum(x, g);
        });
    }

    /// Clamp into [lo, hi]; gradient is zero where the clamp engages.
    NodeId clamp(NodeId a, double lo, double hi) {
        Tensor out = value(a);
        for (double& v : out.data) v = v < lo ? lo : (v > hi ? hi : v);
        return push_unary(std::move(out), a, "clamp", [lo, hi](Tape& t, NodeId o, NodeId x) {
            const Tensor& vx = t.value(x);
            Tensor g = t.nodes_[(std::size_t)o].grad;
            for (long i = 0; i < g.numel(); ++i)
                if (vx[i] < lo || vx[i] > hi) g[i] = 0.0;
            t.accum(x, g);
        });
    }

    // ---- linear algebra --------------------------------------------------

    NodeId matmul(NodeId a, NodeId b) {
        const Tensor& va = value(a);
        const Tensor& vb = value(b);
        if (!va.is_matrix() || !vb.is_matrix() || va.shape[1] != vb.shape[0])
            throw DimensionError("matmul: incompatible shapes " + va.shape_str() + " x " + vb.shape_str());
        const long m = va.shape[0], k = va.shape[1], n = vb.shape[1];
        Tensor out = Tensor::zeros({m, n});
        detail::gemm_nn_acc(va.data.data(), vb.data.data(), out.data.data(), m, k, n);
        return push_binary(std::move(out), a, b, "matmul", [m, k, n](Tape& t, NodeId o, NodeId x, NodeId y) {
            const Tensor& g = t.nodes_[(std::size_t)o].grad;
            if (t.requires_grad(x)) {
                Tensor& gx = t.grad_buf(x);
                detail::gemm_nt_acc(g.data.data(), t.value(y).data.data(), gx.data.data(), m, n, k);
            }
            if (t.requires_grad(y)) {
                Tensor& gy = t.grad_buf(y);
                detail::gemm_tn_acc(t.value(x).data.data(), g.data.data(), gy.data.data(), m, k, n);
            }
        });
    }

    /// C = A * B^T  for A[m x k], B[n x k].
    NodeId matmul_nt(NodeId a, NodeId b) {
        const Tensor& va = value(a);
        const Tensor& vb = value(b);
        if (!va.is_matrix() || !vb.is_matrix() || va.shape[1] != vb.shape[1])
            throw DimensionError("matmul_nt: incompatible shapes " + va.shape_str() + " x " + vb.shape_str());
        const long m = va.shape[0], k = va.shape[1], n = vb.shape[0];
        Tensor out = Tensor::zeros({m, n});
        detail::gemm_nt_acc(va.data.data(), vb.data.data(), out.data.data(), m, k, n);
        return push_binary(std::move(out), a, b, "matmul_nt", [m, k, n](Tape& t, NodeId o, NodeId x, NodeId y) {
            const Tensor& g = t.nodes_[(std::size_t)o].grad;
            if (t.requires_grad(x)) {
                Tensor& gx = t.grad_buf(x);
                detail::gemm_nn_acc(g.data.data(), t.value(y).data.data(), gx.data.data(), m, n, k);
            }
            if (t.requires_grad(y)) {
                Tensor& gy = t.grad_buf(y);
                detail::gemm_tn_acc(g.data.data(), t.value(x).data.data(), gy.data.data(), m, n, k);
            }
        });
    }

    /// y = A x for A[m x n], x[n].
    NodeId matvec(NodeId a, NodeId x) {
        const Tensor& va = value(a);
        const Tensor& vx = value(x);
        if (!va.is_matrix() || !vx.is_vector() || va.shape[1] != vx.shape[0])
            throw DimensionError("matvec: incompatible shapes " + va.shape_str() + " x " + vx.shape_str());
        const long m = va.shape[0], n = va.shape[1];
        Tensor out = Tensor::zeros({m});
        for (long i = 0; i < m; ++i)
            out[i] = detail::dot_unrolled(va.data.data() + i * n, vx.data.data(), n);
        return push_binary(std::move(out), a, x, "matvec", [m, n](Tape& t, NodeId o, NodeId A, NodeId X) {
            const Tensor& g = t.nodes_[(std::size_t)o].grad;
            if (t.requires_grad(A)) {
                Tensor& ga = t.grad_buf(A);
                const Tensor& vx = t.value(X);
                for (long i = 0; i < m; ++i) {
                    const double gi = g[i];
                    if (gi == 0.0) continue;
                    double* row = ga.data.data() + i * n;
                    for (long j = 0; j < n; ++j) row[j] += gi * vx[j];
                }
            }
            if (t.requires_grad(X)) {
                Tensor& gx = t.grad_buf(X);
                const Tensor& va = t.value(A);
                for (long i = 0; i < m; ++i) {
                    const double gi = g[i];
                    if (gi == 0.0) continue;
                    const double* row = va.data.data() + i * n;
                    for (long j = 0; j < n; ++j) gx[j] += gi * row[j];
                }
            }
        });
    }

    /// y = A^T x for A[m x n], x[m]; the weighted-row-sum workhorse.
    NodeId matvec_t(NodeId a, NodeId x) {
        const Tensor& va = value(a);
        const Tensor& vx = value(x);
        if (!va.is_matrix() || !vx.is_vector() || va.shape[0] != vx.shape[0])
            throw DimensionError("matvec_t: incompatible shapes " + va.shape_str() + " x " + vx.shape_str());
        const long m = va.shape[0], n = va.shape[1];
        Tensor out = Tensor::zeros({n});
        for (long i = 0; i < m; ++i) {
            const double xi = vx[i];
            if (xi == 0.0) continue;
            const double* row = va.data.data() + i * n;
            for (long j = 0; j < n; ++j) out[j] += xi * row[j];
        }
        return push_binary(std::move(out), a, x, "matvec_t", [m, n](Tape& t, NodeId o, NodeId A, NodeId X) {
            const Tensor& g = t.nodes_[(std::size_t)o].grad;
            if (t.requires_grad(A)) {
                Tensor& ga = t.grad_buf(A);
                const Tensor& vx = t.value(X);
                for (long i = 0; i < m; ++i) {
                    const double xi = vx[i];
                    if (xi == 0.0) continue;
                    double* row = ga.data.data() + i * n;
                    for (long j = 0; j < n; ++j) row[j] += xi * g[j];
                }
            }
            if (t.requires_grad(X)) {
                Tensor& gx = t.grad_buf(X);
                const Tensor& va = t.value(A);
                for (long i = 0; i < m; ++i)
                    gx[i] += detail::dot_unrolled(va.data.data() + i * n, g.data.data(), n);
            }
        });
    }

    /// M + b broadcast over rows, for M[j x d], b[d].
    NodeId add_rowvec(NodeId m, NodeId b) {
        const Tensor& vm = value(m);
        const Tensor& vb = value(b);
        if (!vm.is_matrix() || !vb.is_vector() || vm.shape[1] != vb.shape[0])
            throw DimensionError("add_rowvec: incompatible shapes " + vm.shape_str() + " + " + vb.shape_str());
        const long r = vm.shape[0], c = vm.shape[1];
        Tensor out = vm;
        for (long i = 0; i < r; ++i)
            for (long j = 0; j < c; ++j) out.at(i, j) += vb[j];
        return push_binary(std::move(out), m, b, "add_rowvec", [r, c](Tape& t, NodeId o, NodeId M, NodeId B) {
            const Tensor& g = t.nodes_[(std::size_t)o].grad;
            if (t.requires_grad(M)) t.accum(M, g);
            if (t.requires_grad(B)) {
                Tensor& gb = t.grad_buf(B);
                for (long i = 0; i < r; ++i)
                    for (long j = 0; j < c; ++j) gb[j] += g[i * c + j];
            }
        });
    }

    // ---- shape ops -------------------------------------------------------

    /// Concatenation along the feature axis. Vector inputs concatenate into a
    /// vector; matrix inputs (equal row counts) concatenate columns.
    NodeId concat(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw DimensionError("concat: no parts");
        bool all_vec = true, all_mat = true;
        for (NodeId p : parts) {
            all_vec = all_vec && value(p).is_vector();
            all_mat = all_mat && value(p).is_matrix();
        }
        if (all_vec) return concat_vectors(parts);
        if (all_mat) return concat_cols(parts);
        throw DimensionError("concat: mixed ranks");
    }

    /// Stack j vectors of equal length d into a [j x d] matrix.
    NodeId stack_rows(const std::vector<NodeId>& rows) {
        if (rows.empty()) throw DimensionError("stack_rows: no rows");
        const long d = value(rows[0]).numel();
        Tensor out = Tensor::zeros({static_cast<long>(rows.size()), d});
        bool rg = false;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const Tensor& v = value(rows[i]);
            if (!v.is_vector() || v.numel() != d) throw DimensionError("stack_rows: ragged rows");
            std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<long>(i) * d);
            rg = rg || requires_grad(rows[i]);
        }
        NodeId id = push(std::move(out), rg && recording_, nullptr, "stack_rows");
        if (node_rg(id))
            set_back(id, [id, rows, d](Tape& t) {
                const Tensor& g = t.nodes_[(std::size_t)id].grad;
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    if (!t.requires_grad(rows[i])) continue;
                    Tensor& gi = t.grad_buf(rows[i]);
                    const double* src = g.data.data() + static_cast<long>(i) * d;
                    for (long j = 0; j < d; ++j) gi[j] += src[j];
                }
            });
        return id;
    }

    /// Stack n scalars into a length-n vector.
    NodeId stack_scalars(const std::vector<NodeId>& xs) {
        if (xs.empty()) throw DimensionError("stack_scalars: empty");
        Tensor out = Tensor::zeros({static_cast<long>(xs.size())});
        bool rg = false;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (value(xs[i]).numel() != 1) throw DimensionError("stack_scalars: non-scalar part");
            out[static_cast<long>(i)] = value(xs[i])[0];
            rg = rg || requires_grad(xs[i]);
        }
        NodeId id = push(std::move(out), rg && recording_, nullptr, "stack_scalars");
        if (node_rg(id))
            set_back(id, [id, xs](Tape& t) {
                const Tensor& g = t.nodes_[(std::size_t)id].grad;
                for (std::size_t i = 0; i < xs.size(); ++i)
                    if (t.requires_grad(xs[i])) t.grad_buf(xs[i])[0] += g[static_cast<long>(i)];
            });
        return id;
    }

    /// Same data, new shape (same element count).
    NodeId reshape(NodeId a, std::vector<long> new_shape) {
        Tensor out = value(a);
        long n = 1;
        for (long d : new_shape) n *= d;
        if (n != out.numel()) throw DimensionError("reshape: element count mismatch");
        out.shape = std::move(new_shape);
        return push_unary(std::move(out), a, "reshape", [](Tape& t, NodeId o, NodeId x) {
            t.accum(x, t.nodes_[(std::size_t)o].grad);  // flat pass-through
        });
    }

    // ---- reductions ------------------------------------------------------

    NodeId sum(NodeId a) {
        double s = 0.0;
        for (double v : value(a).data) s += v;
        return push_unary(Tensor::scalar(s), a, "sum", [](Tape& t, NodeId o, NodeId x) {
            const double g = t.nodes_[(std::size_t)o].grad[0];
            Tensor& gx = t.grad_buf(x);
            for (double& v : gx.data) v += g;
        });
    }

    NodeId mean(NodeId a) {
        const long n = value(a).numel();
        if (n == 0) throw DimensionError("mean: empty tensor");
        double s = 0.0;
        for (double v : value(a).data) s += v;
        return push_unary(Tensor::scalar(s / static_cast<double>(n)), a, "mean",
                          [n](Tape& t, NodeId o, NodeId x) {
                              const double g = t.nodes_[(std::size_t)o].grad[0] / static_cast<double>(n);
                              Tensor& gx = t.grad_buf(x);
                              for (double& v : gx.data) v += g;
                          });
    }

    NodeId dot(NodeId a, NodeId b) {
        require_same_shape(a, b, "dot");
        double s = 0.0;
        const Tensor& va = value(a);
        const Tensor& vb = value(b);
        for (long i = 0; i < va.numel(); ++i) s += va[i] * vb[i];
        return push_binary(Tensor::scalar(s), a, b, "dot", [](Tape& t, NodeId o, NodeId x, NodeId y) {
            const double g = t.nodes_[(std::size_t)o].grad[0];
            if (t.requires_grad(x)) {
                Tensor& gx = t.grad_buf(x);
                const Tensor& vy = t.value(y);
                for (long i = 0; i < gx.numel(); ++i) gx[i] += g * vy[i];
            }
            if (t.requires_grad(y)) {
                Tensor& gy = t.grad_buf(y);
                const Tensor& vx = t.value(x);
                for (long i = 0; i < gy.numel(); ++i) gy[i] += g * vx[i];
            }
        });
    }

    // ---- softmax ---------------------------------------------------------

    /// Softmax with max-subtraction. Vectors ignore `axis`; matrices use
    /// axis=1 for rows, axis=0 for columns.
    NodeId softmax(NodeId a, int axis = 1) {
        const Tensor& va = value(a);
        if (va.numel() == 0) throw DimensionError("softmax: empty axis");
        if (va.is_vector()) {
            Tensor out = va;
            softmax_inplace(out.data.data(), out.numel(), 1);
            return push_unary(std::move(out), a, "softmax", [](Tape& t, NodeId o, NodeId x) {
                t.softmax_backward_span(o, x, 0, t.value(o).numel(), 1);
            });
        }
        if (!va.is_matrix()) throw DimensionError("softmax: rank must be 1 or 2");
        const long r = va.shape[0], c = va.shape[1];
        if (axis != 0 && axis != 1) throw DimensionError("softmax: axis must be 0 or 1");
        Tensor out = va;
        if (axis == 1) {
            for (long i = 0; i < r; ++i) softmax_inplace(out.data.data() + i * c, c, 1);
        } else {
            for (long j = 0; j < c; ++j) softmax_inplace(out.data.data() + j, r, c);
        }
        return push_unary(std::move(out), a, "softmax", [r, c, axis](Tape& t, NodeId o, NodeId x) {
            if (axis == 1)
                for (long i = 0; i < r; ++i) t.softmax_backward_span(o, x, i * c, c, 1);
            else
                for (long j = 0; j < c; ++j) t.softmax_backward_span(o, x, j, r, c);
        });
    }

    // ---- dropout ---------------------------------------------------------

    /// Inverted dropout: training mode zeroes each element with probability p
    /// and scales survivors by 1/(1-p); eval mode is the identity.
    NodeId dropout(NodeId a, double p, bool training, Rng& rng) {
        if (p < 0.0 || p >= 1.0) throw ParameterError("dropout: p must be in [0,1)");
        if (!training || p == 0.0) return a;
        const double keep_scale = 1.0 / (1.0 - p);
        Tensor out = value(a);
        std::vector<double> mask(out.data.size());
        for (std::size_t i = 0; i < mask.size(); ++i) {
            mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
            out.data[i] *= mask[i];
        }
        NodeId id = push(std::move(out), requires_grad(a), nullptr, "dropout");
        if (node_rg(id))
            set_back(id, [id, a, mask = std::move(mask)](Tape& t) {
                Tensor g = t.nodes_[(std::size_t)id].grad;
                for (std::size_t i = 0; i < mask.size(); ++i) g.data[i] *= mask[i];
                t.accum(a, g);
            });
        return id;
    }

    // ---- backward --------------------------------------------------------

    void backward(NodeId root) {
        if (value(root).numel() != 1) throw DimensionError("backward: root must be scalar");
        Node& r = nodes_[static_cast<std::size_t>(root)];
        if (!r.rg) return;  // nothing differentiable upstream
        grad_buf(root)[0] = 1.0;
        for (long i = root; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.back && !n.grad.data.empty()) n.back(*this);
        }
    }

    bool requires_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].rg; }

private:
    struct Node {
        Tensor val;
        Tensor grad;  // empty until touched by backward
        std::function<void(Tape&)> back;
        bool rg = false;
    };

    std::vector<Node> nodes_;
    bool recording_ = true;
    bool check_finite_ = false;

    bool node_rg(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].rg; }

    void set_back(NodeId id, std::function<void(Tape&)> f) {
        nodes_[static_cast<std::size_t>(id)].back = std::move(f);
    }

    Tensor& grad_buf(NodeId id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.data.empty()) n.grad = Tensor::zeros(n.val.shape);
        return n.grad;
    }

    void accum(NodeId id, const Tensor& g) {
        if (!requires_grad(id)) return;
        Tensor& dst = grad_buf(id);
        for (long i = 0; i < dst.numel(); ++i) dst[i] += g[i];
    }

    NodeId push(Tensor v, bool rg, std::function<void(Tape&)> back, const char* op) {
        if (check_finite_ && !v.all_finite())
            throw NumericError(std::string("non-finite value produced by op '") + op + "'");
        nodes_.push_back(Node{std::move(v), Tensor{}, std::move(back), rg && recording_});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    template <class F>
    NodeId push_unary(Tensor out, NodeId a, const char* op, F&& back) {
        NodeId id = push(std::move(out), requires_grad(a), nullptr, op);
        if (node_rg(id)) set_back(id, [id, a, back](Tape& t) { back(t, id, a); });
        return id;
    }

    template <class F>
    NodeId push_binary(Tensor out, NodeId a, NodeId b, const char* op, F&& back) {
        NodeId id = push(std::move(out), requires_grad(a) || requires_grad(b), nullptr, op);
        if (node_rg(id)) set_back(id, [id, a, b, back](Tape& t) { back(t, id, a, b); });
        return id;
    }

    void require_same_shape(NodeId a, NodeId b, const char* op) const {
        if (!value(a).same_shape(value(b)))
            throw DimensionError(std::string(op) + ": shape mismatch " + value(a).shape_str() + " vs " +
                                 value(b).shape_str());
    }
    void require_shape(NodeId a, const std::vector<long>& s, const char* op) const {
        if (value(a).shape != s) throw DimensionError(std::string(op) + ": shape mismatch");
    }

    static void softmax_inplace(double* x, long n, long stride) {
        double mx = x[0];
        for (long i = 1; i < n; ++i) mx = std::max(mx, x[i * stride]);
        double z = 0.0;
        for (long i = 0; i < n; ++i) {
            x[i * stride] = std::exp(x[i * stride] - mx);
            z += x[i * stride];
        }
        for (long i = 0; i < n; ++i) x[i * stride] /= z;
    }

    void softmax_backward_span(NodeId o, NodeId x, long offset, long n, long stride) {
        const Tensor& y = value(o);
        const Tensor& g = nodes_[static_cast<std::size_t>(o)].grad;
        Tensor& gx = grad_buf(x);
        double dy = 0.0;
        for (long i = 0; i < n; ++i) dy += g[offset + i * stride] * y[offset + i * stride];
        for (long i = 0; i < n; ++i) {
            const long k = offset + i * stride;
            gx[k] += y[k] * (g[k] - dy);
        }
    }

    NodeId concat_vectors(const std::vector<NodeId>& parts) {
        long total = 0;
        bool rg = false;
        for (NodeId p : parts) {
            total += value(p).numel();
            rg = rg || requires_grad(p);
        }
        if (total == 0) throw DimensionError("concat: all parts empty");
        Tensor out = Tensor::zeros({total});
        long off = 0;
        for (NodeId p : parts) {
            const Tensor& v = value(p);
            std::copy(v.data.begin(), v.data.end(), out.data.begin() + off);
            off += v.numel();
        }
        NodeId id = push(std::move(out), rg && recording_, nullptr, "concat");
        if (node_rg(id))
            set_back(id, [id, parts](Tape& t) {
                const Tensor& g = t.nodes_[(std::size_t)id].grad;
                long off2 = 0;
                for (NodeId p : parts) {
                    const long n = t.value(p).numel();
                    if (t.requires_grad(p)) {
                        Tensor& gp = t.grad_buf(p);
                        for (long i = 0; i < n; ++i) gp[i] += g[off2 + i];
                    }
                    off2 += n;
                }
            });
        return id;
    }

    NodeId concat_cols(const std::vector<NodeId>& parts) {
        const long r = value(parts[0]).shape[0];
        long total = 0;
        bool rg = false;
        for (NodeId p : parts) {
            if (value(p).shape[0] != r) throw DimensionError("concat: row counts differ");
            total += value(p).shape[1];
            rg = rg || requires_grad(p);
        }
        Tensor out = Tensor::zeros({r, total});
        long off = 0;
        for (NodeId p : parts) {
            const Tensor& v = value(p);
            const long c = v.shape[1];
            for (long i = 0; i < r; ++i)
                for (long j = 0; j < c; ++j) out.at(i, off + j) = v.at(i, j);
            off += c;
        }
        NodeId id = push(std::move(out), rg && recording_, nullptr, "concat");
        if (node_rg(id))
            set_back(id, [id, parts, r, total](Tape& t) {
                const Tensor& g = t.nodes_[(std::size_t)id].grad;
                long off2 = 0;
                for (NodeId p : parts) {
                    const long c = t.value(p).shape[1];
                    if (t.requires_grad(p)) {
                        Tensor& gp = t.grad_buf(p);
                        for (long i = 0; i < r; ++i)
                            for (long j = 0; j < c; ++j) gp[i * c + j] += g[i * total + off2 + j];
                    }
                    off2 += c;
                }
            });
        return id;
    }
};

// ---- composite building blocks ------------------------------------------

/// W x + b
inline NodeId linear(Tape& t, NodeId w, NodeId x, NodeId b) {
    return t.add(t.matvec(w, x), b);
}

/// Parameters of one GRU cell; weights are [hidden x in] / [hidden x hidden].
struct GruIds {
    NodeId w_z, u_z, b_z;
    NodeId w_r, u_r, b_r;
    NodeId w_h, u_h, b_h;
};

/// Standard GRU cell:
///   z = sigmoid(W_z x + U_z h + b_z)
///   r = sigmoid(W_r x + U_r h + b_r)
///   hc = tanh(W_h x + U_h (r*h) + b_h)
///   h' = (1-z)*h + z*hc
inline NodeId gru_cell(Tape& t, const GruIds& p, NodeId x, NodeId h) {
    NodeId z = t.sigmoid(t.add(t.add(t.matvec(p.w_z, x), t.matvec(p.u_z, h)), p.b_z));
    NodeId r = t.sigmoid(t.add(t.add(t.matvec(p.w_r, x), t.matvec(p.u_r, h)), p.b_r));
    NodeId hc = t.tanh_act(t.add(t.add(t.matvec(p.w_h, x), t.matvec(p.u_h, t.mul(r, h))), p.b_h));
    return t.add(t.mul(t.affine(z, -1.0, 1.0), h), t.mul(z, hc));
}

}  // namespace mpfa
