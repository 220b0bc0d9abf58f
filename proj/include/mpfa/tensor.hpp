#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "mpfa/errors.hpp"

namespace mpfa {

/// Dense row-major tensor of doubles, rank 1 or 2. Scalars are length-1
/// vectors. This is a plain value type; gradients live on the Tape.
struct Tensor {
    std::vector<long> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<long> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel() != static_cast<long>(data.size()))
            throw DimensionError("Tensor: shape does not match data length");
    }

    static Tensor zeros(std::vector<long> s) {
        long n = 1;
        for (long d : s) n *= d;
        return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    }
    static Tensor full(std::vector<long> s, double v) {
        long n = 1;
        for (long d : s) n *= d;
        return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), v));
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor vec(std::vector<double> d) {
        const long n = static_cast<long>(d.size());
        return Tensor({n}, std::move(d));
    }
    static Tensor mat(long r, long c, std::vector<double> d) { return Tensor({r, c}, std::move(d)); }

    long numel() const {
        long n = 1;
        for (long d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }
    int rank() const { return static_cast<int>(shape.size()); }
    bool is_vector() const { return rank() == 1; }
    bool is_matrix() const { return rank() == 2; }
    long rows() const { return is_matrix() ? shape[0] : 1; }
    long cols() const { return is_matrix() ? shape[1] : (shape.empty() ? 0 : shape[0]); }

    double& operator[](long i) { return data[static_cast<std::size_t>(i)]; }
    double operator[](long i) const { return data[static_cast<std::size_t>(i)]; }
    double& at(long r, long c) { return data[static_cast<std::size_t>(r * shape[1] + c)]; }
    double at(long r, long c) const { return data[static_cast<std::size_t>(r * shape[1] + c)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i)
            s += (i ? "x" : "") + std::to_string(shape[i]);
        return s + "]";
    }
};

inline bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
}

}  // namespace mpfa
