#pragma once

#include <cmath>
#include <vector>

#include "mpfa/errors.hpp"
#include "mpfa/tensor.hpp"

namespace mpfa {

/// Fixed (non-trainable) cosine time encoding with geometric frequencies
/// w_k = 10000^(-2k/d). phi(0) is the all-ones vector.
class TimeEncoder {
public:
    explicit TimeEncoder(int dim) : dim_(dim), freq_(static_cast<std::size_t>(dim)) {
        if (dim < 1) throw ParameterError("TimeEncoder: dim must be >= 1");
        for (int k = 0; k < dim; ++k)
            freq_[static_cast<std::size_t>(k)] =
                std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    }

    int dim() const { return dim_; }

    Tensor encode(double dt) const {
        if (dt < 0.0) throw TimeOrderError("time_encode: negative time delta");
        Tensor out = Tensor::zeros({dim_});
        for (int k = 0; k < dim_; ++k)
            out[k] = std::cos(freq_[static_cast<std::size_t>(k)] * dt);
        return out;
    }

private:
    int dim_;
    std::vector<double> freq_;
};

}  // namespace mpfa
