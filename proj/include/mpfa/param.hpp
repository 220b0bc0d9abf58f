#pragma once

#include <string>
#include <vector>

#include "mpfa/tensor.hpp"

namespace mpfa {

/// A learnable tensor plus its persistent gradient buffer. Gradients are
/// overwritten once per optimizer step, not accumulated across steps.
struct Param {
    Tensor v;
    Tensor g;

    void init_zeros(std::vector<long> shape) {
        v = Tensor::zeros(shape);
        g = Tensor::zeros(std::move(shape));
    }
    void zero_grad() {
        for (double& x : g.data) x = 0.0;
    }
    long numel() const { return v.numel(); }
};

/// Name -> parameter pointer, in a stable order. The registry order defines
/// initialization order, optimizer iteration order and checkpoint layout.
struct ParamRef {
    std::string name;
    Param* p;
};

using ParamRegistry = std::vector<ParamRef>;

}  // namespace mpfa
