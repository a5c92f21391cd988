#pragma once

#include <cstdint>
#include <vector>

#include "cortexnet/nets/parameters.hpp"

namespace cortexnet {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adaptive-moment optimiser with bias-corrected first and second moments.
/// Moments are kept in double.
class Adam {
public:
    Adam(const ParameterLayout& layout, AdamConfig cfg = {});

    /// One update: p -= lr * m_hat / (sqrt(v_hat) + eps).
    void step(ModelParameters& params, const ModelParameters& grads, double learning_rate);
    std::uint64_t steps() const { return t_; }

private:
    AdamConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace cortexnet
