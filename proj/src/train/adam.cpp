#include "cortexnet/train/adam.hpp"

#include <cmath>

#include "cortexnet/common/error.hpp"

namespace cortexnet {

Adam::Adam(const ParameterLayout& layout, AdamConfig cfg) : cfg_(cfg) {
    for (const auto& s : layout.specs()) {
        m_.emplace_back(s.count(), 0.0);
        v_.emplace_back(s.count(), 0.0);
    }
}

void Adam::step(ModelParameters& params, const ModelParameters& grads, double learning_rate) {
    if (params.size() != m_.size() || grads.size() != m_.size()) throw ShapeError("Adam: parameter count mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t e = 0; e < m_.size(); ++e) {
        auto& p = params[e].values;
        const auto& g = grads[e].values;
        auto& m = m_[e];
        auto& v = v_[e];
        if (p.size() != m.size() || g.size() != m.size()) throw ShapeError("Adam: tensor size mismatch");
        for (std::size_t i = 0; i < m.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            if (learning_rate != 0.0)
                p[i] -= static_cast<float>(learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon));
        }
    }
}

}  // namespace cortexnet
