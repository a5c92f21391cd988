#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "cortexnet/nets/phiseg.hpp"
#include "cortexnet/nets/unet.hpp"

namespace cortexnet {

template <typename T>
struct ModelOutput {
    PredictionPair<T> pred;
    std::vector<double> kl_terms;  ///< empty unless a posterior-mode PHiSeg pass
};

/// Uniform front for the three model kinds.
template <typename T>
class Model {
public:
    Model(ModelKind kind, const NetworkConfig& cfg);

    ModelKind kind() const { return kind_; }
    const NetworkConfig& config() const { return cfg_; }
    const ParameterLayout& layout() const;
    int divisor() const { return cfg_.divisor(kind_); }
    /// True when inference passes differ between RNG streams.
    bool stochastic_at_inference() const;

    /// Training pass: dropout active, PHiSeg in posterior mode (needs labels).
    ModelOutput<T> forward_train(const ParameterSet<T>& p, const Tensor<T>& patch, std::span<const std::uint8_t> labels,
                                 Rng& rng, std::uint64_t* kink_signature = nullptr);
    /// Inference pass: dropout per config, PHiSeg in prior mode. `rng` may be
    /// null only for deterministic models.
    PredictionPair<T> forward_infer(const ParameterSet<T>& p, const Tensor<T>& patch, Rng* rng);
    /// Gradients of the last forward_train call.
    void backward(const ParameterSet<T>& p, const Tensor<T>& dseg, const Tensor<T>& dmetric, double kl_weight,
                  ParameterSet<T>& grads);

private:
    ModelKind kind_;
    NetworkConfig cfg_;
    std::unique_ptr<UNet<T>> unet_;
    std::unique_ptr<PhiSeg<T>> phiseg_;
};

}  // namespace cortexnet
