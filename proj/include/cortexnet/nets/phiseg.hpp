#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cortexnet/nets/unet.hpp"

namespace cortexnet {

enum class LatentMode { Prior, Posterior };

/// Hierarchical conditional-variational segmentation network with the
/// multi-task heads. Latents live at resolutions 1, 1/2, ... 1/2^(L-1);
/// each level is a diagonal Gaussian whose parameters depend on the
/// encoder features at that scale and the sample drawn one level coarser.
template <typename T>
class PhiSeg {
public:
    explicit PhiSeg(const NetworkConfig& cfg);

    const ParameterLayout& layout() const { return layout_; }
    const NetworkConfig& config() const { return cfg_; }

    /// Posterior mode samples from q(z | x, y) and returns KL(q_l || p_l) per
    /// level (summed over latent elements, divided by full-resolution voxel
    /// count). Prior mode samples from p(z | x) and returns no KL terms.
    PredictionPair<T> forward(const ParameterSet<T>& p, const Tensor<T>& patch, std::span<const std::uint8_t> labels,
                              LatentMode mode, const ForwardContext& ctx, std::vector<double>& kl_terms);
    /// Gradients for the last posterior-mode forward; `kl_weight` scales every KL term.
    void backward(const ParameterSet<T>& p, const Tensor<T>& dseg, const Tensor<T>& dmetric, double kl_weight,
                  ParameterSet<T>& grads);

private:
    struct Net {
        std::vector<ConvBlock<T>> enc;
        std::vector<MaxPool2<T>> pool;
        std::vector<ConvBlock<T>> block;  // unused at the coarsest level
        std::vector<Conv1x1<T>> head;
        std::vector<Tensor<T>> features, mu, log_sigma;
    };
    void build_net(Net& net, const std::string& prefix, int in_channels);
    void encode(Net& net, const ParameterSet<T>& p, const Tensor<T>& input, const ForwardContext& ctx);
    void latent_params(Net& net, std::size_t l, const ParameterSet<T>& p, const Tensor<T>* coarser_z,
                       const ForwardContext& ctx);
    /// Backprop d(mu), d(log_sigma) of level l into feature grads and the coarser sample's grad.
    void latent_backward(Net& net, std::size_t l, const ParameterSet<T>& p, const Tensor<T>& dmu,
                         const Tensor<T>& dlog_sigma, std::vector<Tensor<T>>& dfeatures, Tensor<T>* dcoarser_z,
                         ParameterSet<T>& grads);
    void encode_backward(Net& net, const ParameterSet<T>& p, std::vector<Tensor<T>>& dfeatures,
                         ParameterSet<T>& grads);

    NetworkConfig cfg_;
    ParameterLayout layout_;
    Net prior_, posterior_;
    std::vector<ConvBlock<T>> dec_;
    std::vector<UpConv2<T>> up_;  // up_[l] maps level l+1 to level l
    MultiTaskHeads<T> heads_;

    std::vector<Tensor<T>> z_, eps_;
    std::size_t voxels_ = 0;
    bool posterior_ready_ = false;
};

}  // namespace cortexnet
