#pragma once

#include <vector>

#include "cortexnet/nets/config.hpp"
#include "cortexnet/nets/layers.hpp"

namespace cortexnet {

/// Segmentation logits (K x D x H x W) and the per-voxel metric (1 x D x H x W).
template <typename T>
struct PredictionPair {
    Tensor<T> seg_logits;
    Tensor<T> metric;
};

/// Multi-task 3D U-Net: encoder/decoder with skips, a 1x1x1 segmentation
/// head and the voxel-wise dense regression branch on the final decoder
/// features. With `with_dropblock` a DropBlock follows every decoder block.
template <typename T>
class UNet {
public:
    UNet(const NetworkConfig& cfg, bool with_dropblock);

    const ParameterLayout& layout() const { return layout_; }
    const NetworkConfig& config() const { return cfg_; }

    PredictionPair<T> forward(const ParameterSet<T>& p, const Tensor<T>& patch, const ForwardContext& ctx);
    /// Accumulates parameter gradients for the last forward call into `grads`.
    void backward(const ParameterSet<T>& p, const Tensor<T>& dseg, const Tensor<T>& dmetric, ParameterSet<T>& grads);

private:
    NetworkConfig cfg_;
    ParameterLayout layout_;
    std::vector<ConvBlock<T>> enc_;
    std::vector<MaxPool2<T>> pool_;
    ConvBlock<T> bottleneck_;
    std::vector<UpConv2<T>> up_;    // indexed by the level they produce
    std::vector<ConvBlock<T>> dec_;
    std::vector<DropBlock<T>> drop_;
    MultiTaskHeads<T> heads_;
    bool with_dropblock_;
};

/// Shared input checks: 1-channel patch, sides divisible by `divisor`, finite parameters.
template <typename T>
void check_forward_inputs(const ParameterSet<T>& p, const ParameterLayout& layout, const Tensor<T>& patch,
                          int divisor);

}  // namespace cortexnet
