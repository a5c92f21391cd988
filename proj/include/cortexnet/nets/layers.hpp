#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cortexnet/common/rng.hpp"
#include "cortexnet/nets/config.hpp"
#include "cortexnet/nets/parameters.hpp"
#include "cortexnet/nets/tensor.hpp"

namespace cortexnet {

/// Per-call forward options. RNG is explicit; layers never draw from global state.
struct ForwardContext {
    Rng* rng = nullptr;
    bool dropblock_active = false;
    /// When set, ReLU and max-pool fold their switching pattern into this
    /// hash. Equal signatures at two parameter points mean no kink lies
    /// between them on a straight path with high probability.
    std::uint64_t* kink_signature = nullptr;
};

// Each layer caches what its backward pass needs, so a layer instance
// serves one forward/backward pair at a time.

/// 3x3x3 convolution, stride 1, one voxel of zero or periodic padding.
/// Weight shape [cout, cin, 3, 3, 3].
template <typename T>
class Conv3d {
public:
    Conv3d() = default;
    Conv3d(ParameterLayout& layout, const std::string& name, int cin, int cout, bool bias, Padding padding);

    Tensor<T> forward(const ParameterSet<T>& p, const Tensor<T>& in);
    Tensor<T> backward(const ParameterSet<T>& p, const Tensor<T>& dout, ParameterSet<T>& grads);

private:
    int cin_ = 0, cout_ = 0;
    std::size_t weight_ = 0;
    std::optional<std::size_t> bias_;
    Padding padding_ = Padding::Zero;
    Tensor<T> padded_;
    std::size_t d_ = 0, h_ = 0, w_ = 0;
};

/// 1x1x1 convolution (a per-voxel dense layer). Weight shape [cout, cin].
template <typename T>
class Conv1x1 {
public:
    Conv1x1() = default;
    Conv1x1(ParameterLayout& layout, const std::string& name, int cin, int cout, InitKind init = InitKind::HeNormal);

    Tensor<T> forward(const ParameterSet<T>& p, const Tensor<T>& in);
    Tensor<T> backward(const ParameterSet<T>& p, const Tensor<T>& dout, ParameterSet<T>& grads);

private:
    int cin_ = 0, cout_ = 0;
    std::size_t weight_ = 0, bias_ = 0;
    Tensor<T> input_;
};

/// Transposed convolution, kernel 2, stride 2 (doubles each spatial side).
/// Weight shape [cout, 2, 2, 2, cin].
template <typename T>
class UpConv2 {
public:
    UpConv2() = default;
    UpConv2(ParameterLayout& layout, const std::string& name, int cin, int cout);

    Tensor<T> forward(const ParameterSet<T>& p, const Tensor<T>& in);
    Tensor<T> backward(const ParameterSet<T>& p, const Tensor<T>& dout, ParameterSet<T>& grads);

private:
    int cin_ = 0, cout_ = 0;
    std::size_t weight_ = 0, bias_ = 0;
    Tensor<T> input_;
};

/// Per-channel instance normalisation with learned scale and shift.
template <typename T>
class InstanceNorm {
public:
    InstanceNorm() = default;
    InstanceNorm(ParameterLayout& layout, const std::string& name, int channels, double eps);

    Tensor<T> forward(const ParameterSet<T>& p, const Tensor<T>& in);
    Tensor<T> backward(const ParameterSet<T>& p, const Tensor<T>& dout, ParameterSet<T>& grads);

private:
    int channels_ = 0;
    double eps_ = 1e-5;
    std::size_t scale_ = 0, shift_ = 0;
    Tensor<T> normalized_;
    std::vector<double> inv_std_;
};

template <typename T>
class ReLU {
public:
    void forward_inplace(Tensor<T>& x, const ForwardContext& ctx);
    void backward_inplace(Tensor<T>& dx) const;

private:
    std::vector<std::uint8_t> active_;
};

/// 2x2x2 max pooling, stride 2.
template <typename T>
class MaxPool2 {
public:
    Tensor<T> forward(const Tensor<T>& in, const ForwardContext& ctx);
    Tensor<T> backward(const Tensor<T>& dout) const;

private:
    std::vector<std::uint32_t> argmax_;
    std::size_t c_ = 0, d_ = 0, h_ = 0, w_ = 0;
};

/// Nearest-neighbour 2x upsampling (parameter free).
template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& in);
template <typename T>
Tensor<T> upsample_nearest2_backward(const Tensor<T>& dout);

/// Structured dropout: zeroes block_size^3 cubes around sampled centres and
/// rescales survivors by (total / kept). Identity when inactive or rate 0.
template <typename T>
class DropBlock {
public:
    DropBlock() = default;
    DropBlock(int block_size, double drop_rate);

    Tensor<T> forward(const Tensor<T>& in, const ForwardContext& ctx);
    Tensor<T> backward(const Tensor<T>& dout) const;

    /// Per-centre Bernoulli rate for a grid: drop_rate * V / (bs^3 * valid centres), clamped to 1.
    static double center_rate(double drop_rate, int block_size, std::size_t d, std::size_t h, std::size_t w);

private:
    int block_size_ = 3;
    double drop_rate_ = 0.0;
    bool applied_ = false;
    std::vector<T> scale_mask_;  ///< mask * rescale, per element
};

/// Standalone functional form of DropBlock for one feature grid.
template <typename T>
Tensor<T> apply_dropblock(const Tensor<T>& features, int block_size, double drop_rate, Rng& rng);

/// Stack of (conv3 -> instance norm -> ReLU) units.
template <typename T>
class ConvBlock {
public:
    ConvBlock() = default;
    ConvBlock(ParameterLayout& layout, const std::string& name, int cin, int cout, int convs, Padding padding,
              double eps);

    Tensor<T> forward(const ParameterSet<T>& p, const Tensor<T>& in, const ForwardContext& ctx);
    Tensor<T> backward(const ParameterSet<T>& p, const Tensor<T>& dout, ParameterSet<T>& grads);

private:
    struct Unit {
        Conv3d<T> conv;
        InstanceNorm<T> norm;
        ReLU<T> relu;
    };
    std::vector<Unit> units_;
};

/// Segmentation head plus the voxel-wise dense regression branch
/// (two hidden ReLU layers, then a linear map to one channel).
template <typename T>
class MultiTaskHeads {
public:
    MultiTaskHeads() = default;
    MultiTaskHeads(ParameterLayout& layout, int features, int num_classes, int hidden);

    void forward(const ParameterSet<T>& p, const Tensor<T>& features, const ForwardContext& ctx, Tensor<T>& seg_logits,
                 Tensor<T>& metric);
    Tensor<T> backward(const ParameterSet<T>& p, const Tensor<T>& dseg, const Tensor<T>& dmetric,
                       ParameterSet<T>& grads);

private:
    Conv1x1<T> seg_;
    Conv1x1<T> hidden1_, hidden2_, out_;
    ReLU<T> relu1_, relu2_;
};

}  // namespace cortexnet
