#include "cortexnet/nets/unet.hpp"

#include "cortexnet/common/error.hpp"

namespace cortexnet {

template <typename T>
void check_forward_inputs(const ParameterSet<T>& p, const ParameterLayout& layout, const Tensor<T>& patch,
                          int divisor) {
    if (patch.c != 1) throw ShapeError("forward: input patch must have one channel");
    const auto div = static_cast<std::size_t>(divisor);
    if (patch.d == 0 || patch.d % div || patch.h % div || patch.w % div || patch.h == 0 || patch.w == 0)
        throw ShapeError("forward: patch sides must be positive multiples of " + std::to_string(divisor));
    p.check_layout(layout);
    if (!p.all_finite()) throw InvariantError("forward: parameters contain non-finite values");
}

template <typename T>
UNet<T>::UNet(const NetworkConfig& cfg, bool with_dropblock) : cfg_(cfg), with_dropblock_(with_dropblock) {
    cfg_.validate();
    const int levels = cfg_.levels;
    const int convs = cfg_.convs_per_block;
    const double eps = cfg_.norm_epsilon;
    for (int l = 0; l < levels; ++l) {
        const int cin = l == 0 ? 1 : cfg_.channels(l - 1);
        enc_.emplace_back(layout_, "enc" + std::to_string(l), cin, cfg_.channels(l), convs, cfg_.padding, eps);
    }
    pool_.resize(static_cast<std::size_t>(levels));
    bottleneck_ = ConvBlock<T>(layout_, "bottleneck", cfg_.channels(levels - 1), cfg_.channels(levels), convs,
                               cfg_.padding, eps);
    up_.resize(static_cast<std::size_t>(levels));
    dec_.resize(static_cast<std::size_t>(levels));
    for (int l = levels - 1; l >= 0; --l) {
        const int c = cfg_.channels(l);
        up_[static_cast<std::size_t>(l)] = UpConv2<T>(layout_, "up" + std::to_string(l), cfg_.channels(l + 1), c);
        dec_[static_cast<std::size_t>(l)] =
            ConvBlock<T>(layout_, "dec" + std::to_string(l), 2 * c, c, convs, cfg_.padding, eps);
    }
    drop_.assign(static_cast<std::size_t>(levels), DropBlock<T>(cfg_.dropblock.block_size, cfg_.dropblock.drop_rate));
    heads_ = MultiTaskHeads<T>(layout_, cfg_.channels(0), cfg_.num_classes, cfg_.regression_hidden);
}

template <typename T>
PredictionPair<T> UNet<T>::forward(const ParameterSet<T>& p, const Tensor<T>& patch, const ForwardContext& ctx) {
    check_forward_inputs(p, layout_, patch, cfg_.divisor(ModelKind::UNet));
    const auto levels = static_cast<std::size_t>(cfg_.levels);
    std::vector<Tensor<T>> skips(levels);
    Tensor<T> x = patch;
    for (std::size_t l = 0; l < levels; ++l) {
        skips[l] = enc_[l].forward(p, x, ctx);
        x = pool_[l].forward(skips[l], ctx);
    }
    x = bottleneck_.forward(p, x, ctx);
    ForwardContext drop_ctx = ctx;
    drop_ctx.dropblock_active = with_dropblock_ && ctx.dropblock_active;
    for (std::size_t i = levels; i-- > 0;) {
        x = dec_[i].forward(p, concat_channels(up_[i].forward(p, x), skips[i]), ctx);
        x = drop_[i].forward(x, drop_ctx);
    }
    PredictionPair<T> out;
    heads_.forward(p, x, ctx, out.seg_logits, out.metric);
    return out;
}

template <typename T>
void UNet<T>::backward(const ParameterSet<T>& p, const Tensor<T>& dseg, const Tensor<T>& dmetric,
                       ParameterSet<T>& grads) {
    const auto levels = static_cast<std::size_t>(cfg_.levels);
    Tensor<T> g = heads_.backward(p, dseg, dmetric, grads);
    std::vector<Tensor<T>> dskips(levels);
    for (std::size_t l = 0; l < levels; ++l) {
        g = dec_[l].backward(p, drop_[l].backward(g), grads);
        Tensor<T> dup;
        split_channels(g, static_cast<std::size_t>(cfg_.channels(static_cast<int>(l))), dup, dskips[l]);
        g = up_[l].backward(p, dup, grads);
    }
    g = bottleneck_.backward(p, g, grads);
    for (std::size_t l = levels; l-- > 0;) {
        Tensor<T> ds = pool_[l].backward(g);
        add_inplace(ds, dskips[l]);
        g = enc_[l].backward(p, ds, grads);
    }
}

template class UNet<float>;
template class UNet<double>;
template void check_forward_inputs<float>(const ParameterSet<float>&, const ParameterLayout&, const Tensor<float>&,
                                          int);
template void check_forward_inputs<double>(const ParameterSet<double>&, const ParameterLayout&,
                                           const Tensor<double>&, int);

}  // namespace cortexnet
