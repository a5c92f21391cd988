#include "cortexnet/nets/model.hpp"

#include "cortexnet/common/error.hpp"

namespace cortexnet {

template <typename T>
Model<T>::Model(ModelKind kind, const NetworkConfig& cfg) : kind_(kind), cfg_(cfg) {
    if (kind == ModelKind::PHiSeg)
        phiseg_ = std::make_unique<PhiSeg<T>>(cfg);
    else
        unet_ = std::make_unique<UNet<T>>(cfg, kind == ModelKind::UNetDropBlock);
}

template <typename T>
const ParameterLayout& Model<T>::layout() const {
    return phiseg_ ? phiseg_->layout() : unet_->layout();
}

template <typename T>
bool Model<T>::stochastic_at_inference() const {
    switch (kind_) {
        case ModelKind::UNet: return false;
        case ModelKind::UNetDropBlock: return cfg_.dropblock.active_at_inference && cfg_.dropblock.drop_rate > 0.0;
        case ModelKind::PHiSeg: return true;
    }
    return false;
}

template <typename T>
ModelOutput<T> Model<T>::forward_train(const ParameterSet<T>& p, const Tensor<T>& patch,
                                       std::span<const std::uint8_t> labels, Rng& rng, std::uint64_t* kink_signature) {
    ForwardContext ctx;
    ctx.rng = &rng;
    ctx.dropblock_active = true;
    ctx.kink_signature = kink_signature;
    ModelOutput<T> out;
    if (phiseg_)
        out.pred = phiseg_->forward(p, patch, labels, LatentMode::Posterior, ctx, out.kl_terms);
    else
        out.pred = unet_->forward(p, patch, ctx);
    return out;
}

template <typename T>
PredictionPair<T> Model<T>::forward_infer(const ParameterSet<T>& p, const Tensor<T>& patch, Rng* rng) {
    if (stochastic_at_inference() && !rng) throw InvariantError("stochastic model inference requires an RNG");
    ForwardContext ctx;
    ctx.rng = rng;
    ctx.dropblock_active = kind_ == ModelKind::UNetDropBlock && cfg_.dropblock.active_at_inference;
    if (phiseg_) {
        std::vector<double> kl;
        return phiseg_->forward(p, patch, {}, LatentMode::Prior, ctx, kl);
    }
    return unet_->forward(p, patch, ctx);
}

template <typename T>
void Model<T>::backward(const ParameterSet<T>& p, const Tensor<T>& dseg, const Tensor<T>& dmetric, double kl_weight,
                        ParameterSet<T>& grads) {
    if (phiseg_)
        phiseg_->backward(p, dseg, dmetric, kl_weight, grads);
    else
        unet_->backward(p, dseg, dmetric, grads);
}

template class Model<float>;
template class Model<double>;

}  // namespace cortexnet
