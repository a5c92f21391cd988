#include "cortexnet/nets/phiseg.hpp"

#include <cmath>

#include "cortexnet/common/error.hpp"
#include "cortexnet/nets/losses.hpp"

namespace cortexnet {

template <typename T>
PhiSeg<T>::PhiSeg(const NetworkConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    build_net(prior_, "prior", 1);
    build_net(posterior_, "posterior", 1 + cfg_.num_classes);
    const int levels = cfg_.latent.num_levels;
    const int ld = cfg_.latent.latent_dim;
    dec_.resize(static_cast<std::size_t>(levels));
    up_.resize(static_cast<std::size_t>(levels));
    for (int l = levels - 1; l >= 0; --l) {
        const int c = cfg_.channels(l);
        const int cin = l == levels - 1 ? ld : c + ld;
        dec_[static_cast<std::size_t>(l)] = ConvBlock<T>(layout_, "dec" + std::to_string(l), cin, c,
                                                         cfg_.convs_per_block, cfg_.padding, cfg_.norm_epsilon);
        if (l < levels - 1)
            up_[static_cast<std::size_t>(l)] = UpConv2<T>(layout_, "up" + std::to_string(l), cfg_.channels(l + 1), c);
    }
    heads_ = MultiTaskHeads<T>(layout_, cfg_.channels(0), cfg_.num_classes, cfg_.regression_hidden);
}

template <typename T>
void PhiSeg<T>::build_net(Net& net, const std::string& prefix, int in_channels) {
    const int levels = cfg_.latent.num_levels;
    const int ld = cfg_.latent.latent_dim;
    for (int l = 0; l < levels; ++l) {
        const int cin = l == 0 ? in_channels : cfg_.channels(l - 1);
        net.enc.emplace_back(layout_, prefix + ".enc" + std::to_string(l), cin, cfg_.channels(l),
                             cfg_.convs_per_block, cfg_.padding, cfg_.norm_epsilon);
    }
    net.pool.resize(static_cast<std::size_t>(levels));
    net.block.resize(static_cast<std::size_t>(levels));
    net.head.resize(static_cast<std::size_t>(levels));
    for (int l = levels - 1; l >= 0; --l) {
        const std::string name = prefix + ".latent" + std::to_string(l);
        const int c = cfg_.channels(l);
        if (l < levels - 1)
            net.block[static_cast<std::size_t>(l)] =
                ConvBlock<T>(layout_, name + ".block", c + ld, c, 1, cfg_.padding, cfg_.norm_epsilon);
        net.head[static_cast<std::size_t>(l)] = Conv1x1<T>(layout_, name + ".head", c, 2 * ld, InitKind::Zero);
    }
}

template <typename T>
void PhiSeg<T>::encode(Net& net, const ParameterSet<T>& p, const Tensor<T>& input, const ForwardContext& ctx) {
    const std::size_t levels = net.enc.size();
    net.features.assign(levels, Tensor<T>());
    Tensor<T> x = input;
    for (std::size_t l = 0; l < levels; ++l) {
        net.features[l] = net.enc[l].forward(p, x, ctx);
        if (l + 1 < levels) x = net.pool[l].forward(net.features[l], ctx);
    }
}

template <typename T>
void PhiSeg<T>::latent_params(Net& net, std::size_t l, const ParameterSet<T>& p, const Tensor<T>* coarser_z,
                              const ForwardContext& ctx) {
    const std::size_t levels = net.enc.size();
    net.mu.resize(levels);
    net.log_sigma.resize(levels);
    Tensor<T> out;
    if (coarser_z)
        out = net.head[l].forward(
            p, net.block[l].forward(p, concat_channels(net.features[l], upsample_nearest2(*coarser_z)), ctx));
    else
        out = net.head[l].forward(p, net.features[l]);
    split_channels(out, static_cast<std::size_t>(cfg_.latent.latent_dim), net.mu[l], net.log_sigma[l]);
}

template <typename T>
PredictionPair<T> PhiSeg<T>::forward(const ParameterSet<T>& p, const Tensor<T>& patch,
                                     std::span<const std::uint8_t> labels, LatentMode mode,
                                     const ForwardContext& ctx, std::vector<double>& kl_terms) {
    check_forward_inputs(p, layout_, patch, cfg_.divisor(ModelKind::PHiSeg));
    if (!ctx.rng) throw InvariantError("PhiSeg: forward pass requires an RNG");
    posterior_ready_ = false;
    kl_terms.clear();
    voxels_ = patch.spatial();
    const auto levels = static_cast<std::size_t>(cfg_.latent.num_levels);
    const bool posterior = mode == LatentMode::Posterior;

    encode(prior_, p, patch, ctx);
    if (posterior) {
        if (labels.size() != voxels_) throw ShapeError("PhiSeg: posterior mode requires labels matching the patch");
        const auto k = static_cast<std::size_t>(cfg_.num_classes);
        Tensor<T> joint(1 + k, patch.d, patch.h, patch.w);
        std::copy(patch.data.begin(), patch.data.end(), joint.data.begin());
        for (std::size_t i = 0; i < voxels_; ++i) {
            if (labels[i] >= k) throw InvariantError("PhiSeg: label exceeds num_classes");
            joint.data[(1 + labels[i]) * voxels_ + i] = T{1};
        }
        encode(posterior_, p, joint, ctx);
        kl_terms.assign(levels, 0.0);
    }

    z_.assign(levels, Tensor<T>());
    eps_.assign(levels, Tensor<T>());
    for (std::size_t l = levels; l-- > 0;) {
        const Tensor<T>* coarser = l + 1 < levels ? &z_[l + 1] : nullptr;
        Net& sampler = posterior ? posterior_ : prior_;
        latent_params(sampler, l, p, coarser, ctx);
        if (posterior) latent_params(prior_, l, p, coarser, ctx);
        const Tensor<T>& mu = sampler.mu[l];
        const Tensor<T>& ls = sampler.log_sigma[l];
        eps_[l] = Tensor<T>(mu.c, mu.d, mu.h, mu.w);
        z_[l] = Tensor<T>(mu.c, mu.d, mu.h, mu.w);
        for (std::size_t i = 0; i < mu.size(); ++i) {
            eps_[l].data[i] = static_cast<T>(normal01(*ctx.rng));
            z_[l].data[i] = mu.data[i] + std::exp(ls.data[i]) * eps_[l].data[i];
        }
        if (posterior) {
            double kl = 0.0;
            for (std::size_t i = 0; i < mu.size(); ++i)
                kl += kl_diag_gaussian(mu.data[i], ls.data[i], prior_.mu[l].data[i], prior_.log_sigma[l].data[i]);
            kl_terms[l] = kl / static_cast<double>(voxels_);
        }
    }

    Tensor<T> g = dec_[levels - 1].forward(p, z_[levels - 1], ctx);
    for (std::size_t l = levels - 1; l-- > 0;) g = dec_[l].forward(p, concat_channels(up_[l].forward(p, g), z_[l]), ctx);
    PredictionPair<T> out;
    heads_.forward(p, g, ctx, out.seg_logits, out.metric);
    posterior_ready_ = posterior;
    return out;
}

template <typename T>
void PhiSeg<T>::latent_backward(Net& net, std::size_t l, const ParameterSet<T>& p, const Tensor<T>& dmu,
                                const Tensor<T>& dlog_sigma, std::vector<Tensor<T>>& dfeatures, Tensor<T>* dcoarser_z,
                                ParameterSet<T>& grads) {
    Tensor<T> dh = net.head[l].backward(p, concat_channels(dmu, dlog_sigma), grads);
    if (!dcoarser_z) {
        add_inplace(dfeatures[l], dh);
        return;
    }
    Tensor<T> df, dup;
    split_channels(net.block[l].backward(p, dh, grads), net.features[l].c, df, dup);
    add_inplace(dfeatures[l], df);
    add_inplace(*dcoarser_z, upsample_nearest2_backward(dup));
}

template <typename T>
void PhiSeg<T>::encode_backward(Net& net, const ParameterSet<T>& p, std::vector<Tensor<T>>& dfeatures,
                                ParameterSet<T>& grads) {
    Tensor<T> carry;
    for (std::size_t l = net.enc.size(); l-- > 0;) {
        Tensor<T> g = dfeatures[l];
        if (l + 1 < net.enc.size()) add_inplace(g, net.pool[l].backward(carry));
        carry = net.enc[l].backward(p, g, grads);
    }
}

template <typename T>
void PhiSeg<T>::backward(const ParameterSet<T>& p, const Tensor<T>& dseg, const Tensor<T>& dmetric, double kl_weight,
                         ParameterSet<T>& grads) {
    if (!posterior_ready_) throw InvariantError("PhiSeg: backward requires a preceding posterior-mode forward");
    const auto levels = static_cast<std::size_t>(cfg_.latent.num_levels);
    std::vector<Tensor<T>> dz(levels);
    for (std::size_t l = 0; l < levels; ++l) dz[l] = Tensor<T>(z_[l].c, z_[l].d, z_[l].h, z_[l].w);

    Tensor<T> g = heads_.backward(p, dseg, dmetric, grads);
    for (std::size_t l = 0; l + 1 < levels; ++l) {
        Tensor<T> dup, dzl;
        split_channels(dec_[l].backward(p, g, grads), static_cast<std::size_t>(cfg_.channels(static_cast<int>(l))),
                       dup, dzl);
        add_inplace(dz[l], dzl);
        g = up_[l].backward(p, dup, grads);
    }
    add_inplace(dz[levels - 1], dec_[levels - 1].backward(p, g, grads));

    auto zeros_like = [](const std::vector<Tensor<T>>& ts) {
        std::vector<Tensor<T>> out;
        for (const auto& t : ts) out.emplace_back(t.c, t.d, t.h, t.w);
        return out;
    };
    std::vector<Tensor<T>> dfq = zeros_like(posterior_.features);
    std::vector<Tensor<T>> dfp = zeros_like(prior_.features);
    const double c = kl_weight / static_cast<double>(voxels_);
    for (std::size_t l = 0; l < levels; ++l) {
        const Tensor<T>& mq = posterior_.mu[l];
        const Tensor<T>& lq = posterior_.log_sigma[l];
        const Tensor<T>& mp = prior_.mu[l];
        const Tensor<T>& lp = prior_.log_sigma[l];
        Tensor<T> dmq(mq.c, mq.d, mq.h, mq.w), dlq = dmq, dmp = dmq, dlp = dmq;
        for (std::size_t i = 0; i < mq.size(); ++i) {
            const double sq = std::exp(static_cast<double>(lq.data[i]));
            const double vq = sq * sq;
            const double vp = std::exp(2.0 * static_cast<double>(lp.data[i]));
            const double dm = static_cast<double>(mq.data[i]) - static_cast<double>(mp.data[i]);
            const double dzi = dz[l].data[i];
            dmq.data[i] = static_cast<T>(c * dm / vp + dzi);
            dlq.data[i] = static_cast<T>(c * (vq / vp - 1.0) + dzi * sq * static_cast<double>(eps_[l].data[i]));
            dmp.data[i] = static_cast<T>(-c * dm / vp);
            dlp.data[i] = static_cast<T>(c * (1.0 - (vq + dm * dm) / vp));
        }
        Tensor<T>* coarser = l + 1 < levels ? &dz[l + 1] : nullptr;
        latent_backward(posterior_, l, p, dmq, dlq, dfq, coarser, grads);
        latent_backward(prior_, l, p, dmp, dlp, dfp, coarser, grads);
    }
    encode_backward(posterior_, p, dfq, grads);
    encode_backward(prior_, p, dfp, grads);
}

template class PhiSeg<float>;
template class PhiSeg<double>;

}  // namespace cortexnet
