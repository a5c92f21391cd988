#include "cortexnet/nets/losses.hpp"

#include <algorithm>
#include <cmath>

#include "cortexnet/common/error.hpp"

namespace cortexnet {

std::string to_string(RegressionLossKind k) { return k == RegressionLossKind::Huber ? "huber" : "mse"; }

RegressionLossKind parse_regression_loss(const std::string& s) {
    if (s == "mse") return RegressionLossKind::MSE;
    if (s == "huber") return RegressionLossKind::Huber;
    throw ConfigError("unknown loss '" + s + "' (expected mse or huber)");
}

double huber(double e, double delta) {
    const double a = std::abs(e);
    return a <= delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
}

double huber_derivative(double e, double delta) {
    return std::abs(e) <= delta ? e : (e > 0 ? delta : -delta);
}

template <typename T>
double segmentation_loss(const Tensor<T>& logits, std::span<const std::uint8_t> labels, Tensor<T>* dlogits,
                         double grad_scale) {
    const std::size_t n = logits.spatial();
    const std::size_t k = logits.c;
    if (labels.size() != n) throw ShapeError("segmentation_loss: label count does not match logits");
    if (dlogits) *dlogits = Tensor<T>(logits.c, logits.d, logits.h, logits.w);
    const double g = grad_scale / static_cast<double>(n);
    double total = 0.0;
    std::vector<double> z(k);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= k) throw InvariantError("segmentation_loss: label exceeds num_classes");
        double m = -INFINITY;
        for (std::size_t c = 0; c < k; ++c) {
            z[c] = logits.data[c * n + i];
            m = std::max(m, z[c]);
        }
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) s += std::exp(z[c] - m);
        const double lse = m + std::log(s);
        total += lse - z[labels[i]];
        if (dlogits) {
            for (std::size_t c = 0; c < k; ++c) {
                const double p = std::exp(z[c] - lse);
                dlogits->data[c * n + i] = static_cast<T>(g * (p - (c == labels[i] ? 1.0 : 0.0)));
            }
        }
    }
    return total / static_cast<double>(n);
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
    const std::size_t n = logits.spatial();
    const std::size_t k = logits.c;
    Tensor<T> out(logits.c, logits.d, logits.h, logits.w);
    for (std::size_t i = 0; i < n; ++i) {
        double m = -INFINITY;
        for (std::size_t c = 0; c < k; ++c) m = std::max<double>(m, logits.data[c * n + i]);
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) s += std::exp(logits.data[c * n + i] - m);
        for (std::size_t c = 0; c < k; ++c) out.data[c * n + i] = static_cast<T>(std::exp(logits.data[c * n + i] - m) / s);
    }
    return out;
}

template <typename T>
double regression_loss(const Tensor<T>& pred, std::span<const float> target, RegressionLossKind kind, double delta,
                       Tensor<T>* dpred, double grad_scale, std::span<const std::uint8_t> mask) {
    const std::size_t n = pred.size();
    if (pred.c != 1 || target.size() != n) throw ShapeError("regression_loss: prediction and target sizes differ");
    if (!mask.empty() && mask.size() != n) throw ShapeError("regression_loss: mask size differs");
    if (kind == RegressionLossKind::Huber && !(delta > 0)) throw ConfigError("regression_loss: huber delta must be > 0");
    std::size_t count = n;
    if (!mask.empty()) count = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
    if (dpred) *dpred = Tensor<T>(pred.c, pred.d, pred.h, pred.w);
    if (count == 0) return 0.0;
    const double g = grad_scale / static_cast<double>(count);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask.empty() && !mask[i]) continue;
        const double e = static_cast<double>(pred.data[i]) - static_cast<double>(target[i]);
        if (kind == RegressionLossKind::MSE) {
            total += e * e;
            if (dpred) dpred->data[i] = static_cast<T>(g * 2.0 * e);
        } else {
            total += huber(e, delta);
            if (dpred) dpred->data[i] = static_cast<T>(g * huber_derivative(e, delta));
        }
    }
    return total / static_cast<double>(count);
}

double total_loss(double seg_loss, double reg_loss, double lambda) { return seg_loss + lambda * reg_loss; }

double elbo_loss(double seg_loss, double reg_loss, const std::vector<double>& kl_terms, double beta, double lambda) {
    double kl = 0.0;
    for (double t : kl_terms) {
        if (t < -1e-9) throw InvariantError("elbo_loss: negative KL term " + std::to_string(t));
        kl += t;
    }
    return seg_loss + lambda * reg_loss + beta * kl;
}

double kl_diag_gaussian(double mu_q, double log_sigma_q, double mu_p, double log_sigma_p) {
    const double vq = std::exp(2.0 * log_sigma_q);
    const double vp = std::exp(2.0 * log_sigma_p);
    const double dm = mu_q - mu_p;
    return log_sigma_p - log_sigma_q + (vq + dm * dm) / (2.0 * vp) - 0.5;
}

#define CORTEXNET_INSTANTIATE(T)                                                                                  \
    template double segmentation_loss<T>(const Tensor<T>&, std::span<const std::uint8_t>, Tensor<T>*, double);  \
    template Tensor<T> softmax_channels<T>(const Tensor<T>&);                                                    \
    template double regression_loss<T>(const Tensor<T>&, std::span<const float>, RegressionLossKind, double,      \
                                       Tensor<T>*, double, std::span<const std::uint8_t>);
CORTEXNET_INSTANTIATE(float)
CORTEXNET_INSTANTIATE(double)
#undef CORTEXNET_INSTANTIATE

}  // namespace cortexnet
