#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cortexnet/nets/tensor.hpp"

namespace cortexnet {

enum class RegressionLossKind { MSE, Huber };

std::string to_string(RegressionLossKind k);
RegressionLossKind parse_regression_loss(const std::string& s);  ///< "mse" | "huber"

double huber(double e, double delta);
double huber_derivative(double e, double delta);

/// Mean over voxels of -log softmax(logits)[label]. `logits` is K x D x H x W
/// and `labels` holds one class index per voxel. When `dlogits` is given it
/// receives d(loss)/d(logits) scaled by `grad_scale`.
template <typename T>
double segmentation_loss(const Tensor<T>& logits, std::span<const std::uint8_t> labels, Tensor<T>* dlogits = nullptr,
                         double grad_scale = 1.0);

/// Softmax over the channel axis.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits);

/// Mean of e^2 (MSE) or huber(e) over all voxels, e = pred - target. With a
/// non-empty `mask` the mean runs over masked voxels only.
template <typename T>
double regression_loss(const Tensor<T>& pred, std::span<const float> target, RegressionLossKind kind,
                       double delta = 1.0, Tensor<T>* dpred = nullptr, double grad_scale = 1.0,
                       std::span<const std::uint8_t> mask = {});

double total_loss(double seg_loss, double reg_loss, double lambda = 1.0);

/// seg + lambda * reg + beta * sum(kl). Throws InvariantError on a KL term
/// below -1e-9.
double elbo_loss(double seg_loss, double reg_loss, const std::vector<double>& kl_terms, double beta = 1.0,
                 double lambda = 1.0);

/// KL(N(mu_q, s_q^2) || N(mu_p, s_p^2)) for one element, given log-sigmas.
double kl_diag_gaussian(double mu_q, double log_sigma_q, double mu_p, double log_sigma_p);

}  // namespace cortexnet
