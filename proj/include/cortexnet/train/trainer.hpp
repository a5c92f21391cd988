#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cortexnet/nets/losses.hpp"
#include "cortexnet/nets/model.hpp"
#include "cortexnet/train/adam.hpp"
#include "cortexnet/train/sampler.hpp"

namespace cortexnet {

struct TrainConfig {
    int epochs = 10;
    int batch_size = 4;
    int patches_per_subject = 12;
    std::size_t patch_size = 64;
    double learning_rate = 1e-3;
    double lr_decay = 1.0;  ///< learning rate multiplier applied after every epoch
    AdamConfig adam;
    RegressionLossKind loss = RegressionLossKind::MSE;
    double huber_delta = 1.0;
    double lambda = 1.0;  ///< regression weight
    double beta = 1.0;    ///< KL weight (PHiSeg)
    TargetMetric target = TargetMetric::Thickness;
    bool masked_regression = false;  ///< average the regression loss over the cortex mask only
    std::uint64_t seed = 0;

    /// Throws ConfigError on non-positive counts or a negative learning rate.
    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Strict: unknown keys raise ConfigError; missing keys keep defaults.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct LossBreakdown {
    double total = 0.0;
    double seg = 0.0;
    double reg = 0.0;
    double kl_sum = 0.0;
    double min_kl = std::numeric_limits<double>::infinity();  ///< smallest KL term seen
};

/// Owns the parameters, optimiser state and model of one training run.
class Trainer {
public:
    Trainer(ModelKind kind, const NetworkConfig& net, const TrainConfig& cfg, ModelParameters init);

    /// One optimiser update on the mean loss of `batch`. Returns the batch
    /// mean losses evaluated before the update. Throws DivergenceError on a
    /// non-finite loss or gradient, leaving the parameters untouched.
    LossBreakdown step(std::span<const PatchSample> batch, double learning_rate);
    /// Mean losses over `patches` without updating; uses a fixed RNG stream.
    LossBreakdown evaluate(std::span<const PatchSample> patches);

    const ModelParameters& params() const { return params_; }
    Model<float>& model() { return model_; }
    std::uint64_t steps() const { return steps_; }

private:
    LossBreakdown patch_loss(const PatchSample& s, Rng& rng, ModelParameters* grads, double scale);

    TrainConfig cfg_;
    Model<float> model_;
    ModelParameters params_;
    ModelParameters grads_;
    Adam adam_;
    std::uint64_t steps_ = 0;
};

struct EpochRecord {
    int epoch = 0;
    std::uint64_t step = 0;  ///< optimiser steps taken so far
    LossBreakdown train;
    LossBreakdown val;
};

struct TrainResult {
    std::filesystem::path checkpoint;  ///< best-validation checkpoint
    std::filesystem::path log;
    int best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<EpochRecord> epochs;
    std::vector<double> step_losses;
    double min_kl = std::numeric_limits<double>::infinity();
    ModelParameters final_params;
};

/// Initial parameters of a training run (seeded by cfg.seed).
ModelParameters initial_parameters(ModelKind kind, const NetworkConfig& net, const TrainConfig& cfg);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains from an initialisation seeded by cfg.seed and writes
/// `<label>.ckpt` (best validation loss) and `loss_log.csv` under out_dir.
/// On divergence writes `last_good.ckpt` and rethrows DivergenceError.
TrainResult train(ModelKind kind, const NetworkConfig& net, const TrainConfig& cfg,
                  const std::vector<TrainingSubject>& train_subjects, const std::vector<TrainingSubject>& val_subjects,
                  const std::filesystem::path& out_dir, const EpochCallback& on_epoch = {});

/// As above, loading the train and val splits of a manifest.
TrainResult train(ModelKind kind, const NetworkConfig& net, const TrainConfig& cfg,
                  const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                  const EpochCallback& on_epoch = {});

}  // namespace cortexnet
