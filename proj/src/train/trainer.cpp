#include "cortexnet/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "cortexnet/common/error.hpp"
#include "cortexnet/common/json_util.hpp"
#include "cortexnet/common/parallel.hpp"
#include "cortexnet/nets/checkpoint.hpp"

namespace cortexnet {

namespace {

constexpr std::uint64_t kSampleStream = 2;
constexpr std::uint64_t kShuffleStream = 3;
constexpr std::uint64_t kStepStream = 4;
constexpr std::uint64_t kValSampleStream = 5;
constexpr std::uint64_t kValForwardStream = 6;
constexpr std::uint64_t kInitStream = 7;

void add_into(LossBreakdown& acc, const LossBreakdown& x, double w) {
    acc.total += w * x.total;
    acc.seg += w * x.seg;
    acc.reg += w * x.reg;
    acc.kl_sum += w * x.kl_sum;
    acc.min_kl = std::min(acc.min_kl, x.min_kl);
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (patches_per_subject < 1) throw ConfigError("train.patches_per_subject must be >= 1");
    if (patch_size == 0) throw ConfigError("train.patch_size must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate must be >= 0");
    if (!(lr_decay > 0.0)) throw ConfigError("train.lr_decay must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
        throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
    if (!(adam.epsilon > 0.0)) throw ConfigError("train.epsilon must be positive");
    if (!(huber_delta > 0.0)) throw ConfigError("train.huber_delta must be positive");
    if (!(lambda >= 0.0) || !(beta >= 0.0)) throw ConfigError("train.lambda and train.beta must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"patches_per_subject", c.patches_per_subject},
         {"patch_size", c.patch_size},
         {"learning_rate", c.learning_rate},
         {"lr_decay", c.lr_decay},
         {"beta1", c.adam.beta1},
         {"beta2", c.adam.beta2},
         {"epsilon", c.adam.epsilon},
         {"loss", to_string(c.loss)},
         {"huber_delta", c.huber_delta},
         {"lambda", c.lambda},
         {"beta", c.beta},
         {"target", to_string(c.target)},
         {"masked_regression", c.masked_regression},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    require_known_keys(j,
                       {"epochs", "batch_size", "patches_per_subject", "patch_size", "learning_rate", "lr_decay",
                        "beta1", "beta2", "epsilon", "loss", "huber_delta", "lambda", "beta", "target",
                        "masked_regression", "seed"},
                       "train");
    read_optional(j, "epochs", c.epochs, "train");
    read_optional(j, "batch_size", c.batch_size, "train");
    read_optional(j, "patches_per_subject", c.patches_per_subject, "train");
    read_optional(j, "patch_size", c.patch_size, "train");
    read_optional(j, "learning_rate", c.learning_rate, "train");
    read_optional(j, "lr_decay", c.lr_decay, "train");
    read_optional(j, "beta1", c.adam.beta1, "train");
    read_optional(j, "beta2", c.adam.beta2, "train");
    read_optional(j, "epsilon", c.adam.epsilon, "train");
    std::string loss = to_string(c.loss), target = to_string(c.target);
    read_optional(j, "loss", loss, "train");
    read_optional(j, "target", target, "train");
    c.loss = parse_regression_loss(loss);
    c.target = parse_target_metric(target);
    read_optional(j, "huber_delta", c.huber_delta, "train");
    read_optional(j, "lambda", c.lambda, "train");
    read_optional(j, "beta", c.beta, "train");
    read_optional(j, "masked_regression", c.masked_regression, "train");
    read_optional(j, "seed", c.seed, "train");
}

Trainer::Trainer(ModelKind kind, const NetworkConfig& net, const TrainConfig& cfg, ModelParameters init)
    : cfg_(cfg), model_(kind, net), params_(std::move(init)), grads_(model_.layout()), adam_(model_.layout(), cfg.adam) {
    cfg_.validate();
    params_.check_layout(model_.layout());
}

LossBreakdown Trainer::patch_loss(const PatchSample& s, Rng& rng, ModelParameters* grads, double scale) {
    const auto out = model_.forward_train(params_, s.image, s.labels, rng);
    Tensor<float> dseg, dmetric;
    LossBreakdown l;
    l.seg = segmentation_loss(out.pred.seg_logits, s.labels, grads ? &dseg : nullptr, scale);
    const std::span<const std::uint8_t> mask = cfg_.masked_regression ? std::span<const std::uint8_t>(s.mask)
                                                                      : std::span<const std::uint8_t>();
    l.reg = regression_loss<float>(out.pred.metric, s.metric, cfg_.loss, cfg_.huber_delta, grads ? &dmetric : nullptr,
                                   cfg_.lambda * scale, mask);
    if (model_.kind() == ModelKind::PHiSeg) {
        l.total = elbo_loss(l.seg, l.reg, out.kl_terms, cfg_.beta, cfg_.lambda);
        for (double kl : out.kl_terms) {
            l.kl_sum += kl;
            l.min_kl = std::min(l.min_kl, kl);
        }
    } else {
        l.total = total_loss(l.seg, l.reg, cfg_.lambda);
    }
    if (grads) model_.backward(params_, dseg, dmetric, cfg_.beta * scale, *grads);
    return l;
}

LossBreakdown Trainer::step(std::span<const PatchSample> batch, double learning_rate) {
    if (batch.empty()) throw InvariantError("Trainer::step: empty batch");
    Rng rng = make_rng({cfg_.seed, kStepStream, steps_});
    grads_.set_zero();
    const double scale = 1.0 / static_cast<double>(batch.size());
    LossBreakdown mean;
    for (const auto& s : batch) add_into(mean, patch_loss(s, rng, &grads_, scale), scale);
    if (!std::isfinite(mean.total) || !grads_.all_finite())
        throw DivergenceError("non-finite training loss at step " + std::to_string(steps_ + 1));
    adam_.step(params_, grads_, learning_rate);
    ++steps_;
    return mean;
}

LossBreakdown Trainer::evaluate(std::span<const PatchSample> patches) {
    LossBreakdown mean;
    if (patches.empty()) return mean;
    const double w = 1.0 / static_cast<double>(patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i) {
        Rng rng = make_rng({cfg_.seed, kValForwardStream, i});
        add_into(mean, patch_loss(patches[i], rng, nullptr, 1.0), w);
    }
    return mean;
}

namespace {

std::vector<PatchSample> draw_patches(const std::vector<TrainingSubject>& subjects, const TrainConfig& cfg,
                                      std::uint64_t stream, std::uint64_t epoch) {
    std::vector<std::vector<PatchSample>> per_subject(subjects.size());
    parallel_for(subjects.size(), [&](std::size_t i) {
        Rng rng = make_rng({cfg.seed, stream, epoch, i});
        per_subject[i] = sample_class_balanced_patches(subjects[i], static_cast<std::size_t>(cfg.patches_per_subject),
                                                       cfg.patch_size, rng);
    });
    std::vector<PatchSample> all;
    for (auto& v : per_subject)
        for (auto& s : v) all.push_back(std::move(s));
    return all;
}

nlohmann::json checkpoint_metadata(const TrainConfig& cfg, int epoch, double val_loss) {
    return {{"target_metric", to_string(cfg.target)},
            {"regression_loss", to_string(cfg.loss)},
            {"epoch", epoch},
            {"val_loss", val_loss},
            {"train", cfg}};
}

}  // namespace

ModelParameters initial_parameters(ModelKind kind, const NetworkConfig& net, const TrainConfig& cfg) {
    return init_parameters(Model<float>(kind, net).layout(), make_rng({cfg.seed, kInitStream})());
}

TrainResult train(ModelKind kind, const NetworkConfig& net, const TrainConfig& cfg,
                  const std::vector<TrainingSubject>& train_subjects, const std::vector<TrainingSubject>& val_subjects,
                  const std::filesystem::path& out_dir, const EpochCallback& on_epoch) {
    net.validate();
    cfg.validate();
    if (train_subjects.empty()) throw InvariantError("training split is empty");
    if (val_subjects.empty()) throw InvariantError("validation split is empty");
    if (cfg.patch_size % static_cast<std::size_t>(net.divisor(kind)) != 0)
        throw ConfigError("train.patch_size must be a multiple of " + std::to_string(net.divisor(kind)));
    std::filesystem::create_directories(out_dir);

    const std::string label = checkpoint_label(kind, cfg.loss);
    Trainer trainer(kind, net, cfg, initial_parameters(kind, net, cfg));
    const auto val_patches = draw_patches(val_subjects, cfg, kValSampleStream, 0);

    TrainResult result;
    result.checkpoint = out_dir / (label + ".ckpt");
    result.log = out_dir / "loss_log.csv";
    std::ofstream log(result.log);
    if (!log) throw IoError("cannot write " + result.log.string());
    log << "epoch,step,train_loss,val_loss,seg_loss,reg_loss,kl_sum\n" << std::setprecision(9);

    Checkpoint ckpt{kind, label, net, {}, {}};
    double lr = cfg.learning_rate;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto patches = draw_patches(train_subjects, cfg, kSampleStream, static_cast<std::uint64_t>(epoch));
        Rng shuffle = make_rng({cfg.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)});
        std::shuffle(patches.begin(), patches.end(), shuffle);

        EpochRecord rec;
        rec.epoch = epoch;
        const auto bs = static_cast<std::size_t>(cfg.batch_size);
        const std::size_t batches = (patches.size() + bs - 1) / bs;
        for (std::size_t b = 0; b < patches.size(); b += bs) {
            const std::span<const PatchSample> batch(patches.data() + b, std::min(bs, patches.size() - b));
            LossBreakdown l;
            try {
                l = trainer.step(batch, lr);
            } catch (const DivergenceError& e) {
                ckpt.params = trainer.params();
                ckpt.metadata = checkpoint_metadata(cfg, epoch, std::nan(""));
                save_checkpoint(out_dir / "last_good.ckpt", ckpt);
                throw DivergenceError(std::string(e.what()) + " in epoch " + std::to_string(epoch) +
                                      "; last good checkpoint: " + (out_dir / "last_good.ckpt").string());
            }
            result.step_losses.push_back(l.total);
            add_into(rec.train, l, 1.0 / static_cast<double>(batches));
        }
        rec.step = trainer.steps();
        rec.val = trainer.evaluate(val_patches);
        result.min_kl = std::min({result.min_kl, rec.train.min_kl, rec.val.min_kl});
        if (!std::isfinite(rec.val.total)) throw DivergenceError("non-finite validation loss in epoch " + std::to_string(epoch));

        log << rec.epoch << ',' << rec.step << ',' << rec.train.total << ',' << rec.val.total << ',' << rec.train.seg
            << ',' << rec.train.reg << ',' << rec.train.kl_sum << '\n';
        log.flush();
        if (rec.val.total < result.best_val_loss) {
            result.best_val_loss = rec.val.total;
            result.best_epoch = epoch;
            ckpt.params = trainer.params();
            ckpt.metadata = checkpoint_metadata(cfg, epoch, rec.val.total);
            save_checkpoint(result.checkpoint, ckpt);
        }
        result.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
        lr *= cfg.lr_decay;
    }
    result.final_params = trainer.params();
    return result;
}

TrainResult train(ModelKind kind, const NetworkConfig& net, const TrainConfig& cfg,
                  const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                  const EpochCallback& on_epoch) {
    const auto records = load_manifest(manifest);
    std::vector<TrainingSubject> train_subjects, val_subjects;
    for (const auto& r : filter_split(records, "train")) train_subjects.push_back(load_subject(r, cfg.target));
    for (const auto& r : filter_split(records, "val")) val_subjects.push_back(load_subject(r, cfg.target));
    return train(kind, net, cfg, train_subjects, val_subjects, out_dir, on_epoch);
}

}  // namespace cortexnet
