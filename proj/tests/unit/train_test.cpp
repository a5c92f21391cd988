#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cortexnet/common/error.hpp"
#include "cortexnet/nets/checkpoint.hpp"
#include "cortexnet/phantom/phantom.hpp"
#include "cortexnet/train/trainer.hpp"
#include "test_util.hpp"

using namespace cortexnet;

namespace {

TrainingSubject sphere_subject(std::uint64_t seed, std::size_t n = 32, double radius = 6.0, double t = 1.5) {
    PhantomSpec spec;
    spec.grid_dims = {n, n, n};
    spec.outer_semi_axes = {radius, radius, radius};
    spec.shell_thickness = t;
    auto ph = generate_phantom(spec, seed);
    return {"s" + std::to_string(seed), ph.image, ph.labels, ph.thickness};
}

NetworkConfig tiny() {
    NetworkConfig c;
    c.levels = 2;
    c.base_channels = 4;
    c.regression_hidden = 8;
    return c;
}

TrainConfig quick(std::uint64_t seed) {
    TrainConfig t;
    t.epochs = 2;
    t.batch_size = 2;
    t.patches_per_subject = 4;
    t.patch_size = 16;
    t.learning_rate = 3e-3;
    t.seed = seed;
    return t;
}

}  // namespace

TEST(Sampler, ClassBalance) {
    const auto s = sphere_subject(1);
    for (std::size_t n : {12u, 7u, 1u}) {
        Rng rng = make_rng({n});
        const auto patches = sample_class_balanced_patches(s, n, 16, rng);
        ASSERT_EQ(patches.size(), n);
        std::size_t cortex = 0;
        for (const auto& p : patches) {
            EXPECT_EQ(s.labels.at(p.center[0], p.center[1], p.center[2]) == 1, p.cortex_centered);
            cortex += p.cortex_centered;
        }
        EXPECT_EQ(cortex, (n + 1) / 2);
    }
}

TEST(Sampler, PatchesAreAlignedViewsOfTheSubject) {
    const auto s = sphere_subject(2);
    Rng rng = make_rng({2});
    for (const auto& p : sample_class_balanced_patches(s, 12, 16, rng)) {
        for (int a = 0; a < 3; ++a) {
            EXPECT_GE(p.origin[a], 0);
            EXPECT_LE(p.origin[a] + 16, 32);
            // The centre lies inside the patch, as close to the middle as the clamp allows.
            EXPECT_LE(p.origin[a], static_cast<std::int64_t>(p.center[a]));
            EXPECT_GT(p.origin[a] + 16, static_cast<std::int64_t>(p.center[a]));
        }
        Rng spot = make_rng({3});
        for (int k = 0; k < 50; ++k) {
            const auto x = static_cast<std::size_t>(16 * uniform01(spot)), y = static_cast<std::size_t>(16 * uniform01(spot)),
                       z = static_cast<std::size_t>(16 * uniform01(spot));
            const std::size_t sx = p.origin[0] + x, sy = p.origin[1] + y, sz = p.origin[2] + z;
            const std::size_t i = x + 16 * (y + 16 * z);
            EXPECT_EQ(p.image.at(0, z, y, x), s.image.at(sx, sy, sz));
            EXPECT_EQ(p.labels[i], s.labels.at(sx, sy, sz));
            EXPECT_EQ(p.metric[i], s.metric.at(sx, sy, sz));
            EXPECT_EQ(p.mask[i], s.metric.mask[s.metric.index(sx, sy, sz)]);
        }
    }
}

TEST(Sampler, SmallVolumesAreZeroPaddedSymmetrically) {
    auto s = sphere_subject(3, 32);
    TrainingSubject small{"small", Volume({10, 12, 16}, s.image.spacing, 0.7f), LabelVolume({10, 12, 16}, s.image.spacing),
                          MetricVolume({10, 12, 16}, s.image.spacing)};
    small.labels.at(4, 5, 6) = 1;
    Rng rng = make_rng({4});
    const auto patches = sample_class_balanced_patches(small, 6, 16, rng);
    for (const auto& p : patches) {
        EXPECT_EQ(p.origin[0], -3);
        EXPECT_EQ(p.origin[1], -2);
        EXPECT_EQ(p.origin[2], 0);
        EXPECT_EQ(p.image.at(0, 0, 0, 0), 0.0f);
        EXPECT_EQ(p.image.at(0, 0, 2, 3), 0.7f);
        EXPECT_EQ(p.image.at(0, 15, 13, 12), 0.7f);
        EXPECT_EQ(p.image.at(0, 15, 14, 13), 0.0f);
    }
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(patches[k].center, (std::array<std::size_t, 3>{4, 5, 6}));
}

TEST(Sampler, EmptyCortexIsAnError) {
    auto s = sphere_subject(4);
    std::fill(s.labels.data.begin(), s.labels.data.end(), 0);
    Rng rng = make_rng({1});
    EXPECT_THROW(sample_class_balanced_patches(s, 12, 16, rng), InvariantError);
}

TEST(Sampler, CortexCentredPatchesAreEnriched) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto s = sphere_subject(seed, 48, 9.0, 2.0);
        const double global = static_cast<double>(s.labels.count_label(1)) / static_cast<double>(s.labels.size());
        Rng rng = make_rng({seed, 5});
        std::size_t cortex = 0, total = 0;
        for (const auto& p : sample_class_balanced_patches(s, 12, 16, rng)) {
            if (!p.cortex_centered) continue;
            for (auto l : p.labels) cortex += l == 1;
            total += p.labels.size();
        }
        EXPECT_GT(static_cast<double>(cortex) / static_cast<double>(total), global);
    }
}

TEST(TrainConfigJson, RoundTripAndStrictKeys) {
    TrainConfig c = quick(5);
    c.loss = RegressionLossKind::Huber;
    c.target = TargetMetric::Curvature;
    const nlohmann::json j = c;
    const auto back = j.get<TrainConfig>();
    EXPECT_EQ(nlohmann::json(back), j);
    EXPECT_THROW(nlohmann::json({{"epoch", 3}}).get<TrainConfig>(), ConfigError);
    EXPECT_THROW(nlohmann::json({{"loss", "l1"}}).get<TrainConfig>(), ConfigError);
    c.learning_rate = -1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Adam, MatchesHandComputedFirstStep) {
    ParameterLayout layout;
    layout.add("w", {2}, InitKind::Zero);
    ModelParameters p(layout), g(layout);
    p[0].values = {1.0f, -1.0f};
    g[0].values = {0.5f, -2.0f};
    Adam adam(layout);
    adam.step(p, g, 0.1);
    // Bias-corrected first step moves each weight by lr * sign(g).
    EXPECT_NEAR(p[0].values[0], 0.9f, 1e-6f);
    EXPECT_NEAR(p[0].values[1], -0.9f, 1e-6f);
    adam.step(p, g, 0.0);
    EXPECT_NEAR(p[0].values[0], 0.9f, 1e-6f);
}

TEST(Training, ZeroLearningRateLeavesParametersUnchanged) {
    const std::vector<TrainingSubject> train_set{sphere_subject(1)}, val_set{sphere_subject(2)};
    TrainConfig c = quick(6);
    c.epochs = 1;
    c.learning_rate = 0.0;
    const auto r = train(ModelKind::UNet, tiny(), c, train_set, val_set, cortexnet::testing::scratch_dir("lr0"));
    const auto init = initial_parameters(ModelKind::UNet, tiny(), c);
    ASSERT_EQ(r.final_params.size(), init.size());
    for (std::size_t i = 0; i < init.size(); ++i) EXPECT_EQ(r.final_params[i].values, init[i].values);
    EXPECT_EQ(r.step_losses.size(), 2u);
}

TEST(Training, SingleSubjectOverfitReducesLoss) {
    const auto s = sphere_subject(7);
    TrainConfig c = quick(7);
    c.learning_rate = 1e-2;
    Trainer trainer(ModelKind::UNet, tiny(), c, initial_parameters(ModelKind::UNet, tiny(), c));
    Rng rng = make_rng({7});
    const auto batch = sample_class_balanced_patches(s, 4, 16, rng);
    const double first = trainer.step(batch, c.learning_rate).total;
    double last = first;
    for (int i = 1; i < 200; ++i) last = trainer.step(batch, c.learning_rate).total;
    EXPECT_LE(last, 0.1 * first) << "first " << first << " last " << last;
}

TEST(Training, SameSeedGivesIdenticalArtifacts) {
    const std::vector<TrainingSubject> train_set{sphere_subject(1), sphere_subject(3)}, val_set{sphere_subject(2)};
    const auto dir = cortexnet::testing::scratch_dir("determinism");
    const auto a = train(ModelKind::UNetDropBlock, tiny(), quick(8), train_set, val_set, dir / "a");
    const auto b = train(ModelKind::UNetDropBlock, tiny(), quick(8), train_set, val_set, dir / "b");
    EXPECT_EQ(a.checkpoint.filename(), "UNetDropBlock.ckpt");
    EXPECT_EQ(cortexnet::testing::read_bytes(a.checkpoint), cortexnet::testing::read_bytes(b.checkpoint));
    EXPECT_EQ(cortexnet::testing::read_bytes(a.log), cortexnet::testing::read_bytes(b.log));
    const auto c = train(ModelKind::UNetDropBlock, tiny(), quick(9), train_set, val_set, dir / "c");
    EXPECT_NE(cortexnet::testing::read_bytes(a.checkpoint), cortexnet::testing::read_bytes(c.checkpoint));
}

TEST(Training, CheckpointHoldsBestValidationEpoch) {
    const std::vector<TrainingSubject> train_set{sphere_subject(1)}, val_set{sphere_subject(2)};
    TrainConfig c = quick(10);
    c.epochs = 4;
    const auto r = train(ModelKind::UNet, tiny(), c, train_set, val_set, cortexnet::testing::scratch_dir("best"));
    ASSERT_EQ(r.epochs.size(), 4u);
    double best = 1e300;
    int best_epoch = 0;
    for (const auto& e : r.epochs)
        if (e.val.total < best) best = e.val.total, best_epoch = e.epoch;
    EXPECT_EQ(r.best_epoch, best_epoch);
    EXPECT_EQ(r.best_val_loss, best);
    const auto ckpt = load_checkpoint(r.checkpoint);
    EXPECT_EQ(ckpt.label, "UNetMSE");
    EXPECT_EQ(ckpt.metadata["epoch"], best_epoch);
    const auto log = cortexnet::testing::read_bytes(r.log);
    const std::string text(log.begin(), log.end());
    EXPECT_EQ(text.rfind("epoch,step,train_loss,val_loss,seg_loss,reg_loss,kl_sum\n", 0), 0u);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST(Training, DivergenceKeepsLastGoodCheckpoint) {
    auto bad = sphere_subject(1);
    std::fill(bad.image.data.begin(), bad.image.data.end(), std::numeric_limits<float>::infinity());
    const auto dir = cortexnet::testing::scratch_dir("diverge");
    EXPECT_THROW(train(ModelKind::UNet, tiny(), quick(11), {bad}, {sphere_subject(2)}, dir), DivergenceError);
    const auto ckpt = load_checkpoint(dir / "last_good.ckpt");
    const auto init = initial_parameters(ModelKind::UNet, tiny(), quick(11));
    for (std::size_t i = 0; i < init.size(); ++i) EXPECT_EQ(ckpt.params[i].values, init[i].values);

    TrainConfig c = quick(11);
    Trainer trainer(ModelKind::UNet, tiny(), c, init);
    Rng rng = make_rng({1});
    const auto patches = sample_class_balanced_patches(bad, 2, 16, rng);
    EXPECT_THROW(trainer.step(patches, 1e-3), DivergenceError);
    EXPECT_EQ(trainer.params()[0].values, init[0].values);
}

TEST(Training, PhiSegKeepsKlNonNegative) {
    const std::vector<TrainingSubject> train_set{sphere_subject(1)}, val_set{sphere_subject(2)};
    NetworkConfig net = tiny();
    net.latent.num_levels = 2;
    const auto r = train(ModelKind::PHiSeg, net, quick(12), train_set, val_set, cortexnet::testing::scratch_dir("phiseg"));
    EXPECT_GE(r.min_kl, -1e-9);
    EXPECT_EQ(r.checkpoint.filename(), "PHiSeg.ckpt");
    for (const auto& e : r.epochs) EXPECT_GE(e.train.kl_sum, 0.0);
}

TEST(Training, RequiresBothSplits) {
    EXPECT_THROW(train(ModelKind::UNet, tiny(), quick(1), {}, {sphere_subject(2)}, cortexnet::testing::scratch_dir("e")),
                 InvariantError);
    EXPECT_THROW(train(ModelKind::UNet, tiny(), quick(1), {sphere_subject(2)}, {}, cortexnet::testing::scratch_dir("e")),
                 InvariantError);
}
