#include <fstream>

#include <gtest/gtest.h>

#include "cortexnet/common/error.hpp"
#include "cortexnet/nets/checkpoint.hpp"
#include "cortexnet/nets/model.hpp"
#include "test_util.hpp"

using namespace cortexnet;

namespace {

Checkpoint make_checkpoint(ModelKind kind, const NetworkConfig& cfg) {
    Checkpoint c;
    c.kind = kind;
    c.config = cfg;
    c.label = checkpoint_label(kind, RegressionLossKind::MSE);
    c.params = init_parameters(Model<float>(kind, cfg).layout(), 3);
    c.metadata = {{"target_metric", "thickness"}};
    return c;
}

NetworkConfig small_config() {
    NetworkConfig c;
    c.base_channels = 2;
    c.regression_hidden = 4;
    return c;
}

}  // namespace

TEST(Checkpoint, LabelsFollowModelAndLoss) {
    EXPECT_EQ(checkpoint_label(ModelKind::UNet, RegressionLossKind::MSE), "UNetMSE");
    EXPECT_EQ(checkpoint_label(ModelKind::UNet, RegressionLossKind::Huber), "UNetHuber");
    EXPECT_EQ(checkpoint_label(ModelKind::UNetDropBlock, RegressionLossKind::MSE), "UNetDropBlock");
    EXPECT_EQ(checkpoint_label(ModelKind::PHiSeg, RegressionLossKind::MSE), "PHiSeg");
}

TEST(Checkpoint, RoundTripsAndIsByteDeterministic) {
    const auto dir = cortexnet::testing::scratch_dir("ckpt");
    for (ModelKind kind : {ModelKind::UNet, ModelKind::UNetDropBlock, ModelKind::PHiSeg}) {
        const Checkpoint c = make_checkpoint(kind, small_config());
        save_checkpoint(dir / "a.ckpt", c);
        save_checkpoint(dir / "b.ckpt", c);
        EXPECT_EQ(cortexnet::testing::read_bytes(dir / "a.ckpt"), cortexnet::testing::read_bytes(dir / "b.ckpt"));
        const Checkpoint r = load_checkpoint(dir / "a.ckpt", kind, small_config());
        EXPECT_EQ(r.label, c.label);
        EXPECT_EQ(r.metadata, c.metadata);
        ASSERT_EQ(r.params.size(), c.params.size());
        for (std::size_t i = 0; i < r.params.size(); ++i) {
            EXPECT_EQ(r.params[i].name, c.params[i].name);
            EXPECT_EQ(r.params[i].values, c.params[i].values);
        }
    }
}

TEST(Checkpoint, RejectsMismatchAndCorruption) {
    const auto dir = cortexnet::testing::scratch_dir("ckpt");
    save_checkpoint(dir / "c.ckpt", make_checkpoint(ModelKind::UNet, small_config()));
    NetworkConfig other = small_config();
    other.base_channels = 3;
    EXPECT_THROW(load_checkpoint(dir / "c.ckpt", ModelKind::UNet, other), ConfigError);
    EXPECT_THROW(load_checkpoint(dir / "c.ckpt", ModelKind::PHiSeg, small_config()), ConfigError);

    Checkpoint wrong = make_checkpoint(ModelKind::UNet, small_config());
    wrong.params[0].shape[0] += 1;
    std::size_t count = 1;
    for (auto s : wrong.params[0].shape) count *= s;
    wrong.params[0].values.resize(count);
    save_checkpoint(dir / "w.ckpt", wrong);
    EXPECT_THROW(load_checkpoint(dir / "w.ckpt"), ShapeError);

    const auto bytes = cortexnet::testing::read_bytes(dir / "c.ckpt");
    std::ofstream(dir / "t.ckpt", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 4));
    EXPECT_THROW(load_checkpoint(dir / "t.ckpt"), FormatError);
    std::ofstream(dir / "x.ckpt") << "not a checkpoint";
    EXPECT_THROW(load_checkpoint(dir / "x.ckpt"), FormatError);
    EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), IoError);
}
