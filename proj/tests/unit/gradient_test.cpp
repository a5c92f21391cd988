#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "cortexnet/nets/losses.hpp"
#include "cortexnet/nets/model.hpp"
#include "gradcheck.hpp"

using namespace cortexnet;
using cortexnet::testing::GradLoss;

class ModelGradient : public ::testing::TestWithParam<GradLoss> {};

TEST_P(ModelGradient, MatchesCentralDifferences) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto r = cortexnet::testing::check_model_gradients(GetParam(), seed);
        EXPECT_LE(r.parameters, 500u);
        EXPECT_EQ(r.unresolved_kinks, 0u);
        EXPECT_EQ(r.checked, r.parameters);
        EXPECT_LE(r.vector_rel_error, 1e-4) << "seed " << seed << ", worst element " << r.worst << " at "
                                            << r.max_rel_error;
    }
}

INSTANTIATE_TEST_SUITE_P(Losses, ModelGradient,
                         ::testing::Values(GradLoss::CrossEntropy, GradLoss::MSE, GradLoss::Huber, GradLoss::ELBO),
                         [](const auto& info) {
                             std::string n = cortexnet::testing::to_string(info.param);
                             n.erase(std::remove(n.begin(), n.end(), '-'), n.end());
                             return n;
                         });

TEST(TinyNetwork, StaysWithinParameterBudget) {
    const auto cfg = cortexnet::testing::tiny_network_config();
    EXPECT_EQ(Model<double>(ModelKind::UNet, cfg).layout().total_count(), 254u);
    EXPECT_LE(Model<double>(ModelKind::PHiSeg, cfg).layout().total_count(), 500u);
}

TEST(HuberLoss, IsContinuouslyDifferentiableAtDelta) {
    for (double delta : {0.5, 1.0, 2.5}) {
        for (double sign : {-1.0, 1.0}) {
            const double e = sign * delta;
            const double below = e - sign * 1e-9, above = e + sign * 1e-9;
            EXPECT_NEAR(huber(below, delta), huber(above, delta), 1e-6);
            EXPECT_NEAR(huber_derivative(below, delta), huber_derivative(above, delta), 1e-6);
            const double h = 1e-7;
            const double left = (huber(e, delta) - huber(e - h, delta)) / h;
            const double right = (huber(e + h, delta) - huber(e, delta)) / h;
            EXPECT_NEAR(left, right, 1e-6);
            EXPECT_DOUBLE_EQ(huber(e, delta), 0.5 * e * e);
        }
    }
}
