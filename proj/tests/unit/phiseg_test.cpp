#include <gtest/gtest.h>

#include "cortexnet/common/error.hpp"
#include "cortexnet/common/rng.hpp"
#include "cortexnet/nets/model.hpp"

using namespace cortexnet;

namespace {

NetworkConfig small_config() {
    NetworkConfig c;
    c.base_channels = 4;
    c.regression_hidden = 8;
    return c;
}

struct Case {
    Tensor<double> patch;
    std::vector<std::uint8_t> labels;
};

Case random_case(std::size_t n, std::uint64_t seed) {
    Case c{Tensor<double>(1, n, n, n), std::vector<std::uint8_t>(n * n * n)};
    Rng rng = make_rng({seed});
    for (auto& v : c.patch.data) v = uniform01(rng);
    for (auto& l : c.labels) l = uniform01(rng) < 0.3;
    return c;
}

ParameterSet<double> randomised(const ParameterLayout& layout, std::uint64_t seed) {
    auto p = init_parameters(layout, seed).cast<double>();
    Rng rng = make_rng({seed, 9});
    for (auto& e : p.entries())
        for (auto& v : e.values) v += 0.3 * normal01(rng);
    return p;
}

}  // namespace

TEST(PhiSeg, OutputShapesMatchUNetContract) {
    Model<double> model(ModelKind::PHiSeg, small_config());
    const auto p = randomised(model.layout(), 1);
    const auto c = random_case(16, 2);
    Rng rng = make_rng({3});
    const auto out = model.forward_train(p, c.patch, c.labels, rng);
    EXPECT_EQ(out.pred.seg_logits.c, 2u);
    EXPECT_EQ(out.pred.seg_logits.d, 16u);
    EXPECT_EQ(out.pred.metric.c, 1u);
    EXPECT_EQ(out.pred.metric.w, 16u);
    EXPECT_EQ(out.kl_terms.size(), 3u);
    const auto prior = model.forward_infer(p, c.patch, &rng);
    EXPECT_TRUE(prior.seg_logits.same_shape(out.pred.seg_logits));
    EXPECT_TRUE(prior.metric.same_shape(out.pred.metric));
}

TEST(PhiSeg, KlVanishesWhenPosteriorMirrorsPrior) {
    Model<double> model(ModelKind::PHiSeg, small_config());
    auto p = randomised(model.layout(), 4);
    for (auto& e : p.entries()) {
        if (e.name.rfind("posterior.", 0) != 0) continue;
        const auto& src = p[p.index("prior." + e.name.substr(10))];
        if (src.shape == e.shape) {
            e.values = src.values;
            continue;
        }
        // First conv: the posterior sees [image, one-hot label]; zero the label taps.
        const std::size_t cout = e.shape[0], cin = e.shape[1];
        std::fill(e.values.begin(), e.values.end(), 0.0);
        for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t k = 0; k < 27; ++k) e.values[(o * cin) * 27 + k] = src.values[o * 27 + k];
    }
    const auto c = random_case(16, 5);
    Rng rng = make_rng({6});
    const auto out = model.forward_train(p, c.patch, c.labels, rng);
    for (double kl : out.kl_terms) EXPECT_NEAR(kl, 0.0, 1e-12);
}

TEST(PhiSeg, KlTermsNonNegativeOnRandomParameters) {
    Model<double> model(ModelKind::PHiSeg, small_config());
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto p = randomised(model.layout(), 100 + seed);
        const auto c = random_case(8, seed);
        Rng rng = make_rng({seed});
        for (double kl : model.forward_train(p, c.patch, c.labels, rng).kl_terms) EXPECT_GE(kl, -1e-9);
    }
}

TEST(PhiSeg, FixedSeedIsDeterministic) {
    Model<float> model(ModelKind::PHiSeg, small_config());
    const auto p = init_parameters(model.layout(), 7);
    const auto c = random_case(16, 8);
    const auto x = tensor_cast<float>(c.patch);
    Rng a = make_rng({9}), b = make_rng({9}), other = make_rng({10});
    const auto first = model.forward_train(p, x, c.labels, a);
    const auto second = model.forward_train(p, x, c.labels, b);
    EXPECT_EQ(first.pred.metric.data, second.pred.metric.data);
    EXPECT_EQ(first.pred.seg_logits.data, second.pred.seg_logits.data);
    EXPECT_EQ(first.kl_terms, second.kl_terms);
    EXPECT_NE(model.forward_train(p, x, c.labels, other).pred.metric.data, first.pred.metric.data);
}

TEST(PhiSeg, PosteriorModeRequiresLabels) {
    Model<double> model(ModelKind::PHiSeg, small_config());
    const auto p = randomised(model.layout(), 11);
    const auto c = random_case(8, 12);
    Rng rng = make_rng({1});
    EXPECT_THROW(model.forward_train(p, c.patch, {}, rng), ShapeError);
    EXPECT_THROW(model.forward_infer(p, c.patch, nullptr), InvariantError);
    ParameterSet<double> grads(model.layout());
    model.forward_infer(p, c.patch, &rng);
    EXPECT_THROW(model.backward(p, Tensor<double>(2, 8, 8, 8), Tensor<double>(1, 8, 8, 8), 1.0, grads),
                 InvariantError);
}
