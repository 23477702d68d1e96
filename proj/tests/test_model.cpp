#include <gtest/gtest.h>

#include <random>

#include "unlearn/model.hpp"

using unlearn::ModelConfig;
using unlearn::ParamVector;
using unlearn::Tensor;

TEST(ModelConfig, ParamCountAndValidation) {
    EXPECT_EQ((ModelConfig{{2, 3, 2}, 1.0, 0}.param_count()), 17u);
    EXPECT_THROW((ModelConfig{{2}, 1.0, 0}.validate()), std::invalid_argument);
    EXPECT_THROW((ModelConfig{{2, 0, 2}, 1.0, 0}.validate()), std::invalid_argument);
    EXPECT_THROW((ModelConfig{{2, 2}, 0.0, 0}.validate()), std::invalid_argument);
}

TEST(ModelConfig, JsonRoundTrip) {
    const ModelConfig cfg{{8, 32, 4}, 0.5, 42};
    const nlohmann::json j = cfg;
    EXPECT_EQ(j.at("activation"), "relu");
    EXPECT_EQ(j.get<ModelConfig>(), cfg);
}

TEST(InitParams, DeterministicBoundedZeroBias) {
    const ModelConfig cfg{{2, 3, 2}, 1.0, 5};
    const auto a = unlearn::init_params(cfg);
    const auto b = unlearn::init_params(cfg);
    EXPECT_EQ(a, b);
    ASSERT_EQ(a.size(), 17u);
    for (const auto& layer : unlearn::layer_layout(cfg)) {
        const double s = 1.0 / std::sqrt(static_cast<double>(layer.in));
        for (std::size_t i = 0; i < layer.in * layer.out; ++i) {
            EXPECT_LE(std::abs(a[layer.weight_offset + i]), s);
        }
        for (std::size_t i = 0; i < layer.out; ++i) EXPECT_EQ(a[layer.bias_offset + i], 0.0);
    }
    EXPECT_NE(a, unlearn::init_params(ModelConfig{{2, 3, 2}, 1.0, 6}));
}

TEST(ForwardLogits, ZeroParamsGiveZeroLogits) {
    const ModelConfig cfg{{3, 4, 2}, 1.0, 0};
    const ParamVector zero(cfg.param_count());
    const auto z = unlearn::forward_logits(zero.span(), cfg, Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(ForwardLogits, SingleLayerIdentityReturnsInput) {
    const ModelConfig cfg{{2, 2}, 1.0, 0};
    const ParamVector theta(std::vector<double>{1, 0, 0, 1, 0, 0});
    const auto x = Tensor::matrix(2, 2, {0.5, -1.5, 2, 3});
    EXPECT_EQ(unlearn::forward_logits(theta.span(), cfg, x), x);
}

TEST(ForwardLogits, RowPermutationPermutesOutput) {
    const ModelConfig cfg{{3, 5, 4}, 1.0, 7};
    const auto theta = unlearn::init_params(cfg);
    const auto x = Tensor::matrix(3, 3, {1, 2, 3, -1, 0, 4, 0.5, 0.5, -2});
    const auto xp = Tensor::matrix(3, 3, {0.5, 0.5, -2, 1, 2, 3, -1, 0, 4});
    const auto z = unlearn::forward_logits(theta.span(), cfg, x);
    const auto zp = unlearn::forward_logits(theta.span(), cfg, xp);
    const std::size_t perm[3] = {2, 0, 1};
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(zp.at(r, c), z.at(perm[r], c));
    }
}

TEST(ForwardLogits, RejectsShapeMismatch) {
    const ModelConfig cfg{{3, 2}, 1.0, 0};
    const auto theta = unlearn::init_params(cfg);
    EXPECT_THROW(unlearn::forward_logits(theta.span(), cfg, Tensor::matrix(1, 2, {1, 2})),
                 std::invalid_argument);
    const ParamVector short_theta(3);
    EXPECT_THROW(unlearn::forward_logits(short_theta.span(), cfg, Tensor::matrix(1, 3, {1, 2, 3})),
                 std::invalid_argument);
}

TEST(WeightedLoss, UnitWeightsEqualPlainMeanAndDuplicationMatchesWeights) {
    const ModelConfig cfg{{2, 3, 2}, 1.0, 1};
    const auto theta = unlearn::init_params(cfg);
    const auto x = Tensor::matrix(2, 2, {1, -1, 0.3, 2});
    const std::vector<int> y{0, 1};
    const auto plain = unlearn::loss_and_gradient(theta.span(), cfg, x, y);
    const auto ones = unlearn::loss_and_gradient(theta.span(), cfg, x, y, std::vector<double>{1, 1});
    EXPECT_EQ(plain.loss, ones.loss);
    EXPECT_EQ(plain.gradient, ones.gradient);

    // weights [2,0] on (a,b) equal the mean over the batch (a,a)
    const auto weighted = unlearn::loss_and_gradient(theta.span(), cfg, x, y, std::vector<double>{2, 0});
    const auto dup = unlearn::loss_and_gradient(theta.span(), cfg, Tensor::matrix(2, 2, {1, -1, 1, -1}),
                                                std::vector<int>{0, 0});
    EXPECT_NEAR(weighted.loss, dup.loss, 1e-15);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        EXPECT_NEAR(weighted.gradient[i], dup.gradient[i], 1e-15);
    }
}

TEST(WeightedLoss, PerSampleLossesAverageToTapeLoss) {
    const ModelConfig cfg{{2, 4, 3}, 1.0, 3};
    const auto theta = unlearn::init_params(cfg);
    const auto x = Tensor::matrix(3, 2, {1, 2, -1, 0.5, 0, -3});
    const std::vector<int> y{0, 2, 1};
    const auto per = unlearn::per_sample_losses(theta.span(), cfg, x, y);
    const double mean = (per[0] + per[1] + per[2]) / 3.0;
    EXPECT_NEAR(mean, unlearn::loss_and_gradient(theta.span(), cfg, x, y).loss, 1e-14);
}

TEST(PredictLabels, ArgmaxTieBreakAndShiftInvariance) {
    EXPECT_EQ(unlearn::argmax_rows(Tensor::matrix(1, 2, {0.1, 0.9})), std::vector<int>{1});
    EXPECT_EQ(unlearn::argmax_rows(Tensor::matrix(1, 2, {0.5, 0.5})), std::vector<int>{0});
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d(0.0, 1.0);
    std::uniform_real_distribution<double> shift(-100.0, 100.0);
    std::vector<double> z(50 * 5);
    for (double& v : z) v = d(rng);
    auto shifted = z;
    for (std::size_t r = 0; r < 50; ++r) {
        const double s = shift(rng);
        for (std::size_t c = 0; c < 5; ++c) shifted[r * 5 + c] += s;
    }
    EXPECT_EQ(unlearn::argmax_rows(Tensor::matrix(50, 5, z)),
              unlearn::argmax_rows(Tensor::matrix(50, 5, shifted)));
}

TEST(ParamVector, LayoutRoundTripThroughTape) {
    // Gradient of sum(logits) w.r.t. each bias is the batch size: a layout
    // mismatch between tape leaves and the flat vector would misplace it.
    const ModelConfig cfg{{2, 3}, 1.0, 0};
    std::mt19937_64 rng(1);
    std::normal_distribution<double> d(0.0, 1.0);
    ParamVector theta(cfg.param_count());
    for (double& v : theta.values) v = d(rng);
    const auto layout = unlearn::layer_layout(cfg);
    EXPECT_EQ(layout[0].weight_offset, 0u);
    EXPECT_EQ(layout[0].bias_offset, 6u);
    const auto x = Tensor::matrix(1, 2, {0.0, 0.0});
    const auto lg = unlearn::loss_and_gradient(theta.span(), cfg, x, std::vector<int>{1});
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(lg.gradient[i], 0.0);  // x = 0
    const auto p = unlearn::softmax_rows(unlearn::forward_logits(theta.span(), cfg, x));
    EXPECT_NEAR(lg.gradient[6], p.at(0, 0), 1e-15);
    EXPECT_NEAR(lg.gradient[7], p.at(0, 1) - 1.0, 1e-15);
}
