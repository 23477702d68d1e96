#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "unlearn/autodiff.hpp"
#include "unlearn/model.hpp"

using unlearn::ComputationRecord;
using unlearn::GradientVector;
using unlearn::ParamVector;
using unlearn::Tensor;

namespace {

double root_value(const ComputationRecord& rec) { return rec.value(rec.root()).item(); }

double rel_err(const GradientVector& a, const GradientVector& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

} // namespace

TEST(Affine, IdentityPermutationAndHandSum) {
    struct Case {
        std::vector<double> x, w, b, want;
    };
    const std::vector<Case> cases{
        {{1, 2}, {1, 0, 0, 1}, {0, 0}, {1, 2}},
        {{1, 0}, {0, 1, 1, 0}, {0, 0}, {0, 1}},
        {{1, 1}, {1, 1, 1, 1}, {1, 1}, {3, 3}},
    };
    for (const auto& c : cases) {
        ComputationRecord rec;
        const auto x = rec.constant(Tensor::matrix(1, 2, c.x));
        const auto w = rec.parameter(Tensor::matrix(2, 2, c.w));
        const auto b = rec.parameter(Tensor::vector(c.b));
        const auto y = rec.affine(x, w, b);
        EXPECT_EQ(std::vector<double>(rec.value(y).data().begin(), rec.value(y).data().end()),
                  c.want);
    }
}

TEST(Affine, ShapeMismatchReportsDimensions) {
    ComputationRecord rec;
    const auto x = rec.constant(Tensor::matrix(1, 3, {1, 2, 3}));
    const auto w = rec.parameter(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    const auto b = rec.parameter(Tensor::vector({0, 0}));
    try {
        rec.affine(x, w, b);
        FAIL() << "expected a shape error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
    }
}

TEST(Relu, ForwardAndDeadUnit) {
    ComputationRecord rec;
    const auto x = rec.parameter(Tensor::vector({-1, 0, 2}));
    const auto r = rec.relu(x);
    EXPECT_EQ(rec.value(r), Tensor::vector({0, 0, 2}));
    rec.sum(r);
    const GradientVector g = unlearn::backward(rec);
    EXPECT_EQ(g[0], 0.0);  // x = -1
    EXPECT_EQ(g[1], 0.0);  // subgradient at exactly 0
    EXPECT_EQ(g[2], 1.0);

    ComputationRecord neg;
    const auto n = neg.relu(neg.constant(Tensor::vector({-3, -0.5, -1e-9})));
    for (double v : neg.value(n).data()) EXPECT_EQ(v, 0.0);
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogC) {
    for (int c = 2; c <= 10; ++c) {
        for (int label = 0; label < c; ++label) {
            ComputationRecord rec;
            const auto z = rec.parameter(Tensor::matrix(1, c, std::vector<double>(c, 0.0)));
            const std::vector<int> y{label};
            rec.softmax_cross_entropy(z, y);
            EXPECT_NEAR(root_value(rec), std::log(static_cast<double>(c)), 1e-15);
        }
    }
    ComputationRecord rec;
    rec.softmax_cross_entropy(rec.parameter(Tensor::matrix(1, 4, {0, 0, 0, 0})),
                              std::vector<int>{2});
    EXPECT_NEAR(root_value(rec), 1.386294, 1e-6);
}

TEST(SoftmaxCrossEntropy, ConfidentCorrectLogitGivesNearZero) {
    ComputationRecord rec;
    rec.softmax_cross_entropy(rec.parameter(Tensor::matrix(1, 3, {50, 0, 0})), std::vector<int>{0});
    EXPECT_LT(root_value(rec), 1e-12);
    EXPECT_GE(root_value(rec), 0.0);
}

TEST(SoftmaxCrossEntropy, WeightedMean) {
    ComputationRecord rec;
    const auto z = rec.parameter(Tensor::matrix(2, 2, {0, 0, 0, 0}));
    rec.softmax_cross_entropy(z, std::vector<int>{0, 1}, std::vector<double>{2, 0});
    EXPECT_NEAR(root_value(rec), std::log(2.0), 1e-15);
}

TEST(SoftmaxCrossEntropy, ProbabilityClampCapsLoss) {
    ComputationRecord rec;
    rec.softmax_cross_entropy(rec.parameter(Tensor::matrix(1, 2, {0, 1000})), std::vector<int>{0});
    EXPECT_NEAR(root_value(rec), -std::log(1e-12), 1e-9);
}

TEST(SoftmaxCrossEntropy, RejectsBadLabelsAndWeights) {
    ComputationRecord rec;
    const auto z = rec.parameter(Tensor::matrix(1, 3, {0, 0, 0}));
    EXPECT_THROW(rec.softmax_cross_entropy(z, std::vector<int>{3}), std::invalid_argument);
    EXPECT_THROW(rec.softmax_cross_entropy(z, std::vector<int>{-1}), std::invalid_argument);
    EXPECT_THROW(rec.softmax_cross_entropy(z, std::vector<int>{0}, std::vector<double>{1, 2}),
                 std::invalid_argument);
    EXPECT_THROW(rec.softmax_cross_entropy(
                     z, std::vector<int>{0},
                     std::vector<double>{std::numeric_limits<double>::quiet_NaN()}),
                 std::invalid_argument);
}

TEST(SoftmaxCrossEntropy, AlwaysNonNegative) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> d(0.0, 5.0);
    for (int t = 0; t < 200; ++t) {
        ComputationRecord rec;
        std::vector<double> z(5);
        for (double& v : z) v = d(rng);
        rec.softmax_cross_entropy(rec.parameter(Tensor::matrix(1, 5, z)),
                                  std::vector<int>{t % 5});
        EXPECT_GE(root_value(rec), 0.0);
    }
}

TEST(Backward, SquareAtThree) {
    ComputationRecord rec;
    rec.sum(rec.square(rec.parameter(Tensor::scalar(3.0))));
    const auto g = unlearn::backward(rec);
    ASSERT_EQ(g.size(), 1u);
    EXPECT_EQ(g[0], 6.0);
}

TEST(Backward, SoftmaxGradientOnLogits) {
    ComputationRecord rec;
    rec.softmax_cross_entropy(rec.parameter(Tensor::matrix(1, 4, {0, 0, 0, 0})),
                              std::vector<int>{0});
    const auto g = unlearn::backward(rec);
    const std::vector<double> want{-0.75, 0.25, 0.25, 0.25};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(g[i], want[i], 1e-15);
}

TEST(Backward, RejectsNonScalarRoot) {
    ComputationRecord rec;
    rec.relu(rec.parameter(Tensor::vector({1, 2})));
    EXPECT_THROW(unlearn::backward(rec), std::invalid_argument);
}

TEST(Backward, WeightsAllZeroGiveZeroGradient) {
    const unlearn::ModelConfig cfg{{3, 4, 2}, 1.0, 1};
    const auto theta = unlearn::init_params(cfg);
    const auto x = Tensor::matrix(2, 3, {1, 2, 3, -1, 0, 1});
    const auto lg = unlearn::loss_and_gradient(theta.span(), cfg, x, std::vector<int>{0, 1},
                                               std::vector<double>{0, 0});
    EXPECT_EQ(lg.loss, 0.0);
    for (double v : lg.gradient.values) EXPECT_EQ(v, 0.0);
}

TEST(Backward, MatchesFiniteDifferencesOverTwentySeeds) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const unlearn::ModelConfig cfg{{5, 7, 6, 3}, 1.0, seed};
        ASSERT_LE(cfg.param_count(), 1000u);
        auto theta = unlearn::init_params(cfg);
        std::mt19937_64 rng(seed + 100);
        std::normal_distribution<double> d(0.0, 1.0);
        // Nonzero biases keep pre-activations of rows with an all-dead layer off the kink.
        for (const auto& layer : unlearn::layer_layout(cfg)) {
            for (std::size_t i = 0; i < layer.out; ++i) theta[layer.bias_offset + i] = 0.1 * d(rng);
        }
        std::vector<double> xs(8 * 5);
        for (double& v : xs) v = d(rng);
        const auto x = Tensor::matrix(8, 5, xs);
        std::vector<int> y(8);
        std::vector<double> w(8);
        for (std::size_t i = 0; i < 8; ++i) {
            y[i] = static_cast<int>(i % 3);
            w[i] = 0.5 + 0.1 * static_cast<double>(i);
        }
        const auto lg = unlearn::loss_and_gradient(theta.span(), cfg, x, y, w);
        const auto fd = unlearn::finite_diff_gradient(
            [&](std::span<const double> t) {
                const auto rec = unlearn::weighted_loss(t, cfg, x, y, w);
                return rec.value(rec.root()).item();
            },
            theta.span(), 1e-5);
        EXPECT_LE(rel_err(lg.gradient, fd), 1e-6) << "seed " << seed;
    }
}

TEST(FiniteDiff, SumOfSquaresAndConstant) {
    const std::vector<double> theta{1, 2};
    const auto g = unlearn::finite_diff_gradient(
        [](std::span<const double> t) { return t[0] * t[0] + t[1] * t[1]; }, theta, 1e-5);
    EXPECT_NEAR(g[0], 2.0, 1e-8);
    EXPECT_NEAR(g[1], 4.0, 1e-8);
    const auto z = unlearn::finite_diff_gradient([](std::span<const double>) { return 7.0; },
                                                 theta, 1e-5);
    EXPECT_NEAR(z[0], 0.0, 1e-10);
    EXPECT_NEAR(z[1], 0.0, 1e-10);
}

TEST(FiniteDiff, NonFiniteEvaluationNamesCoordinate) {
    const std::vector<double> theta{1, 2, 3};
    try {
        unlearn::finite_diff_gradient(
            [](std::span<const double> t) { return t[2] > 3.0 ? std::nan("") : 0.0; }, theta,
            1e-5);
        FAIL() << "expected domain_error";
    } catch (const std::domain_error& e) {
        EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
    }
    EXPECT_THROW(unlearn::finite_diff_gradient([](std::span<const double>) { return 0.0; }, theta,
                                               0.0),
                 std::invalid_argument);
}

TEST(HessianVectorProduct, DiagonalQuadraticAndZeroDirection) {
    const auto grad = [](std::span<const double> t) {
        return GradientVector(std::vector<double>{t[0], 2.0 * t[1]});
    };
    const std::vector<double> theta{0.3, -0.7};
    const auto hv = unlearn::hessian_vector_product(grad, theta, std::vector<double>{1, 1}, 1e-5);
    EXPECT_NEAR(hv[0], 1.0, 1e-8);
    EXPECT_NEAR(hv[1], 2.0, 1e-8);
    const auto zero = unlearn::hessian_vector_product(grad, theta, std::vector<double>{0, 0}, 1e-5);
    EXPECT_EQ(zero[0], 0.0);
    EXPECT_EQ(zero[1], 0.0);
}

class MlpHvp : public ::testing::Test {
protected:
    unlearn::ModelConfig cfg{{3, 5, 3}, 1.0, 4};
    ParamVector theta = unlearn::init_params(cfg);
    Tensor x = Tensor::matrix(4, 3, {0.5, -1, 2, 1, 1, -0.3, -2, 0.1, 0.4, 0.7, 0.7, -1.2});
    std::vector<int> y{0, 1, 2, 1};

    unlearn::GradientFunction grad() const {
        return [this](std::span<const double> t) {
            return unlearn::loss_and_gradient(t, cfg, x, y).gradient;
        };
    }

    std::vector<double> random_direction(std::uint64_t seed) const {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> d(0.0, 1.0);
        std::vector<double> v(theta.size());
        for (double& e : v) e = d(rng);
        return v;
    }
};

TEST_F(MlpHvp, IsSymmetric) {
    const auto u = random_direction(1);
    const auto v = random_direction(2);
    const auto hu = unlearn::hessian_vector_product(grad(), theta.span(), u, 1e-5);
    const auto hv = unlearn::hessian_vector_product(grad(), theta.span(), v, 1e-5);
    EXPECT_NEAR(unlearn::vec::dot(v, hu.span()), unlearn::vec::dot(u, hv.span()), 1e-5);
}

TEST_F(MlpHvp, IsLinearInDirection) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto v1 = random_direction(10 + s);
        const auto v2 = random_direction(20 + s);
        const double a = 0.7, b = -1.3;
        std::vector<double> mix(v1.size());
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * v1[i] + b * v2[i];
        const auto h1 = unlearn::hessian_vector_product(grad(), theta.span(), v1, 1e-5);
        const auto h2 = unlearn::hessian_vector_product(grad(), theta.span(), v2, 1e-5);
        const auto hm = unlearn::hessian_vector_product(grad(), theta.span(), mix, 1e-5);
        for (std::size_t i = 0; i < mix.size(); ++i) {
            EXPECT_NEAR(hm[i], a * h1[i] + b * h2[i], 1e-8);
        }
    }
}

TEST(Determinism, RepeatedTapeIsBitIdentical) {
    const unlearn::ModelConfig cfg{{4, 8, 3}, 1.0, 2};
    const auto theta = unlearn::init_params(cfg);
    const auto x = Tensor::matrix(2, 4, {1, 2, 3, 4, -1, -2, 0.5, 0});
    const std::vector<int> y{2, 0};
    const auto a = unlearn::loss_and_gradient(theta.span(), cfg, x, y);
    const auto b = unlearn::loss_and_gradient(theta.span(), cfg, x, y);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.gradient, b.gradient);
}
