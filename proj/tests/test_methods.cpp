#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <unordered_set>

#include "unlearn/methods.hpp"
#include "unlearn/metrics.hpp"

using unlearn::Checkpoint;
using unlearn::FisherDiagonals;
using unlearn::FisherMode;
using unlearn::Method;
using unlearn::ModelConfig;
using unlearn::UnlearnConfig;

namespace {

struct Fixture {
    ModelConfig model{{4, 12, 3}, 1.0, 3};
    unlearn::Dataset data = unlearn::generate_blobs(3, 80, 3, 4, 0.6);
    unlearn::ForgetSplit split = unlearn::make_random_subset_split(data, 0.1, 0.2, 3);
    unlearn::ParamVector theta0;

    Fixture() {
        const unlearn::TrainConfig t{0.05, 15, 16, unlearn::Schedule::cosine, 0.9, 3};
        std::vector<std::size_t> rows = split.forget;
        rows.insert(rows.end(), split.remain.begin(), split.remain.end());
        theta0 = unlearn::sgd_train(unlearn::init_params(model), model, t, data, rows).params;
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

UnlearnConfig config(Method m) {
    UnlearnConfig u;
    u.method = m;
    u.t_out = 5;
    u.batch_f = 8;
    u.batch_r = 16;
    u.seed = 4;
    u.baseline = {0.02, 2, 16, unlearn::Schedule::constant, 0.0, 0};
    return u;
}

} // namespace

TEST(UnlearnConfig, JsonRoundTripAndValidation) {
    UnlearnConfig u = config(Method::salun);
    u.alpha = 0.3;
    u.fisher_mode = FisherMode::batch_square;
    u.salun_top_percent = 25;
    const nlohmann::json j = u;
    const auto back = j.get<UnlearnConfig>();
    EXPECT_EQ(nlohmann::json(back), j);
    u.alpha = 1.5;
    EXPECT_THROW(u.validate(), std::invalid_argument);
    u = config(Method::ft);
    u.t_out = 0;
    EXPECT_THROW(u.validate(), std::invalid_argument);
    EXPECT_THROW(unlearn::method_from_string("nosuch"), std::invalid_argument);
    for (Method m : {Method::sfr_on, Method::ft, Method::ga, Method::rl, Method::salun, Method::joint}) {
        EXPECT_EQ(unlearn::method_from_string(unlearn::to_string(m)), m);
    }
}

TEST(Fisher, ModesDivergeOnOpposingGradients) {
    unlearn::FisherAccumulator acc(1);
    acc.add(std::vector<double>{2.0});
    acc.add(std::vector<double>{-2.0});
    EXPECT_EQ(acc.result(FisherMode::per_sample_mean), std::vector<double>{4.0});
    EXPECT_EQ(acc.result(FisherMode::batch_square), std::vector<double>{0.0});
    EXPECT_THROW(unlearn::FisherAccumulator(1).result(FisherMode::per_sample_mean),
                 std::invalid_argument);
}

TEST(Fisher, NonnegativeAndZeroAtSaturation) {
    const auto& f = fixture();
    for (FisherMode mode : {FisherMode::per_sample_mean, FisherMode::batch_square}) {
        const auto fd = unlearn::fisher_diagonals(f.theta0.span(), f.model, f.data, f.split, mode);
        for (double v : fd.forget) EXPECT_GE(v, 0.0);
        for (double v : fd.remain) EXPECT_GE(v, 0.0);
    }
    // Saturated correct predictions have (numerically) zero gradient.
    const ModelConfig lin{{1, 2}, 1.0, 0};
    unlearn::Dataset d{unlearn::Tensor::matrix(4, 1, {1, 1, 1, 1}), {0, 0, 0, 0}, 2};
    const unlearn::ForgetSplit s{{0, 1}, {2, 3}, {}, unlearn::SplitMode::random_subset, 0.5, -1};
    const unlearn::ParamVector sat(std::vector<double>{0, 0, 100, -100});
    for (FisherMode mode : {FisherMode::per_sample_mean, FisherMode::batch_square}) {
        const auto fd = unlearn::fisher_diagonals(sat.span(), lin, d, s, mode);
        for (double v : fd.forget) EXPECT_LE(v, 1e-150);
        for (double v : fd.remain) EXPECT_LE(v, 1e-150);
    }
}

TEST(Fisher, SampleCapIsSeededSubsample) {
    const auto& f = fixture();
    const auto a = unlearn::fisher_diagonals(f.theta0.span(), f.model, f.data, f.split,
                                             FisherMode::per_sample_mean, 20, 1);
    const auto b = unlearn::fisher_diagonals(f.theta0.span(), f.model, f.data, f.split,
                                             FisherMode::per_sample_mean, 20, 1);
    const auto c = unlearn::fisher_diagonals(f.theta0.span(), f.model, f.data, f.split,
                                             FisherMode::per_sample_mean, 20, 2);
    EXPECT_EQ(a.remain, b.remain);
    EXPECT_NE(a.remain, c.remain);
    EXPECT_EQ(a.forget, c.forget);
}

TEST(SaliencyMask, HandExampleAndEdgeCases) {
    const FisherDiagonals fd{{4, 1}, {1, 4}};
    EXPECT_EQ(unlearn::saliency_mask(fd, 1.0).bits, (std::vector<double>{1, 0}));
    EXPECT_EQ(unlearn::saliency_mask(fd, 0.0).bits, (std::vector<double>{1, 1}));
    EXPECT_EQ(unlearn::saliency_mask(fd, 1e12).bits, (std::vector<double>{0, 0}));
    EXPECT_THROW(unlearn::saliency_mask(fd, -1.0), std::invalid_argument);
}

TEST(SaliencyMask, MonotoneInGamma) {
    std::mt19937_64 rng(5);
    std::exponential_distribution<double> e(1.0);
    FisherDiagonals fd;
    for (int i = 0; i < 500; ++i) {
        fd.forget.push_back(e(rng));
        fd.remain.push_back(i % 50 == 0 ? 0.0 : e(rng));
    }
    EXPECT_EQ(unlearn::saliency_mask(fd, 0.0).count(), 500u);
    double prev_gamma = 0.0;
    auto prev = unlearn::saliency_mask(fd, prev_gamma);
    for (double g : {0.1, 0.5, 1.0, 2.0, 10.0, 1e3}) {
        const auto m = unlearn::saliency_mask(fd, g);
        for (std::size_t i = 0; i < m.bits.size(); ++i) EXPECT_LE(m.bits[i], prev.bits[i]);
        prev = m;
    }
}

TEST(AdaptiveCoefficients, Examples) {
    const auto eq = unlearn::adaptive_coefficients(std::vector<double>{0.7, 0.7, 0.7}, 0, 10, 2.5);
    for (double v : eq.values) EXPECT_NEAR(v, 1.0, 1e-15);
    const auto end = unlearn::adaptive_coefficients(std::vector<double>{0.1, 2.0}, 10, 10, 1.0);
    for (double v : end.values) EXPECT_EQ(v, 0.0);
    const auto hand = unlearn::adaptive_coefficients(std::vector<double>{1, 2}, 0, 5, 1.0);
    EXPECT_NEAR(hand.values[0], 4.0 / 3.0, 1e-15);
    EXPECT_NEAR(hand.values[1], 2.0 / 3.0, 1e-15);
    EXPECT_THROW(unlearn::adaptive_coefficients(std::vector<double>{1}, 6, 5, 1.0),
                 std::invalid_argument);
}

TEST(AdaptiveCoefficients, SumInvariantOverRandomInputs) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> loss(0.0, 5.0);
    std::uniform_real_distribution<double> lam(0.0, 8.0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t batch = 1 + static_cast<std::size_t>(trial % 40);
        std::vector<double> losses(batch);
        for (double& l : losses) l = trial % 7 == 0 ? 0.0 : loss(rng);
        const std::size_t total = 1 + static_cast<std::size_t>(trial % 13);
        const std::size_t t = static_cast<std::size_t>(trial) % (total + 1);
        const auto c = unlearn::adaptive_coefficients(losses, t, total, lam(rng));
        const double sum = std::accumulate(c.values.begin(), c.values.end(), 0.0);
        const double want = (1.0 - static_cast<double>(t) / static_cast<double>(total)) *
                            static_cast<double>(batch);
        EXPECT_NEAR(sum, want, 1e-9);
        for (double v : c.values) EXPECT_GE(v, 0.0);
    }
}

TEST(AdaptiveCoefficients, LargeTemperatureStaysFinite) {
    const auto c = unlearn::adaptive_coefficients(std::vector<double>{0.0, 1e-9, 3.0}, 0, 4, 60.0);
    double sum = 0.0;
    for (double v : c.values) {
        EXPECT_TRUE(std::isfinite(v));
        sum += v;
    }
    EXPECT_NEAR(sum, 3.0, 1e-9);
}

TEST(SampleBatch, WithAndWithoutReplacement) {
    std::mt19937_64 rng(1);
    const std::vector<std::size_t> pool{4, 8, 15};
    const auto small = unlearn::sample_batch(pool, 10, rng);
    EXPECT_EQ(small.size(), 10u);
    for (std::size_t v : small) EXPECT_TRUE(v == 4 || v == 8 || v == 15);
    std::vector<std::size_t> big(50);
    std::iota(big.begin(), big.end(), std::size_t{100});
    const auto sub = unlearn::sample_batch(big, 20, rng);
    EXPECT_EQ(std::unordered_set<std::size_t>(sub.begin(), sub.end()).size(), 20u);
}

TEST(Relabel, AlwaysDifferentAndDeterministic) {
    std::vector<int> labels(500);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
    const auto a = unlearn::random_relabel(labels, 4, 7);
    EXPECT_EQ(a, unlearn::random_relabel(labels, 4, 7));
    EXPECT_NE(a, unlearn::random_relabel(labels, 4, 8));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        EXPECT_NE(a[i], labels[i]);
        EXPECT_GE(a[i], 0);
        EXPECT_LT(a[i], 4);
    }
    EXPECT_THROW(unlearn::random_relabel(labels, 1, 0), std::invalid_argument);
}

TEST(TopMagnitudeMask, CountsAndTies) {
    const std::vector<double> g{0.5, -3, 1, 1, -1, 0};
    EXPECT_EQ(unlearn::top_magnitude_mask(g, 50).bits, (std::vector<double>{0, 1, 1, 1, 0, 0}));
    EXPECT_EQ(unlearn::top_magnitude_mask(g, 100).count(), 6u);
    EXPECT_EQ(unlearn::top_magnitude_mask(g, 1).bits, (std::vector<double>{0, 1, 0, 0, 0, 0}));
    EXPECT_THROW(unlearn::top_magnitude_mask(g, 0), std::invalid_argument);
}

TEST(SfrOn, AlphaZeroIsIdentity) {
    const auto& f = fixture();
    UnlearnConfig u = config(Method::sfr_on);
    u.alpha = 0.0;
    u.beta_f = 0.5;
    u.beta_r = 0.5;
    u.t_in = 3;
    EXPECT_EQ(unlearn::sfr_on(f.theta0, f.model, f.data, f.split, u).params, f.theta0);
}

TEST(SfrOn, EmptyMaskAndNoRepairIsIdentity) {
    const auto& f = fixture();
    UnlearnConfig u = config(Method::sfr_on);
    u.gamma = 1e300;
    u.t_in = 0;
    u.alpha = 1.0;
    const auto c = unlearn::sfr_on(f.theta0, f.model, f.data, f.split, u);
    EXPECT_EQ(c.params, f.theta0);
    EXPECT_EQ(c.provenance.extra.at("mask_count"), 0);
    EXPECT_EQ(c.provenance.extra.at("forget_batch_losses").size(), u.t_out);
}

TEST(SfrOn, MaskedCoordinatesReceiveNoForgettingUpdate) {
    const auto& f = fixture();
    UnlearnConfig u = config(Method::sfr_on);
    u.t_in = 0;
    u.alpha = 1.0;
    u.t_out = 1;
    u.beta_f = 0.1;
    u.gamma = 1.0;
    const auto fd = unlearn::fisher_diagonals(f.theta0.span(), f.model, f.data, f.split, u.fisher_mode);
    const auto mask = unlearn::saliency_mask(fd, u.gamma);
    ASSERT_GT(mask.count(), 0u);
    ASSERT_LT(mask.count(), mask.bits.size());
    const auto c = unlearn::sfr_on(f.theta0, f.model, f.data, f.split, u);
    std::size_t moved = 0;
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        if (mask.bits[i] == 0.0) {
            EXPECT_EQ(c.params[i], f.theta0[i]);
        } else {
            moved += c.params[i] != f.theta0[i];
        }
    }
    EXPECT_GT(moved, 0u);
}

TEST(SfrOn, ForgetsWhileKeepingRemainAccuracy) {
    const auto& f = fixture();
    UnlearnConfig u = config(Method::sfr_on);
    u.t_out = 30;
    u.alpha = 0.8;
    u.beta_f = 0.5;
    u.beta_r = 0.05;
    u.t_in = 4;
    u.gamma = 0.5;
    const auto c = unlearn::sfr_on(f.theta0, f.model, f.data, f.split, u);
    const double fa0 = unlearn::accuracy(f.theta0.span(), f.model, f.data, f.split.forget);
    const double ra0 = unlearn::accuracy(f.theta0.span(), f.model, f.data, f.split.remain);
    const double fa = unlearn::accuracy(c.params.span(), f.model, f.data, f.split.forget);
    const double ra = unlearn::accuracy(c.params.span(), f.model, f.data, f.split.remain);
    EXPECT_LT(fa, fa0);
    EXPECT_NEAR(ra, ra0, 0.02);
}

TEST(Methods, AllAreDeterministic) {
    const auto& f = fixture();
    for (Method m : {Method::sfr_on, Method::ft, Method::ga, Method::rl, Method::salun, Method::joint}) {
        const auto u = config(m);
        const auto a = unlearn::run_unlearning(f.theta0, f.model, f.data, f.split, u);
        const auto b = unlearn::run_unlearning(f.theta0, f.model, f.data, f.split, u);
        EXPECT_EQ(a.params, b.params) << unlearn::to_string(m);
        EXPECT_EQ(a.provenance.method, unlearn::to_string(m));
        EXPECT_EQ(a.provenance.role, "unlearned");
    }
}

TEST(Ft, ZeroEpochsAndNeverTouchesForget) {
    const auto& f = fixture();
    UnlearnConfig u = config(Method::ft);
    u.baseline.epochs = 0;
    EXPECT_EQ(unlearn::ft_unlearn(f.theta0, f.model, f.data, f.split, u).params, f.theta0);
    u = config(Method::ft);
    const std::unordered_set<std::size_t> forget(f.split.forget.begin(), f.split.forget.end());
    std::size_t touched = 0;
    unlearn::ft_unlearn(f.theta0, f.model, f.data, f.split, u, [&](std::span<const std::size_t> b) {
        for (std::size_t r : b) touched += forget.contains(r);
    });
    EXPECT_EQ(touched, 0u);
}

TEST(Ft, FullBatchRemainLossNonIncreasingOnConvexToy) {
    const ModelConfig lin{{4, 3}, 1.0, 1};
    const auto data = unlearn::generate_blobs(1, 30, 3, 4, 0.8);
    const auto split = unlearn::make_random_subset_split(data, 0.2, 0.0, 1);
    UnlearnConfig u = config(Method::ft);
    u.baseline = {0.1, 1, split.remain.size(), unlearn::Schedule::constant, 0.0, 0};
    auto theta = unlearn::init_params(lin);
    const auto x = data.gather_features(split.remain);
    const auto y = data.gather_labels(split.remain);
    double prev = unlearn::loss_and_gradient(theta.span(), lin, x, y).loss;
    for (int e = 0; e < 20; ++e) {
        theta = unlearn::ft_unlearn(theta, lin, data, split, u).params;
        const double now = unlearn::loss_and_gradient(theta.span(), lin, x, y).loss;
        EXPECT_LE(now, prev + 1e-12);
        prev = now;
    }
}

TEST(Ga, IncreasesForgettingLossAndDegenerateCases) {
    const auto& f = fixture();
    UnlearnConfig u = config(Method::ga);
    u.baseline = {1e-3, 1, 4, unlearn::Schedule::constant, 0.0, 0};
    const auto x = f.data.gather_features(f.split.forget);
    const auto y = f.data.gather_labels(f.split.forget);
    const double before = unlearn::loss_and_gradient(f.theta0.span(), f.model, x, y).loss;
    const auto c = unlearn::ga_unlearn(f.theta0, f.model, f.data, f.split, u);
    EXPECT_GE(unlearn::loss_and_gradient(c.params.span(), f.model, x, y).loss, before);
    u.baseline.lr = 0.0;
    EXPECT_EQ(unlearn::ga_unlearn(f.theta0, f.model, f.data, f.split, u).params, f.theta0);
    u.baseline = {1e-3, 0, 4, unlearn::Schedule::constant, 0.0, 0};
    EXPECT_EQ(unlearn::ga_unlearn(f.theta0, f.model, f.data, f.split, u).params, f.theta0);
}

TEST(Rl, LowersForgetAccuracy) {
    const auto& f = fixture();
    UnlearnConfig u = config(Method::rl);
    u.baseline = {0.05, 5, 16, unlearn::Schedule::constant, 0.9, 0};
    const auto c = unlearn::rl_unlearn(f.theta0, f.model, f.data, f.split, u);
    EXPECT_LT(unlearn::accuracy(c.params.span(), f.model, f.data, f.split.forget),
              unlearn::accuracy(f.theta0.span(), f.model, f.data, f.split.forget));
}

TEST(Salun, FullMaskEqualsRlAndMaskedCoordinatesAreFrozen) {
    const auto& f = fixture();
    UnlearnConfig u = config(Method::salun);
    u.baseline = {0.05, 3, 16, unlearn::Schedule::constant, 0.9, 0};
    u.salun_top_percent = 100;
    UnlearnConfig r = u;
    r.method = Method::rl;
    EXPECT_EQ(unlearn::salun_unlearn(f.theta0, f.model, f.data, f.split, u).params,
              unlearn::rl_unlearn(f.theta0, f.model, f.data, f.split, r).params);

    u.salun_top_percent = 30;
    const auto c = unlearn::salun_unlearn(f.theta0, f.model, f.data, f.split, u);
    const auto g = unlearn::loss_and_gradient(f.theta0.span(), f.model,
                                              f.data.gather_features(f.split.forget),
                                              f.data.gather_labels(f.split.forget))
                       .gradient;
    const auto mask = unlearn::top_magnitude_mask(g.span(), 30);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        if (mask.bits[i] == 0.0) EXPECT_EQ(c.params[i], f.theta0[i]);
    }
    u.baseline = {0.1, 8, 16, unlearn::Schedule::constant, 0.9, 0};
    const auto strong = unlearn::salun_unlearn(f.theta0, f.model, f.data, f.split, u);
    EXPECT_LT(unlearn::accuracy(strong.params.span(), f.model, f.data, f.split.forget),
              unlearn::accuracy(f.theta0.span(), f.model, f.data, f.split.forget));
}

TEST(Joint, DegenerateCases) {
    const auto& f = fixture();
    const std::vector<std::size_t> fb(f.split.forget.begin(), f.split.forget.begin() + 5);
    const std::vector<std::size_t> rb(f.split.remain.begin(), f.split.remain.begin() + 9);
    EXPECT_EQ(unlearn::joint_step(f.theta0.span(), f.model, f.data, fb, rb, 0.0, 1.0), f.theta0);
    // Remain weight 0 is plain gradient ascent on the forgetting batch.
    const auto step = unlearn::joint_step(f.theta0.span(), f.model, f.data, fb, rb, 0.01, 0.0);
    const auto g = unlearn::loss_and_gradient(f.theta0.span(), f.model, f.data.gather_features(fb),
                                              f.data.gather_labels(fb))
                       .gradient;
    for (std::size_t i = 0; i < step.size(); ++i) EXPECT_EQ(step[i], f.theta0[i] + 0.01 * g[i]);

    UnlearnConfig u = config(Method::joint);
    u.baseline.lr = 0.0;
    EXPECT_EQ(unlearn::joint_unlearn(f.theta0, f.model, f.data, f.split, u).params, f.theta0);
}
