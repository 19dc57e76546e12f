#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "wnnrec/baselines.hpp"

using namespace wnnrec;

namespace {

BitCode random_bits(std::mt19937_64& rng, std::size_t n)
{
    BitCode c(n);
    for (std::size_t i = 0; i < n; ++i) {
        c.set(i, rng() & 1);
    }
    return c;
}

std::vector<TrainingPair> random_history(std::mt19937_64& rng, std::size_t n)
{
    std::vector<TrainingPair> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({random_bits(rng, 26), Rating::from_halves(1 + static_cast<int>(rng() % 10))});
    }
    return out;
}

} // namespace

TEST(DenseNet, ZeroNetOutputsOneHalf)
{
    DenseNet net(26, 32, 10);
    for (const double y : net.forward(BitCode(26))) {
        EXPECT_DOUBLE_EQ(y, 0.5);
    }
    EXPECT_NEAR(net.loss(BitCode(26), BitCode(10)), 10.0 * std::log(2.0), 1e-12);
    // every y = 0.5 thresholds to 1, so the decoded rating is the maximum
    EXPECT_EQ(net_predict(net, BitCode(26)).value(), 5.0);
}

TEST(DenseNet, HandComputedTwoTwoOne)
{
    DenseNet net(2, 2, 1);
    net.w1(0, 0) = 1.0;
    net.w1(0, 1) = -1.0;
    net.w1(1, 0) = 0.5;
    net.w1(1, 1) = 2.0;
    net.b1(0) = 0.0;
    net.b1(1) = -1.0;
    net.w2(0, 0) = 2.0;
    net.w2(0, 1) = -3.0;
    net.b2(0) = 0.5;
    // h = (s(1), s(-0.5)); z = 0.5 + 2 h0 - 3 h1 = 0.82949515...
    const auto y = net.forward(BitCode{1, 0});
    ASSERT_EQ(y.size(), 1u);
    EXPECT_NEAR(y[0], 0.6962481715484523, 1e-12);
    EXPECT_NEAR(net.loss(BitCode{1, 0}, BitCode{1}), -std::log(0.6962481715484523), 1e-12);
    EXPECT_NEAR(net.loss(BitCode{1, 0}, BitCode{0}), -std::log(1.0 - 0.6962481715484523), 1e-12);
}

TEST(DenseNet, GradientMatchesCentralDifferences)
{
    std::mt19937_64 rng(101);
    const double h = 1e-5;
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t in = 2 + rng() % 8;
        const std::size_t hid = 1 + rng() % 6;
        const std::size_t out = 1 + rng() % 4;
        DenseNet net = init_net(in, out, NetParams{.hidden = hid, .init_range = 1.5}, rng());
        const BitCode x = random_bits(rng, in);
        const BitCode t = random_bits(rng, out);
        const auto g = net.gradient(x, t);
        auto theta = net.parameters();
        for (std::size_t p = 0; p < theta.size(); ++p) {
            const double saved = theta[p];
            theta[p] = saved + h;
            net.set_parameters(theta);
            const double up = net.loss(x, t);
            theta[p] = saved - h;
            net.set_parameters(theta);
            const double down = net.loss(x, t);
            theta[p] = saved;
            net.set_parameters(theta);
            const double fd = (up - down) / (2.0 * h);
            const double scale = std::max(std::abs(fd) + std::abs(g[p]), 1e-6);
            EXPECT_LT(std::abs(fd - g[p]) / scale, 1e-4) << "trial " << trial << " param " << p;
        }
    }
}

TEST(DenseNet, OutputBiasGradientIsPredictionMinusTarget)
{
    std::mt19937_64 rng(7);
    const DenseNet net = init_net(26, 10, NetParams{}, 3);
    const BitCode x = random_bits(rng, 26);
    const BitCode t = random_bits(rng, 10);
    const auto y = net.forward(x);
    const auto g = net.gradient(x, t);
    const std::size_t b2_offset = g.size() - 10;
    for (std::size_t o = 0; o < 10; ++o) {
        EXPECT_NEAR(g[b2_offset + o], y[o] - (t[o] ? 1.0 : 0.0), 1e-12);
    }
}

TEST(DenseNet, GradientAccumulatesAdditively)
{
    std::mt19937_64 rng(8);
    const DenseNet net = init_net(26, 10, NetParams{}, 4);
    const BitCode x1 = random_bits(rng, 26);
    const BitCode x2 = random_bits(rng, 26);
    const BitCode t1 = random_bits(rng, 10);
    const BitCode t2 = random_bits(rng, 10);
    std::vector<double> both(net.parameter_count(), 0.0);
    net.accumulate_gradient(x1, t1, both);
    net.accumulate_gradient(x2, t2, both);
    const auto g1 = net.gradient(x1, t1);
    const auto g2 = net.gradient(x2, t2);
    for (std::size_t p = 0; p < both.size(); ++p) {
        EXPECT_NEAR(both[p], g1[p] + g2[p], 1e-12);
    }
}

TEST(DenseNet, WidthMismatches)
{
    DenseNet net(4, 3, 2);
    EXPECT_THROW((void)net.forward(BitCode(5)), DomainError);
    EXPECT_THROW((void)net.loss(BitCode(4), BitCode(3)), DomainError);
    EXPECT_THROW(DenseNet(0, 3, 2), DomainError);
}

TEST(NetTraining, MeanLossDecreases)
{
    std::mt19937_64 rng(9);
    const auto history = random_history(rng, 8);
    const NetParams params;
    const DenseNet start = init_net(26, 10, params, 42);
    const DenseNet trained = net_train_user(history, params, 42);
    EXPECT_LT(mean_loss(trained, history), mean_loss(start, history));
}

TEST(NetTraining, SinglePairIsLearned)
{
    std::mt19937_64 rng(10);
    const BitCode x = random_bits(rng, 26);
    const std::vector<TrainingPair> history{{x, Rating::from_value(3.5)}};
    const DenseNet net = net_train_user(history, NetParams{.learning_rate = 0.5, .epochs = 2000}, 1);
    const auto y = net.forward(x);
    const BitCode t = encode_rating(Rating::from_value(3.5));
    for (std::size_t j = 0; j < 10; ++j) {
        EXPECT_NEAR(y[j], t[j] ? 1.0 : 0.0, 0.1) << j;
    }
    EXPECT_EQ(net_predict(net, x).value(), 3.5);
}

TEST(NetTraining, DeterministicPerSeed)
{
    std::mt19937_64 rng(11);
    const auto history = random_history(rng, 5);
    EXPECT_EQ(net_train_user(history, NetParams{}, 5), net_train_user(history, NetParams{}, 5));
    EXPECT_FALSE(net_train_user(history, NetParams{}, 5) == net_train_user(history, NetParams{}, 6));
    EXPECT_THROW(net_train_user(std::vector<TrainingPair>{}, NetParams{}, 1), DomainError);
}

TEST(MatrixFactorization, ConstantRatingsReproduced)
{
    std::vector<RatingTriple> data;
    for (std::uint32_t u = 0; u < 20; ++u) {
        for (std::uint32_t i = 0; i < 30; i += 1 + u % 3) {
            data.push_back({u, i, 4.0});
        }
    }
    const MFModel m = mf_fit(data, MFParams{}, 1);
    EXPECT_DOUBLE_EQ(m.global_mean(), 4.0);
    EXPECT_LT(m.rmse(data), 0.01);
    for (const auto& t : data) {
        EXPECT_EQ(m.predict(t.user, t.item).value(), 4.0);
    }
}

TEST(MatrixFactorization, TrainingRmseDecreases)
{
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> user_taste(40);
    std::vector<double> item_taste(60);
    for (auto& x : user_taste) {
        x = g(rng);
    }
    for (auto& x : item_taste) {
        x = g(rng);
    }
    std::vector<RatingTriple> data;
    for (std::uint32_t u = 0; u < 40; ++u) {
        for (std::uint32_t i = 0; i < 60; ++i) {
            if (rng() % 3 == 0) {
                data.push_back({u, i, round_to_half(3.0 + user_taste[u] * item_taste[i] + 0.3 * g(rng))});
            }
        }
    }
    const MFModel m = mf_fit(data, MFParams{}, 2);
    ASSERT_EQ(m.rmse_history().size(), 31u);
    EXPECT_LT(m.rmse_history().back(), 0.8 * m.rmse_history().front());
    EXPECT_DOUBLE_EQ(m.rmse_history().back(), m.rmse(data));
}

TEST(MatrixFactorization, DeterministicPerSeed)
{
    const std::vector<RatingTriple> data{{1, 1, 3.0}, {1, 2, 4.0}, {2, 1, 2.5}, {2, 3, 5.0}};
    EXPECT_EQ(mf_fit(data, MFParams{}, 9), mf_fit(data, MFParams{}, 9));
    EXPECT_THROW(mf_fit(std::vector<RatingTriple>{}, MFParams{}, 9), DomainError);
}

TEST(MatrixFactorization, HandSetParameters)
{
    MFModel m;
    m.set_global_mean(3.0);
    m.add_user(7, 0.5, {0.5, 0.5});
    m.add_item(9, -0.25, {0.25, 0.25});
    // 3 + 0.5 - 0.25 + (0.125 + 0.125)
    EXPECT_DOUBLE_EQ(m.predict_raw(7, 9), 3.5);
    EXPECT_EQ(mf_predict(m, 7, 9).value(), 3.5);
    // unknown ids fall back to the known terms only
    EXPECT_DOUBLE_EQ(m.predict_raw(100, 200), 3.0);
    EXPECT_DOUBLE_EQ(m.predict_raw(7, 200), 3.5);
    EXPECT_DOUBLE_EQ(m.predict_raw(100, 9), 2.75);
    EXPECT_EQ(mf_predict(m, 100, 9).value(), 3.0);
}

TEST(MatrixFactorization, MonotoneInUserBiasAndClamped)
{
    MFModel m;
    m.set_global_mean(3.0);
    const auto u = m.add_user(1, 0.0, {0.1});
    m.add_item(2, 0.0, {0.2});
    double prev = m.predict_raw(1, 2);
    for (int step = 0; step < 40; ++step) {
        m.user_bias(u) += 0.1;
        const double now = m.predict_raw(1, 2);
        EXPECT_GE(now, prev);
        prev = now;
    }
    EXPECT_DOUBLE_EQ(prev, 5.0);
    m.user_bias(u) = -10.0;
    EXPECT_DOUBLE_EQ(m.predict_raw(1, 2), 0.5);
}
