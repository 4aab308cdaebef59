#include "anam/errors.hpp"
#include "anam/mlp.hpp"
#include "anam/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace anam;

TEST(Mlp, TriangleWidths) {
    MlpConfig c;
    c.hidden_layers = 2;
    c.first_hidden_width = 20;
    EXPECT_EQ(c.hidden_widths(), (std::vector<int>{20, 10}));
    c.hidden_layers = 10;
    c.first_hidden_width = 100;
    const auto w = c.hidden_widths();
    EXPECT_EQ(w.front(), 100);
    EXPECT_EQ(w.back(), 10);
    c.hidden_layers = 3;
    c.first_hidden_width = 1;
    EXPECT_EQ(c.hidden_widths(), (std::vector<int>{1, 1, 1}));
    c.hidden_layers = -1;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Mlp, GlorotBoundsAndZeroBiases) {
    MlpConfig c;
    c.input_dim = 4;
    c.hidden_layers = 1;
    c.first_hidden_width = 2;
    c.seed = 9;
    const auto p = init_glorot(c);
    const auto w = p.weight(0);
    ASSERT_EQ(w.rows(), 2);
    ASSERT_EQ(w.cols(), 4);
    for (Eigen::Index i = 0; i < w.size(); ++i) EXPECT_LT(std::abs(w.data()[i]), 1.0);
    for (std::size_t l = 0; l < p.num_layers(); ++l)
        for (Eigen::Index i = 0; i < p.bias(l).size(); ++i) EXPECT_EQ(p.bias(l)[i], 0.0);
    EXPECT_TRUE(init_glorot(c) == p);
    c.seed = 10;
    EXPECT_FALSE(init_glorot(c) == p);
}

TEST(Mlp, ZeroNetworkOutputsBias) {
    MlpParams p({3, 1}, Activation{Activation::Kind::linear, 0.0});
    p.bias(0)[0] = 2.5;
    const std::vector<double> x{1, -4, 7};
    EXPECT_EQ(mlp_eval(p, x), 2.5);
}

TEST(Mlp, IdentityLayer) {
    MlpParams p({1, 1}, Activation{Activation::Kind::linear, 0.0});
    p.weight(0)(0, 0) = 1.0;
    const std::vector<double> x{0.37};
    const auto g = eval_with_grad(p, x, 1.0);
    EXPECT_EQ(g.output, 0.37);
    EXPECT_EQ(g.param_grads.weight(0)(0, 0), 0.37);
    EXPECT_EQ(g.input_grad[0], 1.0);
}

TEST(Mlp, LeakyRelu) {
    const Activation a;
    EXPECT_EQ(a.apply(2.0), 2.0);
    EXPECT_EQ(a.apply(-2.0), -0.02);
    EXPECT_EQ(a.apply(0.0), 0.0);
    EXPECT_NEAR(a.apply(-1e-300), 0.0, 1e-300);
    EXPECT_EQ(a.derivative(0.0), 1.0);
}

TEST(Mlp, BatchedMatchesSingle) {
    MlpConfig c;
    c.input_dim = 3;
    c.hidden_layers = 3;
    c.first_hidden_width = 12;
    c.seed = 4;
    auto p = init_glorot(c);
    Rng rng(2);
    for (auto& v : p.values()) v += rng.uniform(-0.1, 0.1);
    Eigen::MatrixXd in(3, 5);
    for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = rng.uniform(-1, 1);
    Eigen::RowVectorXd out;
    mlp_forward(p, in, out);
    Eigen::RowVectorXd out2;
    mlp_forward(p, in, out2);
    for (int j = 0; j < 5; ++j) {
        const std::vector<double> x{in(0, j), in(1, j), in(2, j)};
        EXPECT_NEAR(out[j], mlp_eval(p, x), 1e-14);
        EXPECT_EQ(out[j], out2[j]);
    }
}

namespace {

// True if any pre-activation changes sign between the two parameter vectors.
bool crosses_kink(const MlpParams& a, const MlpParams& b, const Eigen::MatrixXd& x) {
    MlpCache ca, cb;
    Eigen::RowVectorXd o;
    mlp_forward(a, x, o, &ca);
    mlp_forward(b, x, o, &cb);
    for (std::size_t l = 0; l + 1 < ca.pre.size(); ++l)
        for (Eigen::Index i = 0; i < ca.pre[l].size(); ++i)
            if ((ca.pre[l].data()[i] >= 0.0) != (cb.pre[l].data()[i] >= 0.0)) return true;
    return false;
}

}  // namespace

TEST(Mlp, GradientMatchesFiniteDifferences) {
    Rng rng(21);
    std::size_t checked = 0;
    for (int cfg = 0; cfg < 50; ++cfg) {
        MlpConfig c;
        c.input_dim = 1 + static_cast<int>(rng.uniform() * 3);
        c.hidden_layers = 1 + static_cast<int>(rng.uniform() * 10);
        c.first_hidden_width = 1 + static_cast<int>(rng.uniform() * 100);
        c.seed = static_cast<std::uint64_t>(cfg);
        auto p = init_glorot(c);
        for (std::size_t l = 0; l < p.num_layers(); ++l)
            for (Eigen::Index i = 0; i < p.bias(l).size(); ++i) p.bias(l)[i] = rng.uniform(-0.2, 0.2);
        std::vector<double> x(static_cast<std::size_t>(c.input_dim));
        for (auto& v : x) v = rng.uniform(-1, 1);
        const Eigen::Map<const Eigen::MatrixXd> xm(x.data(), c.input_dim, 1);
        const double upstream = rng.uniform(0.5, 2.0);
        const auto g = eval_with_grad(p, x, upstream);
        const double h = 1e-5;
        for (int s = 0; s < 60; ++s) {
            const auto k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(p.size()));
            auto plus = p, minus = p;
            plus.values()[k] += h;
            minus.values()[k] -= h;
            if (crosses_kink(p, plus, xm) || crosses_kink(p, minus, xm)) continue;
            const double num = upstream * (mlp_eval(plus, x) - mlp_eval(minus, x)) / (2 * h);
            const double ana = g.param_grads.values()[k];
            EXPECT_LT(std::abs(ana - num), 1e-5 * std::max({std::abs(ana), std::abs(num), 1e-5}))
                << "config " << cfg << " param " << k;
            ++checked;
        }
    }
    EXPECT_GT(checked, 2500u);
}
