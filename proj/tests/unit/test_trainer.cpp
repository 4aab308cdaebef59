#include "anam/errors.hpp"
#include "anam/metrics.hpp"
#include "anam/trainer.hpp"

#include "../support/fixtures.hpp"
#include "../support/gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace anam;

namespace {

Dataset one_feature(std::vector<double> x, std::vector<double> y) {
    return Dataset({{"x", ColumnKind::continuous, {}}}, {std::move(x)}, std::move(y));
}

// Lattice main effect whose vertices hold k^2, read through an identity calibrator on [0, 4].
AnamModel square_lattice_model() {
    const auto ds = one_feature({0, 4}, {1, 1});
    AnamModel m(feature_info(ds), DistributionSpec{}, false);
    TermSpec s;
    s.features = {0};
    s.backend = Backend::lattice;
    s.lattice_vertices = 5;
    s.smooth = true;
    LatticeShape shape{init_lattice({5}, {Monotonicity::none}), {Calibrator::min_max(0, 4, 5, false)}};
    shape.lattice.values = {0, 1, 4, 9, 16};
    m.add_term(Term(s, shape));
    return m;
}

std::vector<size_t> all(std::size_t n) {
    std::vector<size_t> r(n);
    std::iota(r.begin(), r.end(), std::size_t{0});
    return r;
}

Dataset gamma_sample(std::size_t n, std::uint64_t seed, double (*f)(double)) {
    Rng rng(seed, 9);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.uniform(-1, 1);
        std::gamma_distribution<double> g(4.0, std::exp(f(x[i])) / 4.0);
        y[i] = g(rng.engine());
    }
    return one_feature(x, y);
}

}  // namespace

TEST(Smoothness, SquareGivesSixOmega) {
    const std::vector<double> sq{0, 1, 4, 9, 16};
    EXPECT_DOUBLE_EQ(second_difference_roughness(sq, 1.0), 6.0);
    const std::vector<double> h_sq{0, 0.01, 0.04, 0.09, 0.16};
    EXPECT_NEAR(second_difference_roughness(h_sq, 0.1), 6.0, 1e-12);
    const auto m = square_lattice_model();
    const auto grids = make_smooth_grids(m, 5);
    ASSERT_EQ(grids.size(), 1u);
    EXPECT_DOUBLE_EQ(grids[0].spacing, 1.0);
    EXPECT_DOUBLE_EQ(smoothness_penalty(m, grids, 0.25), 1.5);
    auto g = ModelGradient::zeros_like(m);
    EXPECT_EQ(smoothness_penalty(m, grids, 0.0, &g), 0.0);
    for (double v : g.shape[0]) EXPECT_EQ(v, 0.0);
}

TEST(Smoothness, LinearShapeIsFree) {
    auto m = square_lattice_model();
    std::get<LatticeShape>(m.terms()[0].shape()).lattice.values = {1, 3, 5, 7, 9};
    EXPECT_NEAR(smoothness_penalty(m, make_smooth_grids(m, 5), 10.0), 0.0, 1e-12);
    SmoothGrid bad{0, {0.0, 1.0, 3.0}, 1.0};
    EXPECT_THROW(term_roughness(m, bad), ConfigError);
}

TEST(MarginalClarity, Examples) {
    Rng rng(1);
    const auto ds = fixture::mixed_dataset(10, rng);
    ModelSpec spec;
    TermSpec a, b, ab;
    a.features = {0};
    b.features = {1};
    ab.features = {0, 1};
    spec.terms = {a, b, ab};
    const auto m = build_model(spec, ds, 1);
    EXPECT_EQ(marginal_clarity_couples(m), (std::vector<std::pair<std::size_t, std::size_t>>{{0, 2}, {1, 2}}));
    EXPECT_EQ(marginal_clarity_penalty(m, {{1, -1}, {3, 4}, {0, 0}}, 1.0), 0.0);
    EXPECT_EQ(marginal_clarity_penalty(m, {{1, -1}, {0, 0}, {1, 1}}, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(marginal_clarity_penalty(m, {{1, 1}, {0, 0}, {1, 1}}, 0.5), 0.5);
}

TEST(Objective, BiasOnlyMatchesInterceptGlm) {
    const auto ds = gamma_sample(300, 2, [](double) { return 0.5; });
    AnamModel m(feature_info(ds), DistributionSpec{}, false);
    const auto y = ds.response();
    m.bias = std::log(std::accumulate(y.begin(), y.end(), 0.0) / y.size());
    const auto r = objective(m, ds, all(ds.rows()), ObjectiveOptions{});
    const Dataset none({}, {}, std::vector<double>(y.begin(), y.end()));
    const auto glm = fit_glm(none, DistributionSpec{});
    const auto metrics = compute_metrics(y, glm_predict(glm, none), DistributionSpec{});
    EXPECT_NEAR(r.value, metrics.nll, 1e-12);
    EXPECT_EQ(r.value, mean_nll(m, ds));
}

TEST(Objective, SmoothComponentIsLinearInOmega) {
    auto gc = fixture::random_gradient_case(3);
    gc.opts.grids = gc.grids;
    const auto rows = all(gc.data.rows());
    const auto r1 = objective(gc.model, gc.data, rows, gc.opts);
    gc.opts.omega_smooth *= 2;
    const auto r2 = objective(gc.model, gc.data, rows, gc.opts);
    EXPECT_NEAR(r2.smooth, 2 * r1.smooth, 1e-12 * r2.smooth);
    EXPECT_EQ(r2.nll, r1.nll);
}

TEST(Objective, GradientOnTwoTermToy) {
    Rng rng(4);
    fixture::GradientCase gc;
    gc.data = fixture::mixed_dataset(30, rng);
    AnamModel m(feature_info(gc.data), DistributionSpec{}, false);
    TermSpec a, b;
    a.features = {0};
    a.mlp.hidden_layers = 1;
    a.mlp.first_hidden_width = 4;
    a.smooth = true;
    b.features = {1};
    b.backend = Backend::lattice;
    b.lattice_vertices = 3;
    b.calibrator_knots = 3;
    m.add_term(a, gc.data, 1);
    m.add_term(b, gc.data, 2);
    fixture::randomize(m, rng);
    std::vector<double> y(30);
    for (auto& v : y) v = rng.uniform(0.2, 3.0);
    gc.data = gc.data.with_response(y);
    gc.model = m;
    gc.grids = make_smooth_grids(m, 25);
    gc.opts.penalties = true;
    gc.opts.omega_smooth = 1e-3;
    const auto r = fixture::check_gradient(gc);
    EXPECT_GE(r.checked, 20u);
    EXPECT_LT(r.max_rel, 1e-4) << r.worst;
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    c.batch_size = 11;
    EXPECT_THROW(c.validate(10), ConfigError);
    c.batch_size = 10;
    EXPECT_NO_THROW(c.validate(10));
    c.learning_rate = 0;
    EXPECT_THROW(c.validate(10), ConfigError);
    c.learning_rate = 1e-3;
    c.patience = 0;
    EXPECT_THROW(c.validate(10), ConfigError);
    EXPECT_EQ(optimizer_from_string("rmsprop"), OptimizerKind::rmsprop);
    EXPECT_THROW(optimizer_from_string("sgd"), ConfigError);
}

TEST(Train, BiasConvergesToLogMean) {
    const auto ds = gamma_sample(400, 5, [](double) { return 1.0; });
    AnamModel m(feature_info(ds), DistributionSpec{}, false);
    TrainConfig c;
    c.learning_rate = 0.05;
    c.batch_size = 400;
    c.max_epochs = 400;
    c.patience = 400;
    const auto r = train(m, ds, ds, c);
    const auto y = ds.response();
    EXPECT_NEAR(r.model.bias, std::log(std::accumulate(y.begin(), y.end(), 0.0) / y.size()), 1e-3);
}

TEST(Train, EarlyStoppingReturnsBestEpoch) {
    const auto tr = one_feature({0, 1, 2, 3}, {1, 1, 1, 1});
    const auto va = one_feature({0, 1}, {0.5, 0.5});
    AnamModel m(feature_info(tr), DistributionSpec{}, false);
    m.bias = std::log(0.5);
    TrainConfig c;
    c.learning_rate = 0.01;
    c.batch_size = 2;
    c.max_epochs = 50;
    c.patience = 1;
    const auto r = train(m, tr, va, c);
    ASSERT_EQ(r.history.size(), 3u);
    EXPECT_EQ(r.reason, StopReason::early_stopped);
    EXPECT_EQ(r.best_epoch, 1);
    EXPECT_LT(r.history[0].val_nll, r.history[1].val_nll);
    EXPECT_LT(r.history[1].val_nll, r.history[2].val_nll);
    EXPECT_EQ(mean_nll(r.model, va), r.history[0].val_nll);
}

TEST(Train, DecreasingLatticeStaysMonotone) {
    const auto ds = gamma_sample(600, 6, [](double x) { return 2.0 * x; });
    ModelSpec spec;
    TermSpec t;
    t.features = {0};
    t.backend = Backend::lattice;
    t.lattice_vertices = 6;
    t.monotone = {Monotonicity::decreasing};
    spec.terms = {t};
    TrainConfig c;
    c.learning_rate = 0.05;
    c.batch_size = 100;
    c.max_epochs = 30;
    const auto r = train(build_model(spec, ds, 1), ds, ds, c);
    std::vector<double> xs(1000), out;
    for (int i = 0; i < 1000; ++i) xs[i] = -1.0 + 2.0 * i / 999.0;
    const std::vector<std::span<const double>> in{xs};
    r.model.term(0).forward(in, out);
    for (int i = 1; i < 1000; ++i) EXPECT_LE(out[i] - out[i - 1], 1e-9);
    EXPECT_LE(r.model.term(0).constraint_violation(), 1e-9);
}

TEST(Train, DeterministicAndPenaltyFreeEquivalence) {
    Rng rng(7);
    auto ds = fixture::mixed_dataset(200, rng);
    std::vector<double> y(200);
    for (std::size_t i = 0; i < 200; ++i) y[i] = std::exp(ds.x(i, 0)) * rng.uniform(0.5, 1.5);
    ds = ds.with_response(y);
    ModelSpec spec;
    TermSpec a, k;
    a.features = {0};
    a.mlp.first_hidden_width = 8;
    k.features = {3};
    spec.terms = {a, k};
    const auto m = build_model(spec, ds, 3);
    TrainConfig c;
    c.learning_rate = 0.01;
    c.batch_size = 32;
    c.max_epochs = 5;
    c.seed = 11;
    const auto r1 = train(m, ds, ds, c);
    const auto r2 = train(m, ds, ds, c);
    EXPECT_EQ(format_history_csv(r1.history), format_history_csv(r2.history));
    EXPECT_TRUE(r1.model == r2.model);
    c.penalties = false;
    const auto r3 = train(m, ds, ds, c);
    EXPECT_EQ(format_history_csv(r1.history), format_history_csv(r3.history));
    EXPECT_EQ(format_history_csv(r1.history).substr(0, 56), "epoch,train_objective,train_nll,val_nll,smooth_pen,mc_pe");
    for (const auto& h : r1.history) EXPECT_GE(h.val_nll, r1.best_val_nll);
}

TEST(Train, SmoothingReducesRoughness) {
    const auto ds = gamma_sample(800, 8, [](double x) { return std::abs(x) * std::sin(8 * x); });
    ModelSpec spec;
    TermSpec a;
    a.features = {0};
    a.smooth = true;
    spec.terms = {a};
    double rough[2];
    for (int i = 0; i < 2; ++i) {
        TrainConfig c;
        c.learning_rate = 0.01;
        c.batch_size = 100;
        c.max_epochs = 15;
        c.omega_smooth = i == 0 ? 0.0 : 10.0;
        const auto r = train(build_model(spec, ds, 4), ds, ds, c);
        rough[i] = term_roughness(r.model, make_smooth_grids(r.model, 1000)[0]);
    }
    EXPECT_LE(rough[1], rough[0]);
}

TEST(Train, RmspropRuns) {
    const auto ds = gamma_sample(200, 9, [](double x) { return x; });
    ModelSpec spec;
    TermSpec a;
    a.features = {0};
    spec.terms = {a};
    TrainConfig c;
    c.optimizer = OptimizerKind::rmsprop;
    c.batch_size = 50;
    c.max_epochs = 3;
    const auto r = train(build_model(spec, ds, 4), ds, ds, c);
    EXPECT_EQ(r.history.size(), 3u);
    EXPECT_TRUE(std::isfinite(r.best_val_nll));
}
