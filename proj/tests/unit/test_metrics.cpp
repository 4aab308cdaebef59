#include "anam/errors.hpp"
#include "anam/metrics.hpp"
#include "anam/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace anam;

TEST(Metrics, Examples) {
    const std::vector<double> y{1, 2};
    const auto perfect = compute_metrics(y, y, DistributionSpec{});
    EXPECT_EQ(perfect.rmse, 0.0);
    EXPECT_EQ(perfect.mae, 0.0);
    const std::vector<double> y2{0, 2}, mu{1, 1};
    DistributionSpec p;
    p.family = Family::poisson;
    const auto unit = compute_metrics(y2, mu, p);
    EXPECT_DOUBLE_EQ(unit.rmse, 1.0);
    EXPECT_DOUBLE_EQ(unit.mae, 1.0);
    const std::vector<double> one{1};
    EXPECT_NEAR(compute_metrics(one, one, DistributionSpec{}).nll, 1.0, 1e-14);
    EXPECT_EQ(compute_metrics(one, one, DistributionSpec{}).n_test, 1u);
}

TEST(Metrics, RmseDominatesMae) {
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> y(20), mu(20);
        for (int i = 0; i < 20; ++i) {
            y[i] = rng.uniform(0.1, 5);
            mu[i] = rng.uniform(0.1, 5);
        }
        const auto r = compute_metrics(y, mu, DistributionSpec{});
        EXPECT_GE(r.rmse, r.mae);
        EXPECT_GE(r.mae, 0.0);
    }
}

TEST(Metrics, ExposureScalesCounts) {
    const std::vector<double> y{1, 0}, mu{2, 4}, e{0.5, 0.25};
    DistributionSpec p;
    p.family = Family::poisson;
    const auto r = compute_metrics(y, mu, p, std::span<const double>(e));
    EXPECT_EQ(r.n_test, 2u);
    EXPECT_TRUE(std::isfinite(r.nll));
    EXPECT_THROW(compute_metrics(y, std::vector<double>{1.0}, p), Error);
}

TEST(Dispersion, Examples) {
    const std::vector<double> y{1, 2, 3};
    EXPECT_EQ(estimate_dispersion(y, y), 0.0);
    Rng rng(2);
    std::vector<double> ys(50000), mus(50000);
    for (std::size_t i = 0; i < ys.size(); ++i) {
        mus[i] = std::exp(rng.uniform(0, 3));
        std::gamma_distribution<double> g(1.0, mus[i]);
        ys[i] = g(rng.engine());
    }
    EXPECT_NEAR(estimate_dispersion(ys, mus), 1.0, 0.05);
    const std::vector<double> a{1, 3}, m{2, 2};
    // Pearson: sum((y - mu)^2 / mu^2) / (n - p).
    EXPECT_DOUBLE_EQ(estimate_dispersion(a, m), 0.25);
    EXPECT_DOUBLE_EQ(estimate_dispersion(a, m, 1.0), 0.5);
}

TEST(Glm, InterceptOnlyClosedForms) {
    const Dataset g({}, {}, {1.0, 2.0, 6.0});
    EXPECT_NEAR(fit_glm(g, DistributionSpec{}).coefficients[0], std::log(3.0), 1e-12);
    const Dataset p({}, {}, {0.0, 2.0, 3.0}, std::vector<double>{1.0, 0.5, 2.0});
    DistributionSpec pd;
    pd.family = Family::poisson;
    const auto fit = fit_glm(p, pd);
    EXPECT_TRUE(fit.uses_offset);
    EXPECT_NEAR(fit.coefficients[0], std::log(5.0 / 3.5), 1e-12);
}

TEST(Glm, RecoversLogLinearSlope) {
    std::vector<double> x, y;
    for (int i = 0; i < 50; ++i) {
        x.push_back(-1.0 + i / 24.5);
        y.push_back(std::exp(0.4 - 1.3 * x.back()));
    }
    const Dataset ds({{"x", ColumnKind::continuous, {}}}, {x}, y);
    const auto fit = fit_glm(ds, DistributionSpec{});
    EXPECT_TRUE(fit.converged);
    EXPECT_NEAR(fit.coefficients[0], 0.4, 1e-6);
    EXPECT_NEAR(fit.coefficients[1], -1.3, 1e-6);
}

TEST(Glm, CategoricalTreatmentCodingAndMonotoneNll) {
    Rng rng(3);
    const std::size_t n = 600;
    std::vector<double> x(n), k(n), y(n);
    const double level_effect[] = {0.0, 0.5, -0.7};
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.uniform(-2, 2);
        k[i] = static_cast<double>(i % 3);
        const double mu = std::exp(0.2 + 0.8 * x[i] + level_effect[i % 3]);
        std::poisson_distribution<int> d(mu);
        y[i] = d(rng.engine());
    }
    const Dataset ds({{"x", ColumnKind::continuous, {}}, {"k", ColumnKind::categorical, {"u", "v", "w"}}}, {x, k}, y);
    DistributionSpec pd;
    pd.family = Family::poisson;
    const auto cols = glm_columns(ds);
    ASSERT_EQ(cols.size(), 3u);
    EXPECT_EQ(cols[1].name, "k=v");
    const auto fit = fit_glm(ds, pd);
    EXPECT_NEAR(fit.coefficients[1], 0.8, 0.1);
    EXPECT_NEAR(fit.coefficients[2], 0.5, 0.2);
    EXPECT_NEAR(fit.coefficients[3], -0.7, 0.2);
    for (std::size_t i = 1; i < fit.nll_trace.size(); ++i) EXPECT_LE(fit.nll_trace[i], fit.nll_trace[i - 1] + 1e-10);
    const auto mu = glm_predict(fit, ds);
    EXPECT_EQ(mu.size(), n);
    EXPECT_TRUE(glm_to_json(fit).contains("coefficients"));
}

TEST(Glm, RankDeficientDesign) {
    const std::vector<double> x{1, 1, 1, 1};
    const Dataset ds({{"x", ColumnKind::continuous, {}}}, {x}, {1, 2, 3, 4});
    EXPECT_THROW(fit_glm(ds, DistributionSpec{}), NumericError);
    GlmOptions o;
    o.ridge = 1e-6;
    EXPECT_NO_THROW(fit_glm(ds, DistributionSpec{}, o));
}

TEST(Metrics, Formatting) {
    MetricsReport r;
    r.nll = 1.5;
    r.rmse = 2;
    r.mae = 1;
    r.n_test = 3;
    const auto csv = format_metrics_csv({{"anam", r}});
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,n_test,distribution,dispersion,nll,rmse,mae");
    EXPECT_NE(format_metrics_table({{"anam", r}}).find("anam"), std::string::npos);
}
