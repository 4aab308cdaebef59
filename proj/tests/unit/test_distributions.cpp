#include "anam/distributions.hpp"
#include "anam/errors.hpp"
#include "anam/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

using namespace anam;

namespace {

// log Gamma via the recurrence up to z >= 30, then a 10-term Stirling series.
double log_gamma_oracle(double x) {
    double shift = 0.0;
    double z = x;
    while (z < 30.0) {
        shift += std::log(z);
        z += 1.0;
    }
    static const double b[] = {1.0 / 12, -1.0 / 360, 1.0 / 1260, -1.0 / 1680, 1.0 / 1188,
                               -691.0 / 360360, 1.0 / 156, -3617.0 / 122400, 43867.0 / 244188, -174611.0 / 125400};
    double series = 0.0, zp = z;
    const double z2 = z * z;
    for (double c : b) {
        series += c / zp;
        zp *= z2;
    }
    return (z - 0.5) * std::log(z) - z + 0.5 * std::log(2.0 * M_PI) + series - shift;
}

double fd(const std::function<double(double)>& f, double x, double h) { return (f(x + h) - f(x - h)) / (2 * h); }

}  // namespace

TEST(LogGamma, MatchesSeriesOracle) {
    for (double x = 0.1; x <= 100.0; x += 0.0137) {
        const double want = log_gamma_oracle(x);
        // Relative near the roots at 1 and 2 is meaningless, so mix in an absolute floor.
        EXPECT_NEAR(log_gamma(x), want, 1e-10 * std::max(1.0, std::abs(want))) << x;
    }
}

TEST(LogGamma, KnownValues) {
    EXPECT_NEAR(log_gamma(1.0), 0.0, 1e-14);
    EXPECT_NEAR(log_gamma(2.0), 0.0, 1e-14);
    EXPECT_NEAR(log_gamma(0.5), 0.5 * std::log(M_PI), 1e-14);
    EXPECT_NEAR(log_gamma(11.0), std::log(3628800.0), 1e-12);
    EXPECT_THROW(log_gamma(0.0), Error);
}

TEST(GammaNll, Examples) {
    EXPECT_NEAR(gamma_nll(1, 1, 1).loss, 1.0, 1e-14);
    EXPECT_NEAR(gamma_nll(2, 1, 1).loss, 2.0, 1e-14);
    for (double phi : {0.1, 1.0, 3.0}) EXPECT_NEAR(gamma_nll(2.5, 2.5, phi).dloss_dmu, 0.0, 1e-14);
}

TEST(PoissonNll, Examples) {
    EXPECT_NEAR(poisson_nll(0, 1).loss, 1.0, 1e-14);
    EXPECT_NEAR(poisson_nll(1, 1).loss, 1.0, 1e-14);
    EXPECT_NEAR(poisson_nll(3, 3).dloss_dmu, 0.0, 1e-14);
}

TEST(Nll, DerivativeMatchesFiniteDifferences) {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double mu = std::exp(rng.uniform(-3, 5));
        const double phi = std::exp(rng.uniform(-2, 1));
        const double y = std::exp(rng.uniform(-3, 5));
        const double cnt = std::floor(rng.uniform(0, 20));
        const double h = 1e-5 * mu;
        const auto g = gamma_nll(y, mu, phi);
        const double ng = fd([&](double m) { return gamma_nll(y, m, phi).loss; }, mu, h);
        EXPECT_LT(std::abs(g.dloss_dmu - ng), 1e-6 * std::max(std::abs(ng), 1e-3));
        const auto p = poisson_nll(cnt, mu);
        const double np = fd([&](double m) { return poisson_nll(cnt, m).loss; }, mu, h);
        EXPECT_LT(std::abs(p.dloss_dmu - np), 1e-6 * std::max(std::abs(np), 1e-3));
    }
}

TEST(Nll, MinimizedAtObservation) {
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        const double y = std::round(rng.uniform(1, 30));
        double best_g = 0, best_p = 0, lg = INFINITY, lp = INFINITY;
        for (double mu = 0.5; mu <= 40.0; mu += 0.01) {
            if (gamma_nll(y, mu, 0.7).loss < lg) lg = gamma_nll(y, mu, 0.7).loss, best_g = mu;
            if (poisson_nll(y, mu).loss < lp) lp = poisson_nll(y, mu).loss, best_p = mu;
        }
        EXPECT_NEAR(best_g, y, 0.01);
        EXPECT_NEAR(best_p, y, 0.01);
    }
}

TEST(Link, ClipExamples) {
    EXPECT_EQ(link_apply(Link::log, 0.0), 1.0);
    EXPECT_EQ(link_apply(Link::log, 100.0), 1e30);
    EXPECT_EQ(link_apply(Link::log, -50.0), 1e-7);
}

TEST(Link, InverseRoundTrip) {
    for (double e = -7; e <= 30; e += 0.05) {
        const double mu = std::pow(10.0, e);
        if (mu < 1e-7 || mu > 1e30) continue;
        EXPECT_NEAR(link_apply(Link::log, link_invert(Link::log, mu)), mu, 1e-12 * mu);
    }
}

TEST(DistributionSpec, Validation) {
    DistributionSpec d;
    d.dispersion = 0.0;
    EXPECT_THROW(d.validate(), ConfigError);
    d.family = Family::poisson;
    EXPECT_NO_THROW(d.validate());
    EXPECT_EQ(family_from_string("poisson"), Family::poisson);
    EXPECT_EQ(to_string(Family::gamma), "gamma");
}
