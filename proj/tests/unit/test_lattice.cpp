#include "anam/errors.hpp"
#include "anam/lattice.hpp"
#include "anam/rng.hpp"

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

#include <gtest/gtest.h>

using namespace anam;

TEST(Calibrator, MinMaxExamples) {
    const auto c = Calibrator::min_max(-1.0, 1.0, 10);
    EXPECT_DOUBLE_EQ(c.calibrate(0.0).scaled, 4.5);
    EXPECT_EQ(c.calibrate(-1.0).scaled, 0.0);
    EXPECT_EQ(c.calibrate(1.0).scaled, 9.0);
    EXPECT_EQ(c.calibrate(-5.0).scaled, 0.0);
    EXPECT_EQ(c.calibrate(5.0).scaled, 9.0);
    EXPECT_DOUBLE_EQ(c.calibrate(0.2).dscaled_dx, 4.5);
}

TEST(Calibrator, QuantileKnotsAndClamp) {
    std::vector<double> data;
    for (int i = 0; i <= 100; ++i) data.push_back(i * i / 100.0);
    auto c = Calibrator::from_quantiles(data, 5, 8, true);
    ASSERT_EQ(c.size(), 5u);
    EXPECT_EQ(c.knots().front(), 0.0);
    EXPECT_EQ(c.knots().back(), 100.0);
    EXPECT_DOUBLE_EQ(c.knots()[2], 25.0);
    for (std::size_t k = 1; k < c.size(); ++k) EXPECT_GE(c.outputs()[k], c.outputs()[k - 1]);
    c.outputs()[1] = 50.0;
    c.outputs()[2] = -3.0;
    c.project(1000, 1e-15);
    for (double o : c.outputs()) {
        EXPECT_GE(o, 0.0);
        EXPECT_LE(o, 7.0);
    }
    for (std::size_t k = 1; k < c.size(); ++k) EXPECT_GE(c.outputs()[k], c.outputs()[k - 1] - 1e-12);
    const std::vector<double> one{3.0, 3.0};
    EXPECT_NO_THROW(Calibrator::from_quantiles(one, 4, 5, false));
}

TEST(Lattice, EvalExamples) {
    LatticeParams one{{2}, {0.0, 1.0}, {Monotonicity::none}};
    const std::vector<double> half{0.5};
    EXPECT_DOUBLE_EQ(lattice_eval(one, half).value, 0.5);

    LatticeParams two{{2, 2}, {0.0, 1.0, 2.0, 3.0}, {Monotonicity::none, Monotonicity::none}};
    const std::vector<double> mid{0.5, 0.5}, v10{1.0, 0.0};
    EXPECT_DOUBLE_EQ(lattice_eval(two, mid).value, 1.5);
    EXPECT_EQ(lattice_eval(two, v10).value, 1.0);
    EXPECT_EQ(two.vertex(1, 0), 1u);
    EXPECT_EQ(two.vertex(0, 1), 2u);
}

TEST(Lattice, LinearSplineAtKnots) {
    LatticeParams p{{6}, {0.3, -1.0, 2.0, 2.5, 0.0, 7.0}, {Monotonicity::none}};
    for (int k = 0; k < 6; ++k) {
        const std::vector<double> x{static_cast<double>(k)};
        EXPECT_EQ(lattice_eval(p, x).value, p.values[k]);
    }
}

TEST(Lattice, GradientsMatchFiniteDifferences) {
    Rng rng(8);
    for (int c = 0; c < 50; ++c) {
        LatticeParams p{{fixture::pick(rng, 2, 5), fixture::pick(rng, 2, 5)}, {}, {Monotonicity::none, Monotonicity::none}};
        for (int i = 0; i < p.sizes[0] * p.sizes[1]; ++i) p.values.push_back(rng.uniform(-1, 1));
        // Stay strictly inside a cell so differences are exact.
        const std::vector<double> x{std::floor(rng.uniform(0, p.sizes[0] - 1)) + rng.uniform(0.1, 0.9),
                                    std::floor(rng.uniform(0, p.sizes[1] - 1)) + rng.uniform(0.1, 0.9)};
        const auto e = lattice_eval(p, x);
        const double h = 1e-6;
        for (int d = 0; d < 2; ++d) {
            auto xp = x, xm = x;
            xp[d] += h;
            xm[d] -= h;
            const double num = (lattice_eval(p, xp).value - lattice_eval(p, xm).value) / (2 * h);
            EXPECT_LT(std::abs(num - e.dinput[d]), 1e-8 * std::max(1.0, std::abs(num)));
        }
        for (int k = 0; k < e.count; ++k) {
            auto q = p;
            q.values[e.index[k]] += 1.0;
            EXPECT_NEAR(lattice_eval(q, x).value - e.value, e.weight[k], 1e-12);
        }
    }
}

TEST(Lattice, InitRampIsMonotone) {
    const auto p = init_lattice({3, 4}, {Monotonicity::increasing, Monotonicity::decreasing});
    EXPECT_DOUBLE_EQ(p.values[p.vertex(2, 0)], 1.0);
    EXPECT_DOUBLE_EQ(p.values[p.vertex(0, 3)], -1.0);
    EXPECT_EQ(max_violation(p.values, build_constraints(p)), 0.0);
    EXPECT_THROW(init_lattice({1}, {Monotonicity::none}), ConfigError);
}

TEST(Constraints, Counts) {
    EXPECT_EQ(build_constraints(init_lattice({3}, {Monotonicity::increasing})),
              (ConstraintSet{{0, 1}, {1, 2}}));
    EXPECT_EQ(build_constraints(init_lattice({3, 2}, {Monotonicity::increasing, Monotonicity::none})).size(), 4u);
    EXPECT_TRUE(build_constraints(init_lattice({3, 3}, {Monotonicity::none, Monotonicity::none})).empty());
    EXPECT_EQ(build_constraints(init_lattice({2}, {Monotonicity::decreasing})), (ConstraintSet{{1, 0}}));
}

TEST(Dykstra, Examples) {
    std::vector<double> a{0.0, 1.0};
    dykstra_project(a, chain_constraints(2), 10, 1e-12);
    EXPECT_EQ(a, (std::vector<double>{0.0, 1.0}));
    std::vector<double> b{1.0, 0.0};
    dykstra_project(b, chain_constraints(2), 10, 1e-12);
    EXPECT_EQ(b, (std::vector<double>{0.5, 0.5}));
    std::vector<double> c{2.0, 1.0, 0.0};
    dykstra_project(c, chain_constraints(3), 1000, 1e-15);
    for (double v : c) EXPECT_NEAR(v, 1.0, 1e-12);
    EXPECT_THROW(dykstra_project(c, chain_constraints(3), 0, 1e-7), ConfigError);
}

TEST(Dykstra, MatchesQpOracleAndIsIdempotent) {
    Rng rng(13);
    for (int c = 0; c < 100; ++c) {
        LatticeParams p{{fixture::pick(rng, 2, 4), fixture::pick(rng, 2, 4)}, {}, {}};
        do {
            p.directions = {fixture::random_direction(rng), fixture::random_direction(rng)};
        } while (p.directions[0] == Monotonicity::none && p.directions[1] == Monotonicity::none);
        for (int i = 0; i < p.sizes[0] * p.sizes[1]; ++i) p.values.push_back(rng.uniform(-2, 2));
        const auto cs = build_constraints(p);
        const auto exact = oracle::project_qp(p.values, cs);
        auto got = p.values;
        dykstra_project(got, cs, 1000, 1e-15);
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], exact[i], 1e-9);
        EXPECT_LE(max_violation(got, cs), 1e-9);
        auto again = got;
        dykstra_project(again, cs, 1000, 1e-15);
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(again[i], got[i], 1e-12);
    }
}

TEST(Dykstra, ChainsMatchPav) {
    Rng rng(14);
    for (int c = 0; c < 100; ++c) {
        std::vector<double> v(static_cast<std::size_t>(fixture::pick(rng, 2, 10)));
        for (auto& x : v) x = rng.uniform(-2, 2);
        const auto expect = oracle::pav(v);
        dykstra_project(v, chain_constraints(v.size()), 2000, 1e-15);
        for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], expect[i], 1e-9);
    }
}
