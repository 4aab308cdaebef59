#pragma once

// Small random models and datasets shared by unit and acceptance tests.

#include "anam/model.hpp"
#include "anam/rng.hpp"
#include "anam/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace fixture {

// Three continuous features on [-1, 1] and one categorical with three levels.
inline anam::Dataset mixed_dataset(std::size_t n, anam::Rng& rng, bool with_exposure = false) {
    using namespace anam;
    std::vector<Feature> features{{"a", ColumnKind::continuous, {}},
                                  {"b", ColumnKind::continuous, {}},
                                  {"c", ColumnKind::continuous, {}},
                                  {"k", ColumnKind::categorical, {"p", "q", "r"}}};
    std::vector<std::vector<double>> cols(4, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < 3; ++j) cols[j][i] = rng.uniform(-1.0, 1.0);
        cols[3][i] = static_cast<double>(i % 3);
    }
    // Pin the range so calibrators and grids see exactly [-1, 1].
    for (int j = 0; j < 3; ++j) {
        cols[j][0] = -1.0;
        cols[j][1] = 1.0;
    }
    std::vector<double> y(n, 1.0);
    std::optional<std::vector<double>> expo;
    if (with_exposure) {
        expo.emplace(n);
        for (auto& e : *expo) e = rng.uniform(0.2, 1.0);
    }
    return Dataset(features, cols, y, expo);
}

inline int pick(anam::Rng& rng, int lo, int hi) {
    return lo + static_cast<int>(rng.uniform() * (hi - lo + 1));
}

inline anam::Monotonicity random_direction(anam::Rng& rng) {
    const int k = pick(rng, 0, 2);
    return k == 0 ? anam::Monotonicity::none : k == 1 ? anam::Monotonicity::increasing : anam::Monotonicity::decreasing;
}

inline anam::MlpConfig random_mlp(anam::Rng& rng) {
    anam::MlpConfig c;
    c.hidden_layers = pick(rng, 1, 4);
    c.first_hidden_width = pick(rng, 2, 20);
    return c;
}

// Scrambles every parameter away from its initial value. Calibrator outputs
// stay strictly inside their range so no clamp is active.
inline void randomize(anam::AnamModel& m, anam::Rng& rng) {
    using namespace anam;
    m.bias = rng.uniform(-0.3, 0.3);
    for (auto& t : m.terms()) {
        if (t.weight_trainable) t.weight = rng.uniform(0.5, 1.5);
        t.center = rng.uniform(-0.2, 0.2);
        if (auto* ms = std::get_if<MlpShape>(&t.shape())) {
            for (auto& v : ms->net.values()) v = rng.uniform(-0.8, 0.8);
            continue;
        }
        auto& ls = std::get<LatticeShape>(t.shape());
        for (auto& v : ls.lattice.values) v = rng.uniform(-1.0, 1.0);
        for (auto& c : ls.calibrators) {
            if (!c) continue;
            const double top = c->max_output();
            std::vector<double> out;
            for (std::size_t k = 0; k < c->size(); ++k) out.push_back(rng.uniform(0.05 * top, 0.95 * top));
            if (c->monotonic()) std::sort(out.begin(), out.end());
            std::copy(out.begin(), out.end(), c->outputs().begin());
        }
    }
}

struct GradientCase {
    anam::AnamModel model;
    anam::Dataset data;
    anam::ObjectiveOptions opts;
    std::vector<anam::SmoothGrid> grids;
};

// A random model mixing every term kind: MLP and lattice mains, an MLP pair,
// a lattice pair over continuous inputs and one over a categorical input,
// with both penalties active.
inline GradientCase random_gradient_case(std::uint64_t seed) {
    using namespace anam;
    Rng rng(seed, 1001);
    const bool poisson = rng.uniform() < 0.3;
    GradientCase gc;
    gc.data = mixed_dataset(24, rng, poisson);

    DistributionSpec dist;
    dist.family = poisson ? Family::poisson : Family::gamma;
    dist.dispersion = rng.uniform(0.5, 2.0);
    AnamModel m(feature_info(gc.data), dist, poisson);

    TermSpec a;
    a.features = {0};
    a.mlp = random_mlp(rng);
    a.smooth = true;
    TermSpec b;
    b.features = {1};
    b.backend = Backend::lattice;
    b.lattice_vertices = pick(rng, 2, 4);
    b.calibrator_knots = pick(rng, 2, 5);
    b.monotone = {random_direction(rng)};
    b.smooth = rng.uniform() < 0.5;
    TermSpec c;
    c.features = {2};
    c.mlp = random_mlp(rng);
    TermSpec k;
    k.features = {3};
    k.mlp = random_mlp(rng);
    TermSpec ac;
    ac.features = {0, 2};
    ac.mlp = random_mlp(rng);
    TermSpec bc;
    bc.features = {1, 2};
    bc.backend = Backend::lattice;
    bc.lattice_vertices = pick(rng, 2, 4);
    bc.calibrator_knots = pick(rng, 2, 5);
    bc.monotone = {random_direction(rng), random_direction(rng)};
    TermSpec bk;
    bk.features = {1, 3};
    bk.backend = Backend::lattice;
    bk.lattice_vertices = pick(rng, 2, 4);
    bk.calibrator_knots = pick(rng, 2, 4);
    bk.monotone = {random_direction(rng), Monotonicity::none};
    for (const auto& s : {a, b, c, k, ac, bc, bk}) m.add_term(s, gc.data, rng());
    randomize(m, rng);

    // Responses drawn around the model's own mean keep the loss well scaled.
    const auto p = predict_batch(m, gc.data);
    std::vector<double> y(gc.data.rows());
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (poisson) {
            std::poisson_distribution<int> d(p.mu[i]);
            y[i] = d(rng.engine());
        } else {
            std::gamma_distribution<double> d(2.0, p.mu[i] / 2.0);
            y[i] = std::max(d(rng.engine()), 1e-3);
        }
    }
    gc.data = gc.data.with_response(std::move(y));
    gc.model = std::move(m);
    gc.grids = make_smooth_grids(gc.model, 25);
    gc.opts.penalties = true;
    gc.opts.omega_smooth = rng.uniform(1e-4, 1e-2);
    gc.opts.omega_mc = rng.uniform(0.1, 1.0);
    return gc;
}

}  // namespace fixture
