#pragma once

#include "fixtures.hpp"
#include "oracles.hpp"

#include <numeric>
#include <string>

namespace fixture {

struct GradCheck {
    std::size_t checked = 0;
    std::size_t kinks = 0;
    double max_rel = 0.0;
    std::string worst;
};

// Compares the analytic gradient of objective() with central differences
// for the bias, every trainable output weight and every shape parameter.
// Relative error uses max(|analytic|, |numeric|, floor * max(1, |f|)) as
// denominator: central differences cannot resolve entries much below
// eps * |f| / step, so tiny entries are judged against the objective's scale.
inline GradCheck check_gradient(GradientCase& gc, double step = 1e-5, double floor = 1e-5) {
    using namespace anam;
    gc.opts.grids = gc.grids;
    std::vector<std::size_t> rows(gc.data.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    auto grad = ModelGradient::zeros_like(gc.model);
    objective(gc.model, gc.data, rows, gc.opts, &grad);

    GradCheck out;
    const double base = objective(gc.model, gc.data, rows, gc.opts).value;
    const double denom_floor = floor * std::max(1.0, std::abs(base));
    auto compare = [&](double analytic, const std::function<double(double)>& f, double x0, const std::string& what) {
        const auto fd = oracle::central_difference(f, x0, step, base);
        if (fd.kink) {
            ++out.kinks;
            return;
        }
        ++out.checked;
        const double rel =
            std::abs(analytic - fd.central) / std::max({std::abs(analytic), std::abs(fd.central), denom_floor});
        if (rel > out.max_rel) {
            out.max_rel = rel;
            out.worst = what + " analytic=" + std::to_string(analytic) + " numeric=" + std::to_string(fd.central);
        }
    };
    auto eval = [&] { return objective(gc.model, gc.data, rows, gc.opts).value; };

    AnamModel& m = gc.model;
    const double b0 = m.bias;
    compare(grad.bias, [&](double v) { m.bias = v; const double r = eval(); m.bias = b0; return r; }, b0, "bias");
    for (std::size_t t = 0; t < m.terms().size(); ++t) {
        auto& term = m.terms()[t];
        if (term.weight_trainable) {
            const double w0 = term.weight;
            compare(grad.weight[t], [&](double v) { term.weight = v; const double r = eval(); term.weight = w0; return r; },
                    w0, m.term_name(t) + " weight");
        }
        auto params = term.flat_params();
        for (std::size_t k = 0; k < params.size(); ++k) {
            const double p0 = params[k];
            compare(grad.shape[t][k],
                    [&](double v) {
                        params[k] = v;
                        term.set_flat_params(params);
                        const double r = eval();
                        params[k] = p0;
                        term.set_flat_params(params);
                        return r;
                    },
                    p0, m.term_name(t) + " param " + std::to_string(k));
        }
    }
    return out;
}

}  // namespace fixture
