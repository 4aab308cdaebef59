#include "anam/lattice.hpp"

#include "anam/errors.hpp"

#include <algorithm>
#include <cmath>

namespace anam {

std::string to_string(Monotonicity m) {
    switch (m) {
    case Monotonicity::none: return "none";
    case Monotonicity::increasing: return "increasing";
    case Monotonicity::decreasing: return "decreasing";
    }
    return "none";
}

Monotonicity monotonicity_from_string(const std::string& s) {
    if (s == "none") return Monotonicity::none;
    if (s == "increasing" || s == "inc") return Monotonicity::increasing;
    if (s == "decreasing" || s == "dec") return Monotonicity::decreasing;
    throw ConfigError("unknown monotonicity '" + s + "'");
}

// --- calibrator ------------------------------------------------------------

Calibrator::Calibrator(std::vector<double> knots, std::vector<double> outputs, double max_output, bool monotonic)
    : knots_(std::move(knots)), outputs_(std::move(outputs)), max_output_(max_output), monotonic_(monotonic) {
    if (knots_.size() < 2) throw ConfigError("calibrator needs at least two knots");
    if (knots_.size() != outputs_.size()) throw ConfigError("calibrator knot/output count mismatch");
    for (std::size_t i = 1; i < knots_.size(); ++i)
        if (!(knots_[i] > knots_[i - 1])) throw ConfigError("calibrator knots must be strictly increasing");
    if (!(max_output_ > 0.0)) throw ConfigError("calibrator output range must be positive");
}

Calibrator Calibrator::min_max(double lo, double hi, int vertices, bool monotonic) {
    return Calibrator({lo, hi}, {0.0, static_cast<double>(vertices - 1)}, vertices - 1, monotonic);
}

Calibrator Calibrator::from_quantiles(std::span<const double> data, int knots, int vertices, bool monotonic) {
    if (knots < 2) throw ConfigError("calibrator needs at least two knots");
    if (vertices < 2) throw ConfigError("lattice needs at least two vertices per dimension");
    if (data.empty()) throw ConfigError("calibrator needs data to place knots");
    std::vector<double> sorted(data.begin(), data.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> k;
    for (int i = 0; i < knots; ++i) {
        const double pos = static_cast<double>(i) / (knots - 1) * static_cast<double>(sorted.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, sorted.size() - 1);
        const double v = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
        if (k.empty() || v > k.back()) k.push_back(v);
    }
    if (k.size() < 2) k = {k.front() - 0.5, k.front() + 0.5};
    const double lo = k.front(), hi = k.back();
    const double top = vertices - 1;
    std::vector<double> out;
    for (double v : k) out.push_back(std::clamp(top * (v - lo) / (hi - lo), 0.0, top));
    return Calibrator(std::move(k), std::move(out), top, monotonic);
}

Calibrator::Result Calibrator::calibrate(double x) const {
    Result r;
    const std::size_t K = knots_.size();
    if (x <= knots_.front()) {
        r.scaled = outputs_.front();
        r.index = {0, 0};
        r.weight = {1.0, 0.0};
        r.count = 1;
    } else if (x >= knots_.back()) {
        r.scaled = outputs_.back();
        r.index = {static_cast<int>(K - 1), 0};
        r.weight = {1.0, 0.0};
        r.count = 1;
    } else {
        const auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
        const auto i = static_cast<std::size_t>(it - knots_.begin()) - 1;
        const double width = knots_[i + 1] - knots_[i];
        const double t = (x - knots_[i]) / width;
        r.scaled = (1.0 - t) * outputs_[i] + t * outputs_[i + 1];
        r.index = {static_cast<int>(i), static_cast<int>(i + 1)};
        r.weight = {1.0 - t, t};
        r.count = 2;
        r.dscaled_dx = (outputs_[i + 1] - outputs_[i]) / width;
    }
    r.scaled = std::clamp(r.scaled, 0.0, max_output_);
    return r;
}

void Calibrator::project(int max_iterations, double tolerance) {
    if (monotonic_) dykstra_project(outputs_, chain_constraints(outputs_.size()), max_iterations, tolerance);
    for (auto& o : outputs_) o = std::clamp(o, 0.0, max_output_);
}

// --- lattice -----------------------------------------------------------------

void LatticeParams::validate() const {
    if (sizes.empty() || sizes.size() > 2) throw ConfigError("lattices must be 1-D or 2-D");
    if (directions.size() != sizes.size()) throw ConfigError("one monotonicity direction per lattice dimension");
    std::size_t total = 1;
    for (int m : sizes) {
        if (m < 2) throw ConfigError("lattice needs at least two vertices per dimension");
        total *= static_cast<std::size_t>(m);
    }
    if (values.size() != total) throw ConfigError("lattice vertex count mismatch");
}

LatticeParams init_lattice(std::vector<int> sizes, std::vector<Monotonicity> directions) {
    LatticeParams p{std::move(sizes), {}, std::move(directions)};
    std::size_t total = 1;
    for (int m : p.sizes) total *= static_cast<std::size_t>(std::max(m, 0));
    p.values.assign(total, 0.0);
    p.validate();
    const int m0 = p.sizes[0];
    const int m1 = p.dims() == 2 ? p.sizes[1] : 1;
    for (int b = 0; b < m1; ++b) {
        for (int a = 0; a < m0; ++a) {
            double v = 0.0;
            const int coord[2] = {a, b};
            for (std::size_t d = 0; d < p.dims(); ++d) {
                const double ramp = static_cast<double>(coord[d]) / (p.sizes[d] - 1);
                if (p.directions[d] == Monotonicity::increasing) v += ramp;
                if (p.directions[d] == Monotonicity::decreasing) v -= ramp;
            }
            p.values[p.vertex(a, b)] = v;
        }
    }
    return p;
}

namespace {

// Lower cell index with the top boundary folded into the last cell.
int cell_of(double x, int m) {
    return std::clamp(static_cast<int>(std::floor(x)), 0, m - 2);
}

}  // namespace

LatticeEval lattice_eval(const LatticeParams& p, std::span<const double> scaled) {
    if (scaled.size() != p.dims()) throw ConfigError("lattice input dimension mismatch");
    for (std::size_t d = 0; d < p.dims(); ++d) {
        const double x = scaled[d];
        if (!(x >= -1e-9 && x <= p.sizes[d] - 1 + 1e-9))
            throw ConfigError("lattice input " + std::to_string(x) + " outside [0, " + std::to_string(p.sizes[d] - 1) +
                              "]");
    }
    LatticeEval e;
    const double x0 = std::clamp(scaled[0], 0.0, static_cast<double>(p.sizes[0] - 1));
    const int a = cell_of(x0, p.sizes[0]);
    const double g1 = x0 - a;
    if (p.dims() == 1) {
        const double l0 = p.values[a], l1 = p.values[a + 1];
        e.value = (1.0 - g1) * l0 + g1 * l1;
        e.index = {static_cast<std::size_t>(a), static_cast<std::size_t>(a + 1), 0, 0};
        e.weight = {1.0 - g1, g1, 0.0, 0.0};
        e.count = 2;
        e.dinput[0] = l1 - l0;
        return e;
    }
    const double x1 = std::clamp(scaled[1], 0.0, static_cast<double>(p.sizes[1] - 1));
    const int b = cell_of(x1, p.sizes[1]);
    const double g2 = x1 - b;
    const std::size_t i00 = p.vertex(a, b), i10 = p.vertex(a + 1, b);
    const std::size_t i01 = p.vertex(a, b + 1), i11 = p.vertex(a + 1, b + 1);
    const double l00 = p.values[i00], l10 = p.values[i10], l01 = p.values[i01], l11 = p.values[i11];
    e.index = {i00, i10, i01, i11};
    e.weight = {(1.0 - g1) * (1.0 - g2), g1 * (1.0 - g2), (1.0 - g1) * g2, g1 * g2};
    e.count = 4;
    e.value = e.weight[0] * l00 + e.weight[1] * l10 + e.weight[2] * l01 + e.weight[3] * l11;
    e.dinput[0] = (1.0 - g2) * (l10 - l00) + g2 * (l11 - l01);
    e.dinput[1] = (1.0 - g1) * (l01 - l00) + g1 * (l11 - l10);
    return e;
}

ConstraintSet build_constraints(const LatticeParams& p) {
    p.validate();
    ConstraintSet cs;
    const int m0 = p.sizes[0];
    const int m1 = p.dims() == 2 ? p.sizes[1] : 1;
    for (std::size_t d = 0; d < p.dims(); ++d) {
        const Monotonicity dir = p.directions[d];
        if (dir == Monotonicity::none) continue;
        for (int b = 0; b < m1; ++b) {
            for (int a = 0; a < m0; ++a) {
                std::size_t from, to;
                if (d == 0) {
                    if (a + 1 >= m0) continue;
                    from = p.vertex(a, b);
                    to = p.vertex(a + 1, b);
                } else {
                    if (b + 1 >= m1) continue;
                    from = p.vertex(a, b);
                    to = p.vertex(a, b + 1);
                }
                if (dir == Monotonicity::increasing)
                    cs.push_back({from, to});
                else
                    cs.push_back({to, from});
            }
        }
    }
    std::sort(cs.begin(), cs.end());
    cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
    return cs;
}

ConstraintSet chain_constraints(std::size_t n) {
    ConstraintSet cs;
    for (std::size_t i = 0; i + 1 < n; ++i) cs.push_back({i, i + 1});
    return cs;
}

double max_violation(std::span<const double> values, const ConstraintSet& cs) {
    double worst = 0.0;
    for (const auto& c : cs) worst = std::max(worst, values[c.lo] - values[c.hi]);
    return worst;
}

ProjectionStats dykstra_project(std::span<double> values, const ConstraintSet& cs, int max_iterations,
                                double tolerance) {
    if (max_iterations < 1) throw ConfigError("Dykstra needs at least one iteration");
    if (!(tolerance > 0.0)) throw ConfigError("Dykstra tolerance must be positive");
    ProjectionStats stats;
    if (cs.empty()) return stats;
    for (const auto& c : cs)
        if (c.lo >= values.size() || c.hi >= values.size() || c.lo == c.hi)
            throw ConfigError("constraint index out of range");

    // Each halfspace correction p_i is non-zero only at (lo, hi).
    std::vector<std::array<double, 2>> correction(cs.size(), {0.0, 0.0});
    std::vector<double> previous(values.begin(), values.end());
    for (int k = 0; k < max_iterations; ++k) {
        for (std::size_t i = 0; i < cs.size(); ++i) {
            const auto [lo, hi] = cs[i];
            const double s_lo = values[lo] + correction[i][0];
            const double s_hi = values[hi] + correction[i][1];
            double r_lo = s_lo, r_hi = s_hi;
            if (s_lo > s_hi) r_lo = r_hi = 0.5 * (s_lo + s_hi);
            correction[i] = {s_lo - r_lo, s_hi - r_hi};
            values[lo] = r_lo;
            values[hi] = r_hi;
        }
        double change = 0.0;
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double d = values[j] - previous[j];
            change += d * d;
            previous[j] = values[j];
        }
        stats.iterations = k + 1;
        stats.last_change = std::sqrt(change);
        if (stats.last_change < tolerance) break;
    }
    return stats;
}

}  // namespace anam
