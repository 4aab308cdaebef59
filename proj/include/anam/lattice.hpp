#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace anam {

enum class Monotonicity { none, increasing, decreasing };

std::string to_string(Monotonicity m);
Monotonicity monotonicity_from_string(const std::string& s);

// Piecewise-linear map from a raw input onto the lattice coordinate range
// [0, max_output]. Knot locations are fixed; the output value at each knot
// is trainable.
class Calibrator {
public:
    Calibrator() = default;
    Calibrator(std::vector<double> knots, std::vector<double> outputs, double max_output, bool monotonic);

    // Two knots at [lo, hi] mapped to {0, M-1}: plain min-max scaling.
    static Calibrator min_max(double lo, double hi, int vertices, bool monotonic = true);
    // Knots at uniform quantiles of `data` (duplicates dropped); initial
    // outputs reproduce min-max scaling at the knots.
    static Calibrator from_quantiles(std::span<const double> data, int knots, int vertices, bool monotonic);

    struct Result {
        double scaled = 0.0;
        // d scaled / d outputs: at most two non-zero entries.
        std::array<int, 2> index{0, 0};
        std::array<double, 2> weight{0.0, 0.0};
        int count = 0;
        double dscaled_dx = 0.0;
    };
    Result calibrate(double x) const;

    std::size_t size() const noexcept { return knots_.size(); }
    const std::vector<double>& knots() const noexcept { return knots_; }
    std::span<double> outputs() noexcept { return outputs_; }
    std::span<const double> outputs() const noexcept { return outputs_; }
    double max_output() const noexcept { return max_output_; }
    bool monotonic() const noexcept { return monotonic_; }

    // Monotone calibrators: non-decreasing outputs. All: clamp to range.
    void project(int max_iterations, double tolerance);

    bool operator==(const Calibrator&) const = default;

private:
    std::vector<double> knots_;
    std::vector<double> outputs_;
    double max_output_ = 1.0;
    bool monotonic_ = false;
};

// Vertex values of a 1-D or 2-D lattice. Vertex (a, b) lives at
// values[a + sizes[0] * b].
struct LatticeParams {
    std::vector<int> sizes;
    std::vector<double> values;
    std::vector<Monotonicity> directions;

    std::size_t dims() const noexcept { return sizes.size(); }
    std::size_t vertex(int a, int b = 0) const { return static_cast<std::size_t>(a + sizes[0] * b); }
    void validate() const;
};

// Ramp with equal positive slopes along monotone dimensions (negated for
// decreasing ones), zero along free dimensions.
LatticeParams init_lattice(std::vector<int> sizes, std::vector<Monotonicity> directions);

struct LatticeEval {
    double value = 0.0;
    std::array<std::size_t, 4> index{};
    std::array<double, 4> weight{};
    int count = 0;
    std::array<double, 2> dinput{0.0, 0.0};
};

// (Bi)linear interpolation. Inputs must lie in [0, M-1] per dimension.
LatticeEval lattice_eval(const LatticeParams& params, std::span<const double> scaled);

// values[lo] <= values[hi]
struct Constraint {
    std::size_t lo;
    std::size_t hi;
    auto operator<=>(const Constraint&) const = default;
};
using ConstraintSet = std::vector<Constraint>;

ConstraintSet build_constraints(const LatticeParams& params);
// values[0] <= values[1] <= ... <= values[n-1]
ConstraintSet chain_constraints(std::size_t n);

double max_violation(std::span<const double> values, const ConstraintSet& cs);

struct ProjectionStats {
    int iterations = 0;
    double last_change = 0.0;
};

// Dykstra's alternating projections onto the intersection of the pairwise
// halfspaces in `cs`, visited in ascending (lo, hi) order.
ProjectionStats dykstra_project(std::span<double> values, const ConstraintSet& cs, int max_iterations,
                                double tolerance);

}  // namespace anam
