#include "anam/data.hpp"

#include "anam/errors.hpp"
#include "anam/rng.hpp"

#include <charconv>
#include <limits>
#include <cmath>
#include <numbers>
#include <random>

namespace anam {

namespace {

double sign(double v) {
    return static_cast<double>((v > 0.0) - (v < 0.0));
}

}  // namespace

void SyntheticConfig::validate() const {
    if (n < 1) throw ConfigError("synthetic n must be at least 1");
    if (!(dispersion > 0.0) || !std::isfinite(dispersion)) throw ConfigError("dispersion must be positive");
    if (!std::isfinite(bias)) throw ConfigError("bias must be finite");
}

double synthetic_f1(double x1) {
    return std::abs(x1) * std::sin(8.0 * x1);
}

double synthetic_f2(double x2) {
    const double s = std::sin(8.0 * x2);
    return 0.5 * s * s * s - 0.25 * std::cos(4.0 * x2) + 0.25 * x2 * x2;
}

double synthetic_f34(double x3, double x4) {
    return -(x3 + 0.5) * std::exp(-x4);
}

double synthetic_f56(double x5, double x6) {
    return 1.5 * std::sin(2.0 * std::numbers::pi * (x5 - 0.5) * (x6 + 0.5));
}

double synthetic_f78(double x7, double x8) {
    return sign(50.0 * (std::sin(10.0 * x7) + 0.5)) * sign(50.0 * (std::sin(10.0 * x8) - 0.5));
}

std::array<double, kSyntheticTerms> synthetic_terms(std::span<const double> x) {
    if (x.size() < 8) throw ConfigError("synthetic_terms needs at least 8 inputs");
    return {synthetic_f1(x[0]), synthetic_f2(x[1]), synthetic_f34(x[2], x[3]), synthetic_f56(x[4], x[5]),
            synthetic_f78(x[6], x[7])};
}

Simulated simulate(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed, streams::simulate);

    std::vector<Feature> features;
    for (std::size_t j = 0; j < kSyntheticFeatures; ++j)
        features.push_back({"X" + std::to_string(j + 1), ColumnKind::continuous, {}});
    std::vector<std::vector<double>> cols(kSyntheticFeatures, std::vector<double>(cfg.n));
    std::vector<double> y(cfg.n);

    GroundTruth truth;
    truth.bias = cfg.bias;
    truth.mu.resize(cfg.n);
    truth.terms.resize(cfg.n);

    const double shape = 1.0 / cfg.dispersion;
    std::array<double, kSyntheticFeatures> x{};
    for (std::size_t i = 0; i < cfg.n; ++i) {
        for (std::size_t j = 0; j < kSyntheticFeatures; ++j) {
            x[j] = rng.uniform(-1.0, 1.0);
            cols[j][i] = x[j];
        }
        const auto terms = synthetic_terms(x);
        double eta = cfg.bias;
        for (double t : terms) eta += t;
        const double mu = std::exp(eta);
        truth.terms[i] = terms;
        truth.mu[i] = mu;
        // Mean mu, variance phi * mu^2.
        std::gamma_distribution<double> gamma(shape, mu * cfg.dispersion);
        double draw = gamma(rng.engine());
        // A zero draw is possible in floating point for tiny shapes; keep y > 0.
        if (!(draw > 0.0)) draw = std::numeric_limits<double>::min();
        y[i] = draw;
    }
    return {Dataset(std::move(features), std::move(cols), std::move(y)), std::move(truth)};
}

std::string format_ground_truth_csv(const GroundTruth& truth) {
    auto fmt = [](double v) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, res.ptr);
    };
    std::string out = "row,mu,bias,f1,f2,f34,f56,f78\n";
    for (std::size_t i = 0; i < truth.mu.size(); ++i) {
        out += std::to_string(i) + "," + fmt(truth.mu[i]) + "," + fmt(truth.bias);
        for (double t : truth.terms[i]) out += "," + fmt(t);
        out += "\n";
    }
    return out;
}

}  // namespace anam
