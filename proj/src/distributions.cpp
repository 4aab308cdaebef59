#include "anam/distributions.hpp"

#include "anam/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace anam {

void DistributionSpec::validate() const {
    if (family == Family::gamma && !(dispersion > 0.0 && std::isfinite(dispersion)))
        throw ConfigError("gamma dispersion must be positive");
}

double log_gamma(double x) {
    if (!(x > 0.0)) throw ConfigError("log_gamma requires a positive argument");
    static constexpr std::array<double, 9> coef = {
        0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
        771.32342877765313,   -176.61502916214059,   12.507343278686905,
        -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
    if (x < 0.5) {
        // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        return std::log(std::numbers::pi / std::sin(std::numbers::pi * x)) - log_gamma(1.0 - x);
    }
    const double z = x - 1.0;
    double a = coef[0];
    const double t = z + 7.5;
    for (int i = 1; i < 9; ++i) a += coef[i] / (z + i);
    return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t + std::log(a);
}

LossAndGrad gamma_nll(double y, double mu, double phi) {
    if (!(y > 0.0) || !(mu > 0.0) || !(phi > 0.0))
        throw ConfigError("gamma_nll requires y > 0, mu > 0, phi > 0");
    const double shape = 1.0 / phi;
    const double scale = mu * phi;
    const double loss = log_gamma(shape) + shape * std::log(scale) - (shape - 1.0) * std::log(y) + y / scale;
    const double grad = shape * (1.0 / mu - y / (mu * mu));
    return {loss, grad};
}

LossAndGrad poisson_nll(double y, double mu) {
    if (!(mu > 0.0)) throw ConfigError("poisson_nll requires mu > 0");
    if (!(y >= 0.0) || std::floor(y) != y) throw ConfigError("poisson_nll requires a non-negative integer count");
    const double loss = mu - y * std::log(mu) + log_gamma(y + 1.0);
    return {loss, 1.0 - y / mu};
}

LossAndGrad nll(const DistributionSpec& dist, double y, double mu) {
    switch (dist.family) {
    case Family::gamma: return gamma_nll(y, mu, dist.dispersion);
    case Family::poisson: return poisson_nll(y, mu);
    }
    throw ConfigError("unknown family");
}

double link_apply(Link, double eta, ClipBounds clip) {
    const double mu = std::exp(eta);
    if (std::isnan(mu)) return mu;
    return std::clamp(mu, clip.lo, clip.hi);
}

double link_invert(Link, double mu) {
    if (!(mu > 0.0)) throw ConfigError("link_invert requires mu > 0");
    return std::log(mu);
}

std::string to_string(Family f) {
    return f == Family::gamma ? "gamma" : "poisson";
}

Family family_from_string(const std::string& s) {
    if (s == "gamma") return Family::gamma;
    if (s == "poisson") return Family::poisson;
    throw ConfigError("unknown distribution family '" + s + "'");
}

}  // namespace anam
