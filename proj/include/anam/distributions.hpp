#pragma once

#include <string>

namespace anam {

enum class Family { gamma, poisson };
enum class Link { log };

// Bounds applied to the mean after the inverse link.
struct ClipBounds {
    double lo = 1e-7;
    double hi = 1e30;
};

struct DistributionSpec {
    Family family = Family::gamma;
    double dispersion = 1.0;  // gamma only
    Link link = Link::log;

    void validate() const;
};

struct LossAndGrad {
    double loss;
    double dloss_dmu;
};

// log Gamma(x) for x > 0 (Lanczos, g = 7, 9 coefficients).
double log_gamma(double x);

// Negative log density of Gamma(shape 1/phi, scale mu*phi) at y.
LossAndGrad gamma_nll(double y, double mu, double phi);

// Negative log Poisson probability of count y with mean mu.
LossAndGrad poisson_nll(double y, double mu);

// Dispatch on family; exposure is assumed already folded into mu.
LossAndGrad nll(const DistributionSpec& dist, double y, double mu);

// Inverse link followed by clipping: exp(eta) clamped into [lo, hi].
double link_apply(Link link, double eta, ClipBounds clip = {});
// Exact log of mu; mu must be positive.
double link_invert(Link link, double mu);

std::string to_string(Family f);
Family family_from_string(const std::string& s);

}  // namespace anam
