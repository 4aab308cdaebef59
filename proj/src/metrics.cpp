#include "anam/metrics.hpp"

#include "anam/errors.hpp"

#include <cmath>
#include <cstdio>

namespace anam {

MetricsReport compute_metrics(std::span<const double> y, std::span<const double> mu, const DistributionSpec& dist,
                              std::optional<std::span<const double>> exposure) {
    if (y.size() != mu.size()) throw DataError("metrics: response and prediction lengths differ");
    if (exposure && exposure->size() != y.size()) throw DataError("metrics: exposure length differs");
    if (y.empty()) throw DataError("metrics: no rows");
    dist.validate();
    MetricsReport r;
    r.n_test = y.size();
    r.distribution = dist;
    double nll_sum = 0.0, se = 0.0, ae = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!(mu[i] > 0.0)) throw NumericError("metrics: non-positive prediction", i);
        const double m = exposure ? mu[i] * (*exposure)[i] : mu[i];
        nll_sum += nll(dist, y[i], m).loss;
        const double e = y[i] - m;
        se += e * e;
        ae += std::abs(e);
    }
    const double n = static_cast<double>(y.size());
    r.nll = nll_sum / n;
    r.rmse = std::sqrt(se / n);
    r.mae = ae / n;
    return r;
}

double estimate_dispersion(std::span<const double> y, std::span<const double> mu, double p_eff) {
    if (y.size() != mu.size()) throw DataError("dispersion: response and prediction lengths differ");
    if (y.size() < 2) throw DataError("dispersion needs at least two rows");
    const double dof = static_cast<double>(y.size()) - p_eff;
    if (!(dof > 0.0)) throw DataError("dispersion: no residual degrees of freedom");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!(mu[i] > 0.0)) throw NumericError("dispersion: non-positive prediction", i);
        const double r = (y[i] - mu[i]) / mu[i];
        sum += r * r;
    }
    return sum / dof;
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string format_metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::string out = "model,n_test,distribution,dispersion,nll,rmse,mae\n";
    for (const auto& [name, r] : rows)
        out += name + "," + std::to_string(r.n_test) + "," + to_string(r.distribution.family) + "," +
               num(r.distribution.dispersion) + "," + num(r.nll) + "," + num(r.rmse) + "," + num(r.mae) + "\n";
    return out;
}

std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s %8s %12s %12s %12s\n", "model", "n", "NLL", "RMSE", "MAE");
    out += buf;
    for (const auto& [name, r] : rows) {
        std::snprintf(buf, sizeof buf, "%-12s %8zu %12.6f %12.6g %12.6g\n", name.c_str(), r.n_test, r.nll, r.rmse,
                      r.mae);
        out += buf;
    }
    return out;
}

}  // namespace anam
