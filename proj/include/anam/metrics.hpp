#pragma once

#include "anam/data.hpp"
#include "anam/distributions.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace anam {

struct MetricsReport {
    double nll = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
    std::size_t n_test = 0;
    DistributionSpec distribution;  // dispersion used for the Gamma NLL
};

// `mu` is the predicted mean. With `exposure`, the Poisson mean of row i is
// mu[i] * exposure[i] and RMSE/MAE compare y against that mean.
MetricsReport compute_metrics(std::span<const double> y, std::span<const double> mu, const DistributionSpec& dist,
                              std::optional<std::span<const double>> exposure = std::nullopt);

// Pearson estimator sum((y - mu)^2 / mu^2) / (n - p_eff).
double estimate_dispersion(std::span<const double> y, std::span<const double> mu, double p_eff = 0.0);

std::string format_metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows);
std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

// --- GLM baseline -----------------------------------------------------------

struct GlmOptions {
    int max_iterations = 100;
    double tolerance = 1e-8;  // on the max absolute coefficient change
    double ridge = 0.0;       // > 0 adds ridge * I (intercept excluded) to every solve
};

struct GlmColumn {
    std::size_t feature = 0;
    int level = -1;  // -1: continuous value; otherwise an indicator for this level
    std::string name;
};

struct GlmModel {
    DistributionSpec distribution;
    bool uses_offset = false;
    std::vector<GlmColumn> columns;  // design after the intercept
    std::vector<double> coefficients;  // intercept first
    int iterations = 0;
    bool converged = false;
    std::vector<double> nll_trace;  // training NLL (dispersion 1) after each iteration
};

// Categorical features use treatment coding with the first level as reference.
std::vector<GlmColumn> glm_columns(const Dataset& ds);
GlmModel fit_glm(const Dataset& train, const DistributionSpec& dist, const GlmOptions& opts = {});
// Predicted means, including the exposure offset when the model uses one.
std::vector<double> glm_predict(const GlmModel& model, const Dataset& ds);

nlohmann::json glm_to_json(const GlmModel& model);

}  // namespace anam
