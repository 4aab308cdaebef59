#include "anam/errors.hpp"
#include "anam/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace anam {

std::vector<GlmColumn> glm_columns(const Dataset& ds) {
    std::vector<GlmColumn> cols;
    for (std::size_t j = 0; j < ds.num_features(); ++j) {
        const auto& f = ds.feature(j);
        if (f.kind == ColumnKind::continuous) {
            cols.push_back({j, -1, f.name});
            continue;
        }
        for (int l = 1; l < f.level_count(); ++l) cols.push_back({j, l, f.name + "=" + f.levels[l]});
    }
    return cols;
}

namespace {

Eigen::MatrixXd design(const std::vector<GlmColumn>& cols, const Dataset& ds) {
    Eigen::MatrixXd X(ds.rows(), cols.size() + 1);
    X.col(0).setOnes();
    for (std::size_t c = 0; c < cols.size(); ++c) {
        const auto col = ds.column(cols[c].feature);
        for (std::size_t i = 0; i < ds.rows(); ++i)
            X(i, c + 1) = cols[c].level < 0 ? col[i] : (static_cast<int>(col[i]) == cols[c].level ? 1.0 : 0.0);
    }
    return X;
}

Eigen::VectorXd offsets(const Dataset& ds, bool use) {
    Eigen::VectorXd o = Eigen::VectorXd::Zero(ds.rows());
    if (use)
        for (std::size_t i = 0; i < ds.rows(); ++i) o[i] = std::log(ds.exposure()[i]);
    return o;
}

double mean_nll(const DistributionSpec& dist, std::span<const double> y, const Eigen::VectorXd& eta) {
    DistributionSpec unit = dist;
    unit.dispersion = 1.0;
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += nll(unit, y[i], link_apply(dist.link, eta[i])).loss;
    return s / static_cast<double>(y.size());
}

}  // namespace

GlmModel fit_glm(const Dataset& train, const DistributionSpec& dist, const GlmOptions& opts) {
    dist.validate();
    if (train.rows() == 0) throw DataError("GLM needs training rows");
    if (opts.max_iterations < 1) throw ConfigError("GLM needs at least one iteration");
    GlmModel m;
    m.distribution = dist;
    m.uses_offset = train.has_exposure();
    m.columns = glm_columns(train);
    const Eigen::MatrixXd X = design(m.columns, train);
    const Eigen::VectorXd o = offsets(train, m.uses_offset);
    const auto y = train.response();
    const auto p = X.cols();

    if (opts.ridge == 0.0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        if (qr.rank() < p) throw NumericError("GLM design is rank deficient; enable a ridge penalty");
    }

    double sy = 0.0, se = 0.0;
    for (std::size_t i = 0; i < train.rows(); ++i) {
        sy += y[i];
        se += m.uses_offset ? train.exposure()[i] : 1.0;
    }
    if (!(sy > 0.0)) throw DataError("GLM with a log link needs a positive response total");
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    beta[0] = std::log(sy / se);
    double current = mean_nll(dist, y, X * beta + o);

    Eigen::VectorXd w(train.rows()), z(train.rows());
    for (int it = 1; it <= opts.max_iterations; ++it) {
        const Eigen::VectorXd eta = X * beta + o;
        for (std::size_t i = 0; i < train.rows(); ++i) {
            const double mu = link_apply(dist.link, eta[i]);
            // log link: Gamma working weight is 1, Poisson is mu.
            w[i] = dist.family == Family::gamma ? 1.0 : mu;
            z[i] = eta[i] - o[i] + (y[i] - mu) / mu;
        }
        Eigen::MatrixXd A = X.transpose() * w.asDiagonal() * X;
        if (opts.ridge > 0.0) A.diagonal().tail(p - 1).array() += opts.ridge;
        const Eigen::VectorXd b = X.transpose() * (w.array() * z.array()).matrix();
        Eigen::VectorXd cand = A.ldlt().solve(b);
        if (!cand.allFinite()) throw NumericError("GLM iteration produced non-finite coefficients");

        // Step halving keeps the likelihood monotone.
        double next = mean_nll(dist, y, X * cand + o);
        for (int h = 0; h < 50 && !(next <= current); ++h) {
            cand = 0.5 * (beta + cand);
            next = mean_nll(dist, y, X * cand + o);
        }
        m.iterations = it;
        if (!(next <= current)) {
            m.converged = true;
            break;
        }
        const double change = (cand - beta).cwiseAbs().maxCoeff();
        beta = cand;
        current = next;
        m.nll_trace.push_back(current);
        if (change < opts.tolerance) {
            m.converged = true;
            break;
        }
    }
    m.coefficients.assign(beta.data(), beta.data() + p);
    return m;
}

std::vector<double> glm_predict(const GlmModel& model, const Dataset& ds) {
    if (model.uses_offset && !ds.has_exposure()) throw DataError("GLM uses an exposure offset but the data has none");
    for (const auto& c : model.columns)
        if (c.feature >= ds.num_features()) throw DataError("dataset lacks GLM feature '" + c.name + "'");
    const Eigen::MatrixXd X = design(model.columns, ds);
    const Eigen::Map<const Eigen::VectorXd> beta(model.coefficients.data(),
                                                 static_cast<Eigen::Index>(model.coefficients.size()));
    const Eigen::VectorXd eta = X * beta + offsets(ds, model.uses_offset);
    std::vector<double> mu(ds.rows());
    for (std::size_t i = 0; i < ds.rows(); ++i) mu[i] = link_apply(model.distribution.link, eta[i]);
    return mu;
}

nlohmann::json glm_to_json(const GlmModel& model) {
    nlohmann::json j;
    j["distribution"] = to_string(model.distribution.family);
    j["uses_offset"] = model.uses_offset;
    j["iterations"] = model.iterations;
    j["converged"] = model.converged;
    auto& coef = j["coefficients"];
    coef.push_back({{"name", "(intercept)"}, {"value", model.coefficients.at(0)}});
    for (std::size_t c = 0; c < model.columns.size(); ++c)
        coef.push_back({{"name", model.columns[c].name}, {"value", model.coefficients.at(c + 1)}});
    return j;
}

}  // namespace anam
