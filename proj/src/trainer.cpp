#include "anam/trainer.hpp"

#include "anam/errors.hpp"
#include "anam/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

namespace anam {

namespace {

double sign(double v) {
    return static_cast<double>((v > 0.0) - (v < 0.0));
}

bool is_trainable(const std::vector<bool>& mask, std::size_t t) {
    return mask.empty() || mask.at(t);
}

std::vector<std::span<const double>> as_spans(const std::vector<std::vector<double>>& cols) {
    return {cols.begin(), cols.end()};
}

}  // namespace

std::string to_string(OptimizerKind k) {
    return k == OptimizerKind::adam ? "adam" : "rmsprop";
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "rmsprop") return OptimizerKind::rmsprop;
    throw ConfigError("unknown optimizer '" + s + "'");
}

std::string to_string(StopReason r) {
    switch (r) {
    case StopReason::max_epochs: return "max_epochs";
    case StopReason::early_stopped: return "early_stopped";
    case StopReason::converged: return "converged";
    case StopReason::diverged: return "diverged";
    }
    return "max_epochs";
}

void TrainConfig::validate(std::size_t train_rows) const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
    if (!(convergence_threshold >= 0.0)) throw ConfigError("convergence threshold must be non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (batch_size > train_rows)
        throw ConfigError("batch size " + std::to_string(batch_size) + " exceeds the " + std::to_string(train_rows) +
                          " training rows");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (!(omega_smooth >= 0.0) || !(omega_mc >= 0.0)) throw ConfigError("penalty weights must be non-negative");
    if (smooth_grid_size < 3) throw ConfigError("smoothness grid needs at least 3 points");
    if (dykstra_iterations < 1 || final_dykstra_iterations < 1) throw ConfigError("Dykstra iterations must be >= 1");
    if (!(dykstra_tolerance > 0.0) || !(final_dykstra_tolerance > 0.0))
        throw ConfigError("Dykstra tolerance must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(rho >= 0.0 && rho < 1.0))
        throw ConfigError("optimizer decay rates must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("optimizer epsilon must be positive");
}

// --- gradient container --------------------------------------------------------

ModelGradient ModelGradient::zeros_like(const AnamModel& model) {
    ModelGradient g;
    g.weight.assign(model.terms().size(), 0.0);
    for (const auto& t : model.terms()) g.shape.emplace_back(t.num_params(), 0.0);
    return g;
}

void ModelGradient::scale(double s) {
    bias *= s;
    for (auto& w : weight) w *= s;
    for (auto& v : shape)
        for (auto& x : v) x *= s;
}

void ModelGradient::add(const ModelGradient& o) {
    bias += o.bias;
    for (std::size_t t = 0; t < weight.size(); ++t) weight[t] += o.weight[t];
    for (std::size_t t = 0; t < shape.size(); ++t)
        for (std::size_t k = 0; k < shape[t].size(); ++k) shape[t][k] += o.shape[t][k];
}

// --- smoothness ------------------------------------------------------------------

std::vector<SmoothGrid> make_smooth_grids(const AnamModel& model, std::size_t points) {
    if (points < 3) throw ConfigError("smoothness grid needs at least 3 points");
    std::vector<SmoothGrid> grids;
    for (std::size_t t = 0; t < model.terms().size(); ++t) {
        const auto& spec = model.term(t).spec();
        if (!spec.smooth || spec.is_pair()) continue;
        const auto& f = model.features()[spec.features[0]];
        SmoothGrid g;
        g.term = t;
        const double lo = f.min, hi = f.max;
        g.spacing = (hi - lo) / static_cast<double>(points - 1);
        if (!(g.spacing > 0.0)) throw ConfigError("smooth term '" + model.term_name(t) + "' has an empty range");
        for (std::size_t i = 0; i < points; ++i) g.points.push_back(lo + g.spacing * static_cast<double>(i));
        grids.push_back(std::move(g));
    }
    return grids;
}

namespace {

void check_uniform(const SmoothGrid& g) {
    if (g.points.size() < 3) throw ConfigError("smoothness grid needs at least 3 points");
    if (!(g.spacing > 0.0)) throw ConfigError("smoothness grid spacing must be positive");
    for (std::size_t i = 1; i < g.points.size(); ++i) {
        const double h = g.points[i] - g.points[i - 1];
        if (std::abs(h - g.spacing) > 1e-9 * std::max(1.0, std::abs(g.spacing)))
            throw ConfigError("smoothness grid is not uniform");
    }
}

}  // namespace

double second_difference_roughness(std::span<const double> v, double spacing) {
    if (!(spacing > 0.0)) throw ConfigError("grid spacing must be positive");
    double sum = 0.0;
    const double h2 = spacing * spacing;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) sum += std::abs(v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2;
    return sum;
}

double term_roughness(const AnamModel& model, const SmoothGrid& grid) {
    check_uniform(grid);
    const auto& term = model.term(grid.term);
    std::vector<double> raw;
    const std::span<const double> in[1] = {grid.points};
    term.forward(in, raw);
    for (auto& r : raw) r *= term.weight;
    return second_difference_roughness(raw, grid.spacing);
}

double smoothness_penalty(const AnamModel& model, std::span<const SmoothGrid> grids, double omega,
                          ModelGradient* grad, const std::vector<bool>& trainable) {
    if (omega == 0.0) return 0.0;
    double total = 0.0;
    std::vector<double> raw;
    for (const auto& g : grids) {
        check_uniform(g);
        const auto& term = model.term(g.term);
        const bool want_grad = grad && is_trainable(trainable, g.term);
        TermCache cache;
        const std::span<const double> in[1] = {g.points};
        term.forward(in, raw, want_grad ? &cache : nullptr);
        const double a = term.weight;
        const double h2 = g.spacing * g.spacing;
        const std::size_t n = raw.size();
        std::vector<double> up(want_grad ? n : 0, 0.0);
        double dweight = 0.0;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double d2 = raw[i + 1] - 2.0 * raw[i] + raw[i - 1];
            total += std::abs(a * d2) / h2;
            if (want_grad) {
                const double s = omega * sign(a * d2) / h2;
                up[i + 1] += s * a;
                up[i] -= 2.0 * s * a;
                up[i - 1] += s * a;
                dweight += s * d2;
            }
        }
        if (want_grad) {
            term.backward(cache, up, grad->shape[g.term]);
            if (term.weight_trainable) grad->weight[g.term] += dweight;
        }
    }
    return omega * total;
}

// --- marginal clarity ---------------------------------------------------------------

std::vector<std::pair<std::size_t, std::size_t>> marginal_clarity_couples(const AnamModel& model) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const auto& terms = model.terms();
    for (std::size_t q = 0; q < terms.size(); ++q) {
        const auto& pair = terms[q].spec();
        if (!pair.is_pair()) continue;
        for (std::size_t m = 0; m < terms.size(); ++m) {
            const auto& main = terms[m].spec();
            if (main.is_pair()) continue;
            if (main.features[0] == pair.features[0] || main.features[0] == pair.features[1]) out.emplace_back(m, q);
        }
    }
    return out;
}

double marginal_clarity_penalty(const AnamModel& model, const std::vector<std::vector<double>>& c, double omega,
                                std::vector<std::vector<double>>* d_contrib) {
    if (omega == 0.0) return 0.0;
    double total = 0.0;
    for (const auto& [m, q] : marginal_clarity_couples(model)) {
        const auto& cm = c.at(m);
        const auto& cq = c.at(q);
        const double n = static_cast<double>(cm.size());
        if (cm.empty()) continue;
        double dot = 0.0;
        for (std::size_t i = 0; i < cm.size(); ++i) dot += cm[i] * cq[i];
        const double mean = dot / n;
        total += std::abs(mean);
        if (d_contrib) {
            const double s = omega * sign(mean) / n;
            auto& dm = (*d_contrib)[m];
            auto& dq = (*d_contrib)[q];
            for (std::size_t i = 0; i < cm.size(); ++i) {
                dm[i] += s * cq[i];
                dq[i] += s * cm[i];
            }
        }
    }
    return omega * total;
}

std::vector<ClarityMeasure> marginal_clarity_measures(const AnamModel& model, const Dataset& data) {
    const auto p = predict_batch(model, data);
    std::vector<ClarityMeasure> out;
    for (const auto& [m, q] : marginal_clarity_couples(model)) {
        double dot = 0.0;
        for (std::size_t i = 0; i < data.rows(); ++i) dot += p.contributions[m][i] * p.contributions[q][i];
        out.push_back({m, q, dot / static_cast<double>(data.rows())});
    }
    return out;
}

// --- objective -------------------------------------------------------------------

ObjectiveResult objective(const AnamModel& model, const Dataset& data, std::span<const std::size_t> rows,
                          const ObjectiveOptions& opts, ModelGradient* grad) {
    if (rows.empty()) throw ConfigError("objective needs a non-empty batch");
    const std::size_t B = rows.size();
    const std::size_t T = model.terms().size();
    const auto& dist = model.distribution();

    std::vector<std::vector<double>> raw(T), contrib(T);
    std::vector<TermCache> caches(grad ? T : 0);
    for (std::size_t t = 0; t < T; ++t) {
        const auto cols = model.term_inputs(t, data, rows);
        const auto spans = as_spans(cols);
        const bool keep = grad && is_trainable(opts.trainable, t);
        model.term(t).forward(spans, raw[t], keep ? &caches[t] : nullptr);
        const auto& term = model.term(t);
        contrib[t].resize(B);
        for (std::size_t i = 0; i < B; ++i) contrib[t][i] = term.weight * (raw[t][i] - term.center);
    }

    ObjectiveResult res;
    std::vector<double> deta(B, 0.0);
    double nll_sum = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        double eta = model.bias;
        for (std::size_t t = 0; t < T; ++t) eta += contrib[t][i];
        if (model.uses_offset()) eta += std::log(data.exposure()[rows[i]]);
        const double raw_mu = std::exp(eta);
        const double mu = link_apply(dist.link, eta, model.clip());
        if (!std::isfinite(eta) || !std::isfinite(mu)) throw NumericError("non-finite linear predictor", rows[i]);
        const auto lg = nll(dist, data.response()[rows[i]], mu);
        if (!std::isfinite(lg.loss)) throw NumericError("non-finite loss", rows[i]);
        nll_sum += lg.loss;
        const bool clipped = raw_mu < model.clip().lo || raw_mu > model.clip().hi;
        deta[i] = clipped ? 0.0 : lg.dloss_dmu * mu / static_cast<double>(B);
    }
    res.nll = nll_sum / static_cast<double>(B);

    std::vector<std::vector<double>> dcontrib;
    if (grad) {
        dcontrib.assign(T, deta);
    }
    if (opts.penalties && opts.omega_mc > 0.0)
        res.mc = marginal_clarity_penalty(model, contrib, opts.omega_mc, grad ? &dcontrib : nullptr);

    if (grad) {
        for (double d : deta) grad->bias += d;
        std::vector<double> up(B);
        for (std::size_t t = 0; t < T; ++t) {
            if (!is_trainable(opts.trainable, t)) continue;
            const auto& term = model.term(t);
            double dweight = 0.0;
            for (std::size_t i = 0; i < B; ++i) {
                up[i] = term.weight * dcontrib[t][i];
                dweight += (raw[t][i] - term.center) * dcontrib[t][i];
            }
            if (term.weight_trainable) grad->weight[t] += dweight;
            term.backward(caches[t], up, grad->shape[t]);
        }
    }

    if (opts.penalties && opts.omega_smooth > 0.0)
        res.smooth = smoothness_penalty(model, opts.grids, opts.omega_smooth, grad, opts.trainable);

    res.value = res.nll + res.smooth + res.mc;
    if (!std::isfinite(res.value)) throw NumericError("non-finite objective");
    return res;
}

double mean_nll(const AnamModel& model, const Dataset& data) {
    if (data.rows() == 0) throw DataError("mean_nll on an empty dataset");
    const auto p = predict_batch(model, data);
    double sum = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) {
        const double l = nll(model.distribution(), data.response()[i], p.mu[i]).loss;
        if (!std::isfinite(l)) throw NumericError("non-finite validation loss", i);
        sum += l;
    }
    return sum / static_cast<double>(data.rows());
}

// --- optimizer -------------------------------------------------------------------

Optimizer::Optimizer(const AnamModel& model, const TrainConfig& cfg)
    : kind_(cfg.optimizer),
      lr_(cfg.learning_rate),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.epsilon),
      rho_(cfg.rho) {
    std::size_t n = 1;
    for (const auto& t : model.terms()) n += 1 + t.num_params();
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
}

double Optimizer::update(double g, std::size_t k) {
    if (kind_ == OptimizerKind::adam) {
        m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
        v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g * g;
        const double mhat = m_[k] / (1.0 - b1t_);
        const double vhat = v_[k] / (1.0 - b2t_);
        return lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
    v_[k] = rho_ * v_[k] + (1.0 - rho_) * g * g;
    return lr_ * g / (std::sqrt(v_[k]) + eps_);
}

void Optimizer::step(AnamModel& model, const ModelGradient& grad, const std::vector<bool>& trainable,
                     bool train_bias) {
    ++t_;
    b1t_ *= beta1_;
    b2t_ *= beta2_;
    std::size_t k = 0;
    if (train_bias) model.bias -= update(grad.bias, k);
    ++k;
    for (std::size_t t = 0; t < model.terms().size(); ++t) {
        auto& term = model.terms()[t];
        const std::size_t base = k;
        k += 1 + term.num_params();
        if (!is_trainable(trainable, t)) continue;
        if (term.weight_trainable) term.weight -= update(grad.weight[t], base);
        const auto& g = grad.shape[t];
        term.for_each_param([&](double& v, std::size_t j) { v -= update(g[j], base + 1 + j); });
    }
}

// --- training loop ---------------------------------------------------------------

std::string format_history_csv(const std::vector<EpochRecord>& history) {
    auto fmt = [](double v) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, res.ptr);
    };
    std::string out = "epoch,train_objective,train_nll,val_nll,smooth_pen,mc_pen\n";
    for (const auto& r : history) {
        out += std::to_string(r.epoch) + "," + fmt(r.train_objective) + "," + fmt(r.train_nll) + "," + fmt(r.val_nll) +
               "," + fmt(r.smooth_pen) + "," + fmt(r.mc_pen) + "\n";
    }
    return out;
}

void tighten(AnamModel& model, int max_iterations, double tolerance) {
    for (auto& t : model.terms()) t.project(max_iterations, tolerance);
}

double parameter_distance(const AnamModel& a, const AnamModel& b) {
    if (a.terms().size() != b.terms().size()) throw ConfigError("models have different term lists");
    double ss = (a.bias - b.bias) * (a.bias - b.bias);
    for (std::size_t t = 0; t < a.terms().size(); ++t) {
        const auto& ta = a.term(t);
        const auto& tb = b.term(t);
        ss += (ta.weight - tb.weight) * (ta.weight - tb.weight);
        const auto pa = ta.flat_params();
        const auto pb = tb.flat_params();
        if (pa.size() != pb.size()) throw ConfigError("models have different parameter layouts");
        for (std::size_t k = 0; k < pa.size(); ++k) ss += (pa[k] - pb[k]) * (pa[k] - pb[k]);
    }
    return std::sqrt(ss);
}

TrainResult train(const AnamModel& initial, const Dataset& train_data, const Dataset& val_data, const TrainConfig& cfg,
                  const TrainOptions& opts) {
    cfg.validate(train_data.rows());
    initial.check_schema(train_data);
    initial.check_schema(val_data);
    initial.check_heredity();
    if (val_data.rows() == 0) throw DataError("validation data is empty");
    if (!opts.trainable.empty() && opts.trainable.size() != initial.terms().size())
        throw ConfigError("trainable mask size does not match the term count");

    AnamModel model = initial;
    for (std::size_t t = 0; t < model.terms().size(); ++t)
        if (is_trainable(opts.trainable, t)) model.terms()[t].project(cfg.dykstra_iterations, cfg.dykstra_tolerance);

    const auto grids = make_smooth_grids(model, cfg.smooth_grid_size);
    ObjectiveOptions oo;
    oo.penalties = cfg.penalties;
    oo.omega_smooth = cfg.omega_smooth;
    oo.omega_mc = cfg.omega_mc;
    oo.grids = grids;
    oo.trainable = opts.trainable;

    Optimizer optimizer(model, cfg);
    Rng rng(cfg.seed, streams::shuffle);
    std::vector<std::size_t> perm(train_data.rows());
    std::iota(perm.begin(), perm.end(), std::size_t{0});

    auto finalize = [&](AnamModel m) {
        tighten(m, cfg.final_dykstra_iterations, cfg.final_dykstra_tolerance);
        center_terms(m, train_data);
        return m;
    };

    TrainResult result;
    std::optional<AnamModel> best;
    double best_val = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;
    AnamModel previous = model;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        try {
            std::shuffle(perm.begin(), perm.end(), rng);
            double w_obj = 0.0, w_nll = 0.0, w_smooth = 0.0, w_mc = 0.0;
            for (std::size_t start = 0; start < perm.size(); start += cfg.batch_size) {
                const std::span<const std::size_t> batch(perm.data() + start,
                                                         std::min(cfg.batch_size, perm.size() - start));
                auto grad = ModelGradient::zeros_like(model);
                const auto r = objective(model, train_data, batch, oo, &grad);
                const double w = static_cast<double>(batch.size());
                w_obj += w * r.value;
                w_nll += w * r.nll;
                w_smooth += w * r.smooth;
                w_mc += w * r.mc;
                optimizer.step(model, grad, opts.trainable, opts.train_bias);
                for (std::size_t t = 0; t < model.terms().size(); ++t)
                    if (is_trainable(opts.trainable, t))
                        model.terms()[t].project(cfg.dykstra_iterations, cfg.dykstra_tolerance);
            }
            const double n = static_cast<double>(perm.size());
            rec.train_objective = w_obj / n;
            rec.train_nll = w_nll / n;
            rec.smooth_pen = w_smooth / n;
            rec.mc_pen = w_mc / n;

            center_terms(model, train_data);
            AnamModel snapshot = finalize(model);
            rec.val_nll = mean_nll(snapshot, val_data);
            result.history.push_back(rec);

            if (rec.val_nll < best_val) {
                best_val = rec.val_nll;
                best = std::move(snapshot);
                result.best_epoch = epoch;
                bad_epochs = 0;
            } else if (++bad_epochs > cfg.patience) {
                result.reason = StopReason::early_stopped;
                break;
            }
        } catch (const NumericError& e) {
            result.reason = StopReason::diverged;
            result.message = e.what();
            break;
        }

        const double change = parameter_distance(model, previous);
        previous = model;
        if (change < cfg.convergence_threshold) {
            result.reason = StopReason::converged;
            break;
        }
    }

    if (best) {
        result.model = std::move(*best);
        result.best_val_nll = best_val;
    } else {
        result.model = finalize(initial);
        result.best_val_nll = std::numeric_limits<double>::quiet_NaN();
    }
    return result;
}

}  // namespace anam
