#include "anam/selection.hpp"

#include "anam/errors.hpp"
#include "anam/rng.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace anam {

namespace {

// Runs fn(0..n-1) on up to `jobs` threads. Each index writes only its own
// slot, so results do not depend on scheduling.
template <class F>
void run_indexed(std::size_t n, std::size_t jobs, F&& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

TrainResult train_model(const AnamModel& m, const Dataset& tr, const Dataset& va, const TrainConfig& cfg,
                        const TrainOptions& opts = {}) {
    return train(m, tr, va, cfg, opts);
}

std::string fmt(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::vector<std::size_t> top_k(const std::vector<std::size_t>& ranking, std::size_t k) {
    return {ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranking.size()))};
}

}  // namespace

// --- architecture ------------------------------------------------------------------

void ArchitectureConfig::validate(const Dataset& ds) const {
    for (const auto& [name, dir] : monotone) {
        const auto j = ds.feature_index(name);
        if (dir != Monotonicity::none && ds.feature(j).kind == ColumnKind::categorical)
            throw ConfigError("monotonicity on categorical feature '" + name + "' is not supported");
    }
    if (main_lattice_vertices < 2 || pair_lattice_vertices < 2) throw ConfigError("lattices need >= 2 vertices");
    if (calibrator_knots < 2) throw ConfigError("calibrators need >= 2 knots");
    MlpConfig m = main_mlp, p = pair_mlp;
    m.input_dim = p.input_dim = 1;
    m.validate();
    p.validate();
}

Monotonicity ArchitectureConfig::direction(const Dataset& ds, std::size_t feature) const {
    const auto it = monotone.find(ds.feature(feature).name);
    return it == monotone.end() ? Monotonicity::none : it->second;
}

TermSpec main_term_spec(const Dataset& ds, std::size_t feature, const ArchitectureConfig& arch) {
    TermSpec s;
    s.features = {feature};
    const auto dir = arch.direction(ds, feature);
    if (dir != Monotonicity::none) {
        s.backend = Backend::lattice;
        s.monotone = {dir};
    }
    s.mlp = arch.main_mlp;
    s.lattice_vertices = arch.main_lattice_vertices;
    s.calibrator_knots = arch.calibrator_knots;
    s.smooth = arch.smooth_mains && ds.feature(feature).kind == ColumnKind::continuous;
    return s;
}

TermSpec pair_term_spec(const Dataset& ds, std::size_t a, std::size_t b, const ArchitectureConfig& arch) {
    TermSpec s;
    s.features = {a, b};
    const auto da = arch.direction(ds, a), db = arch.direction(ds, b);
    if (da != Monotonicity::none || db != Monotonicity::none) {
        s.backend = Backend::lattice;
        s.monotone = {da, db};
    }
    s.mlp = arch.pair_mlp;
    s.lattice_vertices = arch.pair_lattice_vertices;
    s.calibrator_knots = arch.calibrator_knots;
    return s;
}

ModelSpec make_model_spec(const Dataset& ds, const std::vector<std::size_t>& mains,
                          const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                          const ArchitectureConfig& arch, const DistributionSpec& dist) {
    arch.validate(ds);
    ModelSpec spec;
    spec.distribution = dist;
    spec.uses_offset = ds.has_exposure();
    for (auto f : mains) spec.terms.push_back(main_term_spec(ds, f, arch));
    for (auto [a, b] : pairs) spec.terms.push_back(pair_term_spec(ds, a, b, arch));
    return spec;
}

void SelectionConfig::validate(std::size_t p) const {
    if (ensemble_size < 1) throw ConfigError("ensemble size must be at least 1");
    if (k1 && *k1 > p) throw ConfigError("K1 exceeds the number of features");
    if (k2 && k1 && *k2 > *k1 * (*k1 - 1) / 2) throw ConfigError("K2 exceeds the number of eligible pairs");
    if (jobs < 1) throw ConfigError("jobs must be at least 1");
    if (baseline_epochs && *baseline_epochs < 1) throw ConfigError("baseline epochs must be at least 1");
    distribution.validate();
}

// --- stage 1 -----------------------------------------------------------------------

SelectionReport select_main(const Dataset& train, const Dataset& val, const SelectionConfig& cfg) {
    const std::size_t p = train.num_features();
    cfg.validate(p);
    std::vector<std::size_t> all(p);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const ModelSpec spec = make_model_spec(train, all, {}, cfg.arch, cfg.distribution);
    TrainConfig tc = cfg.train;
    tc.penalties = false;
    tc.validate(train.rows());

    const Rng master(cfg.seed, streams::ensemble);
    const std::size_t N = cfg.ensemble_size;
    std::vector<std::optional<std::vector<double>>> member_scores(N);
    std::vector<std::string> member_errors(N);
    run_indexed(N, cfg.jobs, [&](std::size_t k) {
        const std::uint64_t seed = master.split(k).seed();
        TrainConfig mc = tc;
        mc.seed = seed;
        const auto result = train_model(build_model(spec, train, seed), train, val, mc);
        if (result.reason == StopReason::diverged) {
            member_errors[k] = result.message;
            return;
        }
        std::vector<double> s(p, 0.0);
        for (const auto& imp : importance(result.model, train)) s[imp.term] = imp.score;
        member_scores[k] = std::move(s);
    });

    SelectionReport r;
    std::vector<std::vector<double>> per_feature(p);
    for (std::size_t k = 0; k < N; ++k) {
        if (!member_scores[k]) {
            ++r.members_dropped;
            r.warnings.push_back("ensemble member " + std::to_string(k) + " diverged: " + member_errors[k]);
            continue;
        }
        ++r.members_trained;
        for (std::size_t j = 0; j < p; ++j) per_feature[j].push_back((*member_scores[k])[j]);
    }
    if (2 * r.members_dropped > N)
        throw NumericError(std::to_string(r.members_dropped) + " of " + std::to_string(N) +
                           " ensemble members diverged");

    for (std::size_t j = 0; j < p; ++j) {
        // Summing in sorted order makes the average independent of member order.
        auto& v = per_feature[j];
        std::sort(v.begin(), v.end());
        const double sum = std::accumulate(v.begin(), v.end(), 0.0);
        r.main_scores.push_back({j, train.feature(j).name, sum / static_cast<double>(v.size())});
    }
    r.main_ranking = all;
    std::stable_sort(r.main_ranking.begin(), r.main_ranking.end(),
                     [&](std::size_t a, std::size_t b) { return r.main_scores[a].score > r.main_scores[b].score; });
    if (cfg.k1) {
        r.selected_mains = top_k(r.main_ranking, *cfg.k1);
        std::sort(r.selected_mains.begin(), r.selected_mains.end());
    }
    return r;
}

// --- stage 2 -----------------------------------------------------------------------

SelectionReport select_pairs(const Dataset& train, const Dataset& val, const std::vector<std::size_t>& mains_in,
                             const SelectionConfig& cfg, SelectionReport r) {
    cfg.validate(train.num_features());
    std::vector<std::size_t> mains = mains_in;
    std::sort(mains.begin(), mains.end());
    if (std::adjacent_find(mains.begin(), mains.end()) != mains.end()) throw ConfigError("duplicate main feature");
    if (mains.size() < 2) throw ConfigError("pair screening needs at least two main effects");
    for (auto f : mains)
        if (f >= train.num_features()) throw ConfigError("main feature index out of range");
    if (cfg.k2 && *cfg.k2 > mains.size() * (mains.size() - 1) / 2)
        throw ConfigError("K2 exceeds the number of eligible pairs");
    TrainConfig tc = cfg.train;
    tc.penalties = false;
    tc.validate(train.rows());

    const Rng master(cfg.seed, streams::pairs);
    const std::uint64_t base_seed = master.split(0).seed();
    TrainConfig bc = tc;
    bc.seed = base_seed;
    if (cfg.baseline_epochs) bc.max_epochs = *cfg.baseline_epochs;
    const auto baseline =
        train_model(build_model(make_model_spec(train, mains, {}, cfg.arch, cfg.distribution), train, base_seed),
                    train, val, bc);
    if (baseline.reason == StopReason::diverged)
        throw NumericError("baseline model diverged: " + baseline.message);
    r.baseline_val_nll = baseline.best_val_nll;
    r.selected_mains = mains;

    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    for (std::size_t i = 0; i < mains.size(); ++i)
        for (std::size_t j = i + 1; j < mains.size(); ++j) candidates.emplace_back(mains[i], mains[j]);

    std::vector<std::optional<PairDelta>> results(candidates.size());
    std::vector<std::string> errors(candidates.size());
    run_indexed(candidates.size(), cfg.jobs, [&](std::size_t c) {
        const auto [a, b] = candidates[c];
        const std::uint64_t seed = master.split(c + 1).seed();
        AnamModel m = baseline.model;
        const std::size_t pt = m.add_term(pair_term_spec(train, a, b, cfg.arch), train, seed);
        center_terms(m, train);
        std::vector<bool> trainable(m.terms().size(), false);
        trainable[pt] = true;
        for (std::size_t t = 0; t < m.terms().size(); ++t) {
            const auto& f = m.term(t).spec().features;
            if (f.size() == 1 && (f[0] == a || f[0] == b)) trainable[t] = true;
        }
        TrainConfig pc = tc;
        pc.seed = seed;
        const auto res = train_model(m, train, val, pc, {trainable, true});
        if (res.reason == StopReason::diverged) {
            errors[c] = res.message;
            return;
        }
        results[c] = PairDelta{a, b, m.term_name(pt), res.best_val_nll, baseline.best_val_nll - res.best_val_nll,
                               res.best_epoch};
    });

    r.pair_deltas.clear();
    std::size_t dropped = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (results[c]) {
            r.pair_deltas.push_back(*results[c]);
        } else {
            ++dropped;
            r.warnings.push_back("pair candidate " + train.feature(candidates[c].first).name + ":" +
                                 train.feature(candidates[c].second).name + " diverged: " + errors[c]);
        }
    }
    if (2 * dropped > candidates.size())
        throw NumericError(std::to_string(dropped) + " of " + std::to_string(candidates.size()) +
                           " pair candidates diverged");
    std::stable_sort(r.pair_deltas.begin(), r.pair_deltas.end(),
                     [](const PairDelta& x, const PairDelta& y) { return x.delta > y.delta; });
    r.selected_pairs.clear();
    if (cfg.k2)
        for (std::size_t i = 0; i < std::min(*cfg.k2, r.pair_deltas.size()); ++i)
            r.selected_pairs.emplace_back(r.pair_deltas[i].a, r.pair_deltas[i].b);
    return r;
}

// --- stage 3 -----------------------------------------------------------------------

TrainResult fine_tune(const Dataset& train, const Dataset& val, const std::vector<std::size_t>& mains,
                      const std::vector<std::pair<std::size_t, std::size_t>>& pairs, const ArchitectureConfig& arch,
                      const DistributionSpec& dist, TrainConfig cfg) {
    cfg.penalties = true;
    const auto spec = make_model_spec(train, mains, pairs, arch, dist);
    return train_model(build_model(spec, train, cfg.seed), train, val, cfg);
}

// --- output ------------------------------------------------------------------------

nlohmann::json report_to_json(const SelectionReport& r) {
    nlohmann::json j;
    j["members_trained"] = r.members_trained;
    j["members_dropped"] = r.members_dropped;
    auto& ms = j["main_scores"] = nlohmann::json::array();
    for (const auto& s : r.main_scores) ms.push_back({{"feature", s.feature}, {"name", s.name}, {"score", s.score}});
    j["main_ranking"] = r.main_ranking;
    j["selected_mains"] = r.selected_mains;
    j["baseline_val_nll"] = r.baseline_val_nll ? nlohmann::json(*r.baseline_val_nll) : nlohmann::json();
    auto& pd = j["pair_deltas"] = nlohmann::json::array();
    for (const auto& d : r.pair_deltas)
        pd.push_back({{"a", d.a},
                      {"b", d.b},
                      {"name", d.name},
                      {"val_nll", d.val_nll},
                      {"delta", d.delta},
                      {"best_epoch", d.best_epoch}});
    auto& sp = j["selected_pairs"] = nlohmann::json::array();
    for (const auto& [a, b] : r.selected_pairs) sp.push_back({a, b});
    j["warnings"] = r.warnings;
    return j;
}

SelectionReport selection_report_from_json(const nlohmann::json& j) {
    try {
        SelectionReport r;
        r.members_trained = j.value("members_trained", std::size_t{0});
        r.members_dropped = j.value("members_dropped", std::size_t{0});
        for (const auto& s : j.at("main_scores"))
            r.main_scores.push_back({s.at("feature").get<std::size_t>(), s.at("name").get<std::string>(),
                                     s.at("score").get<double>()});
        r.main_ranking = j.at("main_ranking").get<std::vector<std::size_t>>();
        r.selected_mains = j.at("selected_mains").get<std::vector<std::size_t>>();
        if (j.contains("baseline_val_nll") && !j["baseline_val_nll"].is_null())
            r.baseline_val_nll = j["baseline_val_nll"].get<double>();
        if (j.contains("pair_deltas"))
            for (const auto& d : j["pair_deltas"])
                r.pair_deltas.push_back({d.at("a").get<std::size_t>(), d.at("b").get<std::size_t>(),
                                         d.at("name").get<std::string>(), d.at("val_nll").get<double>(),
                                         d.at("delta").get<double>(), d.value("best_epoch", 0)});
        if (j.contains("selected_pairs"))
            for (const auto& p : j["selected_pairs"])
                r.selected_pairs.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
        if (j.contains("warnings")) r.warnings = j["warnings"].get<std::vector<std::string>>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed selection report: ") + e.what());
    }
}

std::string format_main_scores_csv(const SelectionReport& r) {
    std::string out = "rank,feature,score,selected\n";
    for (std::size_t i = 0; i < r.main_ranking.size(); ++i) {
        const auto& s = r.main_scores.at(r.main_ranking[i]);
        const bool sel = std::find(r.selected_mains.begin(), r.selected_mains.end(), s.feature) != r.selected_mains.end();
        out += std::to_string(i + 1) + "," + s.name + "," + fmt(s.score) + "," + (sel ? "1" : "0") + "\n";
    }
    return out;
}

std::string format_pair_deltas_csv(const SelectionReport& r) {
    std::string out = "rank,pair,val_nll,delta,selected\n";
    for (std::size_t i = 0; i < r.pair_deltas.size(); ++i) {
        const auto& d = r.pair_deltas[i];
        const bool sel = std::find(r.selected_pairs.begin(), r.selected_pairs.end(), std::pair{d.a, d.b}) !=
                         r.selected_pairs.end();
        out += std::to_string(i + 1) + "," + d.name + "," + fmt(d.val_nll) + "," + fmt(d.delta) + "," +
               (sel ? "1" : "0") + "\n";
    }
    return out;
}

}  // namespace anam
