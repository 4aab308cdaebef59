#include "anam/model.hpp"

#include "anam/errors.hpp"
#include "anam/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>

namespace anam {

namespace {

constexpr std::size_t kChunk = 8192;

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> r(n);
    std::iota(r.begin(), r.end(), std::size_t{0});
    return r;
}

std::vector<std::span<const double>> as_spans(const std::vector<std::vector<double>>& cols) {
    return {cols.begin(), cols.end()};
}

}  // namespace

bool TermSpec::any_monotone() const {
    return std::any_of(monotone.begin(), monotone.end(), [](Monotonicity m) { return m != Monotonicity::none; });
}

std::vector<FeatureInfo> feature_info(const Dataset& ds) {
    std::vector<FeatureInfo> out;
    for (std::size_t j = 0; j < ds.num_features(); ++j) {
        const auto& f = ds.feature(j);
        FeatureInfo info{f.name, f.kind, f.levels, 0.0, 1.0};
        const auto col = ds.column(j);
        if (f.categorical()) {
            info.min = 0.0;
            info.max = f.level_count() - 1;
        } else if (!col.empty()) {
            const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
            info.min = *lo;
            info.max = *hi;
        }
        out.push_back(std::move(info));
    }
    return out;
}

// --- Term --------------------------------------------------------------------

Term::Term(TermSpec spec, std::variant<MlpShape, LatticeShape> shape)
    : spec_(std::move(spec)), shape_(std::move(shape)) {
    weight_trainable = !is_lattice();
}

std::size_t Term::num_params() const {
    if (const auto* m = std::get_if<MlpShape>(&shape_)) return m->net.size();
    const auto& l = std::get<LatticeShape>(shape_);
    std::size_t n = l.lattice.values.size();
    for (const auto& c : l.calibrators)
        if (c) n += c->size();
    return n;
}

std::vector<double> Term::flat_params() const {
    std::vector<double> out;
    out.reserve(num_params());
    if (const auto* m = std::get_if<MlpShape>(&shape_)) {
        out.assign(m->net.values().begin(), m->net.values().end());
        return out;
    }
    const auto& l = std::get<LatticeShape>(shape_);
    for (const auto& c : l.calibrators)
        if (c) out.insert(out.end(), c->outputs().begin(), c->outputs().end());
    out.insert(out.end(), l.lattice.values.begin(), l.lattice.values.end());
    return out;
}

void Term::set_flat_params(std::span<const double> flat) {
    if (flat.size() != num_params()) throw ConfigError("parameter vector has wrong size");
    for_each_param([&](double& v, std::size_t k) { v = flat[k]; });
}

void Term::forward(std::span<const std::span<const double>> inputs, std::vector<double>& out,
                   TermCache* cache) const {
    if (inputs.size() != spec_.features.size()) throw ConfigError("term input count mismatch");
    const std::size_t B = inputs.empty() ? 0 : inputs[0].size();
    out.resize(B);

    if (const auto* m = std::get_if<MlpShape>(&shape_)) {
        Eigen::MatrixXd x(m->net.input_dim(), static_cast<Eigen::Index>(B));
        Eigen::Index row = 0;
        for (std::size_t d = 0; d < inputs.size(); ++d) {
            const int levels = m->level_counts[d];
            if (levels == 0) {
                for (std::size_t i = 0; i < B; ++i) x(row, static_cast<Eigen::Index>(i)) = inputs[d][i];
                ++row;
            } else {
                x.middleRows(row, levels).setZero();
                for (std::size_t i = 0; i < B; ++i)
                    x(row + static_cast<Eigen::Index>(inputs[d][i]), static_cast<Eigen::Index>(i)) = 1.0;
                row += levels;
            }
        }
        Eigen::RowVectorXd o;
        mlp_forward(m->net, x, o, cache ? &cache->mlp : nullptr);
        std::copy(o.data(), o.data() + o.size(), out.begin());
        return;
    }

    const auto& l = std::get<LatticeShape>(shape_);
    const std::size_t D = l.lattice.dims();
    if (cache) {
        cache->cal.resize(B * D);
        cache->lat.resize(B);
    }
    std::array<double, 2> scaled{};
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t d = 0; d < D; ++d) {
            if (l.calibrators[d]) {
                const auto r = l.calibrators[d]->calibrate(inputs[d][i]);
                scaled[d] = r.scaled;
                if (cache) cache->cal[i * D + d] = r;
            } else {
                scaled[d] = inputs[d][i];
            }
        }
        const auto e = lattice_eval(l.lattice, std::span<const double>(scaled.data(), D));
        out[i] = e.value;
        if (cache) cache->lat[i] = e;
    }
}

void Term::backward(const TermCache& cache, std::span<const double> upstream, std::span<double> grad) const {
    if (grad.size() != num_params()) throw ConfigError("term gradient buffer has wrong size");
    if (const auto* m = std::get_if<MlpShape>(&shape_)) {
        const Eigen::RowVectorXd up =
            Eigen::Map<const Eigen::RowVectorXd>(upstream.data(), static_cast<Eigen::Index>(upstream.size()));
        mlp_backward(m->net, cache.mlp, up, grad);
        return;
    }
    const auto& l = std::get<LatticeShape>(shape_);
    const std::size_t D = l.lattice.dims();
    std::array<std::size_t, 2> cal_offset{};
    std::size_t off = 0;
    for (std::size_t d = 0; d < D; ++d) {
        cal_offset[d] = off;
        if (l.calibrators[d]) off += l.calibrators[d]->size();
    }
    const std::size_t lat_offset = off;
    for (std::size_t i = 0; i < upstream.size(); ++i) {
        const double g = upstream[i];
        if (g == 0.0) continue;
        const auto& e = cache.lat[i];
        for (int k = 0; k < e.count; ++k) grad[lat_offset + e.index[k]] += g * e.weight[k];
        for (std::size_t d = 0; d < D; ++d) {
            if (!l.calibrators[d]) continue;
            const auto& r = cache.cal[i * D + d];
            const double gd = g * e.dinput[d];
            for (int k = 0; k < r.count; ++k) grad[cal_offset[d] + r.index[k]] += gd * r.weight[k];
        }
    }
}

void Term::project(int max_iterations, double tolerance) {
    auto* l = std::get_if<LatticeShape>(&shape_);
    if (!l) return;
    const auto cs = build_constraints(l->lattice);
    if (!cs.empty()) dykstra_project(l->lattice.values, cs, max_iterations, tolerance);
    for (auto& c : l->calibrators)
        if (c) c->project(max_iterations, tolerance);
}

double Term::constraint_violation() const {
    const auto* l = std::get_if<LatticeShape>(&shape_);
    if (!l) return 0.0;
    double worst = max_violation(l->lattice.values, build_constraints(l->lattice));
    for (const auto& c : l->calibrators)
        if (c && c->monotonic()) worst = std::max(worst, max_violation(c->outputs(), chain_constraints(c->size())));
    return worst;
}

bool Term::operator==(const Term& o) const {
    return spec_.features == o.spec_.features && spec_.backend == o.spec_.backend && weight == o.weight &&
           center == o.center && weight_trainable == o.weight_trainable && flat_params() == o.flat_params();
}

// --- AnamModel ---------------------------------------------------------------

AnamModel::AnamModel(std::vector<FeatureInfo> features, DistributionSpec distribution, bool uses_offset,
                     ClipBounds clip)
    : features_(std::move(features)), distribution_(distribution), uses_offset_(uses_offset), clip_(clip) {
    distribution_.validate();
    if (!(clip_.lo > 0.0) || !(clip_.hi > clip_.lo)) throw ConfigError("invalid clip bounds");
}

std::size_t AnamModel::add_term(const TermSpec& in, const Dataset& train, std::uint64_t seed) {
    TermSpec spec = in;
    if (spec.features.empty() || spec.features.size() > 2) throw ConfigError("a term has one or two features");
    for (auto f : spec.features)
        if (f >= features_.size()) throw ConfigError("term feature index out of range");
    if (spec.is_pair() && spec.features[0] == spec.features[1]) throw ConfigError("pair features must be distinct");
    spec.monotone.resize(spec.features.size(), Monotonicity::none);
    if (spec.any_monotone() && spec.backend != Backend::lattice)
        throw ConfigError("monotone terms require the lattice backend");
    if (spec.smooth) {
        if (spec.is_pair()) throw ConfigError("smoothness applies to main effects only");
        if (features_[spec.features[0]].categorical())
            throw ConfigError("smoothness is undefined for categorical feature '" + features_[spec.features[0]].name +
                              "'");
    }
    const std::string name = [&] {
        std::string n;
        for (auto f : spec.features) n += (n.empty() ? "" : ":") + features_[f].name;
        return n;
    }();
    if (find_term(name)) throw ConfigError("duplicate term '" + name + "'");

    if (spec.backend == Backend::mlp) {
        MlpShape shape;
        int input_dim = 0;
        for (auto f : spec.features) {
            const int k = features_[f].categorical() ? static_cast<int>(features_[f].levels.size()) : 0;
            shape.level_counts.push_back(k);
            input_dim += k == 0 ? 1 : k;
        }
        spec.mlp.input_dim = input_dim;
        spec.mlp.seed = seed;
        shape.net = init_glorot(spec.mlp);
        terms_.emplace_back(spec, std::move(shape));
    } else {
        LatticeShape shape;
        std::vector<int> sizes;
        for (std::size_t d = 0; d < spec.features.size(); ++d) {
            const auto f = spec.features[d];
            if (features_[f].categorical()) {
                const int m = static_cast<int>(features_[f].levels.size());
                if (m < 2) throw ConfigError("lattice over a single-level categorical feature");
                sizes.push_back(m);
                shape.calibrators.emplace_back(std::nullopt);
            } else {
                if (spec.lattice_vertices < 2) throw ConfigError("lattice needs at least two vertices");
                sizes.push_back(spec.lattice_vertices);
                const bool mono = spec.direction(d) != Monotonicity::none;
                if (train.rows() > 0) {
                    shape.calibrators.emplace_back(
                        Calibrator::from_quantiles(train.column(f), spec.calibrator_knots, spec.lattice_vertices, mono));
                } else {
                    shape.calibrators.emplace_back(
                        Calibrator::min_max(features_[f].min, features_[f].max, spec.lattice_vertices, mono));
                }
            }
        }
        shape.lattice = init_lattice(sizes, spec.monotone);
        terms_.emplace_back(spec, std::move(shape));
    }
    return terms_.size() - 1;
}

void AnamModel::add_term(Term term) {
    for (auto f : term.spec().features)
        if (f >= features_.size()) throw ConfigError("term feature index out of range");
    terms_.push_back(std::move(term));
}

std::string AnamModel::term_name(std::size_t t) const {
    std::string n;
    for (auto f : terms_.at(t).spec().features) n += (n.empty() ? "" : ":") + features_.at(f).name;
    return n;
}

std::optional<std::size_t> AnamModel::find_term(std::string_view name) const {
    for (std::size_t t = 0; t < terms_.size(); ++t)
        if (term_name(t) == name) return t;
    return std::nullopt;
}

void AnamModel::check_heredity() const {
    std::set<std::size_t> mains;
    for (const auto& t : terms_)
        if (!t.spec().is_pair()) mains.insert(t.spec().features[0]);
    for (std::size_t t = 0; t < terms_.size(); ++t) {
        const auto& s = terms_[t].spec();
        if (!s.is_pair()) continue;
        for (auto f : s.features)
            if (!mains.count(f))
                throw ConfigError("pair term '" + term_name(t) + "' violates strong heredity: no main term for '" +
                                  features_[f].name + "'");
    }
}

void AnamModel::check_schema(const Dataset& ds) const {
    if (ds.num_features() != features_.size())
        throw DataError("dataset has " + std::to_string(ds.num_features()) + " features, model expects " +
                        std::to_string(features_.size()));
    for (std::size_t j = 0; j < features_.size(); ++j) {
        const auto& f = ds.feature(j);
        if (f.name != features_[j].name || f.kind != features_[j].kind || f.levels != features_[j].levels)
            throw DataError("dataset feature '" + f.name + "' does not match model feature '" + features_[j].name + "'");
    }
    if (uses_offset_ && !ds.has_exposure()) throw DataError("model uses an exposure offset but data has no exposure");
}

std::vector<std::vector<double>> AnamModel::term_inputs(std::size_t t, const Dataset& ds,
                                                        std::span<const std::size_t> rows) const {
    const auto& feats = terms_.at(t).spec().features;
    std::vector<std::vector<double>> cols(feats.size());
    for (std::size_t d = 0; d < feats.size(); ++d) {
        const auto col = ds.column(feats[d]);
        cols[d].reserve(rows.size());
        for (auto r : rows) cols[d].push_back(col[r]);
    }
    return cols;
}

std::size_t AnamModel::num_params() const {
    std::size_t n = 1;
    for (const auto& t : terms_) n += t.num_params() + (t.weight_trainable ? 1 : 0);
    return n;
}

bool AnamModel::operator==(const AnamModel& o) const {
    return bias == o.bias && terms_ == o.terms_ && uses_offset_ == o.uses_offset_ &&
           distribution_.family == o.distribution_.family && distribution_.dispersion == o.distribution_.dispersion;
}

// --- construction and prediction ---------------------------------------------

AnamModel build_model(const ModelSpec& spec, const Dataset& train, std::uint64_t seed) {
    if (spec.uses_offset && !train.has_exposure()) throw DataError("offset model needs exposure data");
    AnamModel model(feature_info(train), spec.distribution, spec.uses_offset, spec.clip);
    Rng rng(seed, streams::init);
    for (const auto& ts : spec.terms) model.add_term(ts, train, rng());
    model.check_heredity();

    if (train.rows() > 0) {
        double sy = 0.0, se = 0.0;
        for (std::size_t i = 0; i < train.rows(); ++i) {
            sy += train.response()[i];
            se += spec.uses_offset ? train.exposure()[i] : 1.0;
        }
        model.bias = sy > 0.0 ? std::log(sy / se) : 0.0;
        center_terms(model, train);
    }
    return model;
}

std::vector<std::vector<double>> raw_term_values(const AnamModel& model, const Dataset& ds,
                                                 std::span<const std::size_t> rows) {
    std::vector<std::vector<double>> out(model.terms().size());
    std::vector<double> buf;
    for (std::size_t t = 0; t < model.terms().size(); ++t) {
        out[t].reserve(rows.size());
        for (std::size_t start = 0; start < rows.size(); start += kChunk) {
            const auto chunk = rows.subspan(start, std::min(kChunk, rows.size() - start));
            const auto cols = model.term_inputs(t, ds, chunk);
            const auto spans = as_spans(cols);
            model.term(t).forward(spans, buf);
            out[t].insert(out[t].end(), buf.begin(), buf.end());
        }
    }
    return out;
}

BatchPrediction predict_rows(const AnamModel& model, const Dataset& ds, std::span<const std::size_t> rows) {
    model.check_schema(ds);
    BatchPrediction p;
    p.contributions = raw_term_values(model, ds, rows);
    const std::size_t n = rows.size();
    p.eta.assign(n, model.bias);
    for (std::size_t t = 0; t < model.terms().size(); ++t) {
        const auto& term = model.term(t);
        auto& c = p.contributions[t];
        for (std::size_t i = 0; i < n; ++i) {
            c[i] = term.weight * (c[i] - term.center);
            p.eta[i] += c[i];
        }
    }
    p.mu.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (model.uses_offset()) p.eta[i] += std::log(ds.exposure()[rows[i]]);
        p.mu[i] = link_apply(model.distribution().link, p.eta[i], model.clip());
    }
    return p;
}

BatchPrediction predict_batch(const AnamModel& model, const Dataset& ds) {
    const auto rows = all_rows(ds.rows());
    return predict_rows(model, ds, rows);
}

Prediction predict(const AnamModel& model, std::span<const double> x, std::optional<double> exposure) {
    if (x.size() != model.features().size()) throw DataError("feature vector length does not match the model schema");
    for (std::size_t j = 0; j < x.size(); ++j) {
        const auto& f = model.features()[j];
        if (!std::isfinite(x[j])) throw DataError("non-finite value for feature '" + f.name + "'");
        if (f.categorical() && (x[j] < 0 || x[j] >= static_cast<double>(f.levels.size()) || std::floor(x[j]) != x[j]))
            throw DataError("invalid level index for feature '" + f.name + "'");
    }
    if (model.uses_offset() && !exposure) throw DataError("exposure is required by this model");
    if (exposure && !(*exposure > 0.0)) throw DataError("exposure must be positive");

    Prediction p;
    p.eta = model.bias;
    std::vector<double> buf;
    for (const auto& term : model.terms()) {
        std::vector<std::span<const double>> in;
        for (auto f : term.spec().features) in.emplace_back(&x[f], 1);
        term.forward(in, buf);
        const double c = term.weight * (buf[0] - term.center);
        p.contributions.push_back(c);
        p.eta += c;
    }
    if (model.uses_offset()) p.eta += std::log(*exposure);
    p.mu = link_apply(model.distribution().link, p.eta, model.clip());
    return p;
}

void center_terms(AnamModel& model, const Dataset& train) {
    if (train.rows() == 0) throw DataError("cannot centre terms on an empty dataset");
    const auto rows = all_rows(train.rows());
    const auto raw = raw_term_values(model, train, rows);
    for (std::size_t t = 0; t < model.terms().size(); ++t) {
        auto& term = model.terms()[t];
        double sum = 0.0;
        for (double v : raw[t]) sum += v;
        const double c = sum / static_cast<double>(raw[t].size());
        model.bias += term.weight * (c - term.center);
        term.center = c;
    }
}

std::vector<TermImportance> importance(const AnamModel& model, const Dataset& data) {
    if (data.rows() < 2) throw DataError("importance needs at least two rows");
    const auto p = predict_batch(model, data);
    std::vector<TermImportance> out;
    for (std::size_t t = 0; t < model.terms().size(); ++t) {
        double ss = 0.0;
        for (double c : p.contributions[t]) ss += c * c;
        out.push_back({t, model.term_name(t), ss / static_cast<double>(data.rows() - 1)});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    return out;
}

ShapeGrid export_shape_grid(const AnamModel& model, std::size_t t, std::size_t resolution) {
    if (t >= model.terms().size()) throw ConfigError("unknown term index " + std::to_string(t));
    if (resolution < 2) throw ConfigError("grid resolution must be at least 2");
    const auto& term = model.term(t);
    const auto& feats = term.spec().features;

    ShapeGrid g;
    std::vector<std::vector<double>> axes;
    for (auto f : feats) {
        const auto& info = model.features()[f];
        g.input_names.push_back(info.name);
        g.categorical.push_back(info.categorical());
        g.levels.push_back(info.levels);
        std::vector<double> axis;
        if (info.categorical()) {
            for (std::size_t l = 0; l < info.levels.size(); ++l) axis.push_back(static_cast<double>(l));
        } else {
            for (std::size_t i = 0; i < resolution; ++i)
                axis.push_back(info.min + (info.max - info.min) * static_cast<double>(i) / (resolution - 1));
        }
        axes.push_back(std::move(axis));
    }

    std::vector<std::vector<double>> cols(feats.size());
    if (feats.size() == 1) {
        cols[0] = axes[0];
    } else {
        for (double a : axes[0])
            for (double b : axes[1]) {
                cols[0].push_back(a);
                cols[1].push_back(b);
            }
    }
    std::vector<double> raw;
    const auto spans = as_spans(cols);
    term.forward(spans, raw);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        std::vector<double> in;
        for (const auto& c : cols) in.push_back(c[i]);
        g.inputs.push_back(std::move(in));
        g.values.push_back(term.weight * (raw[i] - term.center));
    }
    return g;
}

std::string format_shape_grid_csv(const ShapeGrid& g) {
    auto fmt = [](double v) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, res.ptr);
    };
    std::string out;
    for (const auto& n : g.input_names) out += n + ",";
    out += "value\n";
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        for (std::size_t d = 0; d < g.inputs[i].size(); ++d) {
            if (g.categorical[d])
                out += g.levels[d][static_cast<std::size_t>(g.inputs[i][d])];
            else
                out += fmt(g.inputs[i][d]);
            out += ",";
        }
        out += fmt(g.values[i]) + "\n";
    }
    return out;
}

std::vector<double> multi_output_predict(const MultiOutputModel& models, std::span<const double> x,
                                         std::optional<double> exposure) {
    if (models.heads.empty()) throw ConfigError("multi-output model needs at least one head");
    const auto& ref = models.heads.front().features();
    std::vector<double> out;
    for (const auto& head : models.heads) {
        const auto& f = head.features();
        if (f.size() != ref.size()) throw DataError("multi-output heads do not share a schema");
        for (std::size_t j = 0; j < f.size(); ++j)
            if (f[j].name != ref[j].name || f[j].kind != ref[j].kind || f[j].levels != ref[j].levels)
                throw DataError("multi-output heads do not share a schema");
        out.push_back(predict(head, x, head.uses_offset() ? exposure : std::nullopt).mu);
    }
    return out;
}

double gamma_nll_from_heads(std::span<const double> heads, double y) {
    if (heads.size() < 2) throw ConfigError("gamma heads need a mean and a dispersion output");
    return gamma_nll(y, heads[0], heads[1]).loss;
}

}  // namespace anam
