#include "anam/archive.hpp"

#include "anam/errors.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace anam {

using nlohmann::json;

std::string hex_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

double parse_hex_double(const std::string& s) {
    if (s.empty()) throw DataError("empty number in archive");
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) throw DataError("malformed number '" + s + "' in archive");
    return v;
}

namespace {

json hex_array(std::span<const double> v) {
    json a = json::array();
    for (double x : v) a.push_back(hex_double(x));
    return a;
}

std::vector<double> from_hex_array(const json& a) {
    std::vector<double> v;
    for (const auto& x : a) v.push_back(parse_hex_double(x.get<std::string>()));
    return v;
}

double hx(const json& j, const char* key) {
    return parse_hex_double(j.at(key).get<std::string>());
}

json spec_to_json(const TermSpec& s) {
    json j;
    j["features"] = s.features;
    j["backend"] = s.backend == Backend::mlp ? "mlp" : "lattice";
    j["mlp"] = {{"hidden_layers", s.mlp.hidden_layers},
                {"first_hidden_width", s.mlp.first_hidden_width},
                {"input_dim", s.mlp.input_dim},
                {"activation", s.mlp.activation.kind == Activation::Kind::linear ? "linear" : "leaky_relu"},
                {"slope", hex_double(s.mlp.activation.slope)},
                {"seed", s.mlp.seed}};
    j["lattice_vertices"] = s.lattice_vertices;
    j["calibrator_knots"] = s.calibrator_knots;
    json mono = json::array();
    for (auto m : s.monotone) mono.push_back(to_string(m));
    j["monotone"] = mono;
    j["smooth"] = s.smooth;
    return j;
}

TermSpec spec_from_json(const json& j) {
    TermSpec s;
    s.features = j.at("features").get<std::vector<std::size_t>>();
    const auto backend = j.at("backend").get<std::string>();
    if (backend != "mlp" && backend != "lattice") throw DataError("unknown backend '" + backend + "'");
    s.backend = backend == "mlp" ? Backend::mlp : Backend::lattice;
    const auto& m = j.at("mlp");
    s.mlp.hidden_layers = m.at("hidden_layers").get<int>();
    s.mlp.first_hidden_width = m.at("first_hidden_width").get<int>();
    s.mlp.input_dim = m.at("input_dim").get<int>();
    s.mlp.activation.kind =
        m.at("activation").get<std::string>() == "linear" ? Activation::Kind::linear : Activation::Kind::leaky_relu;
    s.mlp.activation.slope = hx(m, "slope");
    s.mlp.seed = m.at("seed").get<std::uint64_t>();
    s.lattice_vertices = j.at("lattice_vertices").get<int>();
    s.calibrator_knots = j.at("calibrator_knots").get<int>();
    for (const auto& x : j.at("monotone")) s.monotone.push_back(monotonicity_from_string(x.get<std::string>()));
    s.smooth = j.at("smooth").get<bool>();
    return s;
}

json term_to_json(const Term& t) {
    json j;
    j["spec"] = spec_to_json(t.spec());
    j["weight"] = hex_double(t.weight);
    j["center"] = hex_double(t.center);
    j["weight_trainable"] = t.weight_trainable;
    if (const auto* m = std::get_if<MlpShape>(&t.shape())) {
        j["mlp"] = {{"dims", m->net.dims()},
                    {"activation", m->net.activation().kind == Activation::Kind::linear ? "linear" : "leaky_relu"},
                    {"slope", hex_double(m->net.activation().slope)},
                    {"level_counts", m->level_counts},
                    {"values", hex_array(m->net.values())}};
    } else {
        const auto& l = std::get<LatticeShape>(t.shape());
        json dirs = json::array();
        for (auto d : l.lattice.directions) dirs.push_back(to_string(d));
        json cals = json::array();
        for (const auto& c : l.calibrators) {
            if (!c) {
                cals.push_back(nullptr);
                continue;
            }
            cals.push_back({{"knots", hex_array(c->knots())},
                            {"outputs", hex_array(c->outputs())},
                            {"max_output", hex_double(c->max_output())},
                            {"monotonic", c->monotonic()}});
        }
        j["lattice"] = {{"sizes", l.lattice.sizes},
                        {"directions", dirs},
                        {"values", hex_array(l.lattice.values)},
                        {"calibrators", cals}};
    }
    return j;
}

Term term_from_json(const json& j) {
    TermSpec spec = spec_from_json(j.at("spec"));
    Term term;
    if (j.contains("mlp")) {
        const auto& m = j["mlp"];
        Activation act;
        act.kind =
            m.at("activation").get<std::string>() == "linear" ? Activation::Kind::linear : Activation::Kind::leaky_relu;
        act.slope = hx(m, "slope");
        MlpShape shape{MlpParams(m.at("dims").get<std::vector<int>>(), act),
                       m.at("level_counts").get<std::vector<int>>()};
        const auto values = from_hex_array(m.at("values"));
        if (values.size() != shape.net.size()) throw DataError("MLP parameter count mismatch in archive");
        std::copy(values.begin(), values.end(), shape.net.values().begin());
        term = Term(std::move(spec), std::move(shape));
    } else {
        const auto& l = j.at("lattice");
        LatticeShape shape;
        shape.lattice.sizes = l.at("sizes").get<std::vector<int>>();
        for (const auto& d : l.at("directions"))
            shape.lattice.directions.push_back(monotonicity_from_string(d.get<std::string>()));
        shape.lattice.values = from_hex_array(l.at("values"));
        shape.lattice.validate();
        for (const auto& c : l.at("calibrators")) {
            if (c.is_null()) {
                shape.calibrators.emplace_back(std::nullopt);
                continue;
            }
            shape.calibrators.emplace_back(Calibrator(from_hex_array(c.at("knots")), from_hex_array(c.at("outputs")),
                                                      hx(c, "max_output"), c.at("monotonic").get<bool>()));
        }
        if (shape.calibrators.size() != shape.lattice.dims()) throw DataError("calibrator count mismatch in archive");
        term = Term(std::move(spec), std::move(shape));
    }
    term.weight = hx(j, "weight");
    term.center = hx(j, "center");
    term.weight_trainable = j.at("weight_trainable").get<bool>();
    return term;
}

}  // namespace

json model_to_json(const AnamModel& model) {
    json j;
    json feats = json::array();
    for (const auto& f : model.features())
        feats.push_back({{"name", f.name},
                         {"kind", f.categorical() ? "categorical" : "continuous"},
                         {"levels", f.levels},
                         {"min", hex_double(f.min)},
                         {"max", hex_double(f.max)}});
    j["features"] = feats;
    const auto& d = model.distribution();
    j["distribution"] = {{"family", to_string(d.family)}, {"dispersion", hex_double(d.dispersion)}, {"link", "log"}};
    j["uses_offset"] = model.uses_offset();
    j["clip"] = {{"lo", hex_double(model.clip().lo)}, {"hi", hex_double(model.clip().hi)}};
    j["bias"] = hex_double(model.bias);
    json terms = json::array();
    for (const auto& t : model.terms()) terms.push_back(term_to_json(t));
    j["terms"] = terms;
    return j;
}

AnamModel model_from_json(const json& j) {
    std::vector<FeatureInfo> feats;
    for (const auto& f : j.at("features")) {
        FeatureInfo fi;
        fi.name = f.at("name").get<std::string>();
        const auto kind = f.at("kind").get<std::string>();
        if (kind != "continuous" && kind != "categorical") throw DataError("unknown feature kind '" + kind + "'");
        fi.kind = kind == "categorical" ? ColumnKind::categorical : ColumnKind::continuous;
        fi.levels = f.at("levels").get<std::vector<std::string>>();
        fi.min = hx(f, "min");
        fi.max = hx(f, "max");
        feats.push_back(std::move(fi));
    }
    const auto& d = j.at("distribution");
    DistributionSpec dist;
    dist.family = family_from_string(d.at("family").get<std::string>());
    dist.dispersion = hx(d, "dispersion");
    if (d.at("link").get<std::string>() != "log") throw DataError("unsupported link in archive");
    dist.validate();
    ClipBounds clip{hx(j.at("clip"), "lo"), hx(j.at("clip"), "hi")};
    AnamModel model(std::move(feats), dist, j.at("uses_offset").get<bool>(), clip);
    model.bias = hx(j, "bias");
    for (const auto& t : j.at("terms")) model.add_term(term_from_json(t));
    model.check_heredity();
    return model;
}

json train_config_to_json(const TrainConfig& c) {
    return {{"learning_rate", hex_double(c.learning_rate)},
            {"max_epochs", c.max_epochs},
            {"convergence_threshold", hex_double(c.convergence_threshold)},
            {"batch_size", c.batch_size},
            {"patience", c.patience},
            {"penalties", c.penalties},
            {"omega_smooth", hex_double(c.omega_smooth)},
            {"omega_mc", hex_double(c.omega_mc)},
            {"smooth_grid_size", c.smooth_grid_size},
            {"dykstra_iterations", c.dykstra_iterations},
            {"dykstra_tolerance", hex_double(c.dykstra_tolerance)},
            {"final_dykstra_iterations", c.final_dykstra_iterations},
            {"final_dykstra_tolerance", hex_double(c.final_dykstra_tolerance)},
            {"optimizer", to_string(c.optimizer)},
            {"beta1", hex_double(c.beta1)},
            {"beta2", hex_double(c.beta2)},
            {"epsilon", hex_double(c.epsilon)},
            {"rho", hex_double(c.rho)},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.learning_rate = hx(j, "learning_rate");
    c.max_epochs = j.at("max_epochs").get<int>();
    c.convergence_threshold = hx(j, "convergence_threshold");
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.patience = j.at("patience").get<int>();
    c.penalties = j.at("penalties").get<bool>();
    c.omega_smooth = hx(j, "omega_smooth");
    c.omega_mc = hx(j, "omega_mc");
    c.smooth_grid_size = j.at("smooth_grid_size").get<std::size_t>();
    c.dykstra_iterations = j.at("dykstra_iterations").get<int>();
    c.dykstra_tolerance = hx(j, "dykstra_tolerance");
    c.final_dykstra_iterations = j.at("final_dykstra_iterations").get<int>();
    c.final_dykstra_tolerance = hx(j, "final_dykstra_tolerance");
    c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
    c.beta1 = hx(j, "beta1");
    c.beta2 = hx(j, "beta2");
    c.epsilon = hx(j, "epsilon");
    c.rho = hx(j, "rho");
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

json history_digest(const TrainResult& r) {
    const std::string csv = format_history_csv(r.history);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : csv) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    json j = {{"epochs", r.history.size()},
              {"best_epoch", r.best_epoch},
              {"stop_reason", to_string(r.reason)},
              {"history_fnv1a", buf}};
    if (std::isfinite(r.best_val_nll)) j["best_val_nll"] = hex_double(r.best_val_nll);
    return j;
}

std::string serialize_archive(const ModelArchive& a) {
    json j;
    j["format_version"] = a.version;
    j["schema"] = schema_to_json(a.schema);
    j["model"] = model_to_json(a.model);
    j["preprocess"] = a.preprocess ? report_to_json(*a.preprocess) : json();
    j["train_config"] = train_config_to_json(a.train_config);
    j["fitted_dispersion"] = a.fitted_dispersion ? json(hex_double(*a.fitted_dispersion)) : json();
    j["history"] = a.history_digest;
    return j.dump(1) + "\n";
}

ModelArchive parse_archive(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("model archive is not valid JSON: ") + e.what());
    }
    try {
        ModelArchive a;
        a.version = j.at("format_version").get<int>();
        if (a.version > kArchiveVersion || a.version < 1)
            throw DataError("model archive format version " + std::to_string(a.version) +
                            " is not supported (this build reads up to " + std::to_string(kArchiveVersion) + ")");
        a.schema = schema_from_json(j.at("schema"));
        a.model = model_from_json(j.at("model"));
        if (!j.at("preprocess").is_null()) a.preprocess = report_from_json(j["preprocess"]);
        a.train_config = train_config_from_json(j.at("train_config"));
        if (!j.at("fitted_dispersion").is_null())
            a.fitted_dispersion = parse_hex_double(j["fitted_dispersion"].get<std::string>());
        a.history_digest = j.at("history");
        return a;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model archive: ") + e.what());
    }
}

void save_archive(const std::string& path, const ModelArchive& a) {
    write_file_atomic(path, serialize_archive(a));
}

ModelArchive load_archive(const std::string& path) {
    return parse_archive(read_file(path));
}

}  // namespace anam
