#include "anam/archive.hpp"
#include "anam/data.hpp"
#include "anam/errors.hpp"
#include "anam/metrics.hpp"
#include "anam/model.hpp"
#include "anam/plot.hpp"
#include "anam/selection.hpp"
#include "anam/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <charconv>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace anam;

namespace {

constexpr const char* kExitCodes =
    "Exit codes:\n"
    "  0  success\n"
    "  2  usage error: unknown flag, bad value, invalid configuration\n"
    "  3  data error: malformed CSV, schema mismatch, unknown level\n"
    "  4  numeric failure: divergence, non-finite values, rank-deficient design\n"
    "  5  I/O error: missing input file, unwritable output\n";

std::string fmt(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto p = s.find(sep, start);
        const auto item = s.substr(start, p == std::string::npos ? std::string::npos : p - start);
        if (!item.empty()) out.push_back(item);
        if (p == std::string::npos) break;
        start = p + 1;
    }
    return out;
}

std::string out_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

// Hyperparameters shared by the training subcommands.
struct Hyper {
    int main_layers = 2, main_width = 20;
    int pair_layers = 10, pair_width = 100;
    int calibrator_knots = 10;
    int lattice_vertices = 8;
    int main_lattice_vertices = 10;
    double omega_mc = 0.0, omega_smooth = 0.0;
    double lr = 1e-3;
    int epochs = 100;
    std::size_t batch = 1000;
    int patience = 10;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::string optimizer = "adam";
    std::string family = "gamma";
    double phi = 1.0;
    std::vector<std::string> monotone;  // NAME=increasing|decreasing
    bool smooth = false;

    void add_to(CLI::App* app) {
        app->add_option("--main-layers", main_layers, "Hidden layers of main-effect subnetworks")->capture_default_str();
        app->add_option("--main-width", main_width, "Width of the first main-effect hidden layer")->capture_default_str();
        app->add_option("--pair-layers", pair_layers, "Hidden layers of pair subnetworks")->capture_default_str();
        app->add_option("--pair-width", pair_width, "Width of the first pair hidden layer")->capture_default_str();
        app->add_option("--calibrator-knots", calibrator_knots, "Calibrator keypoints per lattice input")
            ->capture_default_str();
        app->add_option("--lattice-vertices", lattice_vertices, "Vertices per dimension of pair lattices")
            ->capture_default_str();
        app->add_option("--main-lattice-vertices", main_lattice_vertices, "Vertices of 1-D main-effect lattices")
            ->capture_default_str();
        app->add_option("--omega-mc", omega_mc, "Marginal-clarity penalty weight")->capture_default_str();
        app->add_option("--omega-smooth", omega_smooth, "Smoothness penalty weight")->capture_default_str();
        app->add_option("--lr", lr, "Learning rate")->capture_default_str();
        app->add_option("--epochs", epochs, "Maximum epochs")->capture_default_str();
        app->add_option("--batch", batch, "Minibatch size")->capture_default_str();
        app->add_option("--patience", patience, "Early-stopping patience in epochs")->capture_default_str();
        app->add_option("--seed", seed, "Master seed")->capture_default_str();
        app->add_option("--jobs", jobs, "Parallel workers for ensemble members and pair candidates")
            ->capture_default_str();
        app->add_option("--optimizer", optimizer, "adam or rmsprop")->capture_default_str();
        app->add_option("--family", family, "gamma or poisson")->capture_default_str();
        app->add_option("--phi", phi, "Gamma dispersion used in the training loss")->capture_default_str();
        app->add_option("--monotone", monotone, "Monotone feature, NAME=increasing|decreasing (repeatable)");
        app->add_flag("--smooth", smooth, "Apply the smoothness penalty to continuous main effects");
    }

    ArchitectureConfig arch() const {
        ArchitectureConfig a;
        a.main_mlp.hidden_layers = main_layers;
        a.main_mlp.first_hidden_width = main_width;
        a.pair_mlp.hidden_layers = pair_layers;
        a.pair_mlp.first_hidden_width = pair_width;
        a.calibrator_knots = calibrator_knots;
        a.pair_lattice_vertices = lattice_vertices;
        a.main_lattice_vertices = main_lattice_vertices;
        a.smooth_mains = smooth;
        for (const auto& m : monotone) {
            const auto eq = m.find('=');
            if (eq == std::string::npos) throw ConfigError("--monotone expects NAME=direction, got '" + m + "'");
            a.monotone[m.substr(0, eq)] = monotonicity_from_string(m.substr(eq + 1));
        }
        return a;
    }

    TrainConfig train() const {
        TrainConfig c;
        c.learning_rate = lr;
        c.max_epochs = epochs;
        c.batch_size = batch;
        c.patience = patience;
        c.omega_mc = omega_mc;
        c.omega_smooth = omega_smooth;
        c.optimizer = optimizer_from_string(optimizer);
        c.seed = seed;
        return c;
    }

    DistributionSpec distribution() const {
        DistributionSpec d;
        d.family = family_from_string(family);
        d.dispersion = phi;
        d.validate();
        return d;
    }
};

struct DataArgs {
    std::string train, val, schema;
    void add_to(CLI::App* app) {
        app->add_option("--train", train, "Training CSV")->required();
        app->add_option("--val", val, "Validation CSV")->required();
        app->add_option("--schema", schema, "Schema JSON")->required();
    }
};

std::size_t feature_by_name(const Dataset& ds, const std::string& name) {
    try {
        return ds.feature_index(name);
    } catch (const Error&) {
        throw ConfigError("unknown feature '" + name + "'");
    }
}

// Moves `--config FILE` values in front of the explicit arguments so that
// flags given on the command line take precedence.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::vector<std::string> out;
    std::string config;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config = args[i].substr(9);
        } else {
            out.push_back(args[i]);
        }
    }
    if (config.empty() || out.empty()) return out;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(config));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file '" + config + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    std::vector<std::string> injected;
    for (const auto& [key, value] : j.items()) {
        const std::string flag = "--" + key;
        if (value.is_boolean()) {
            if (value.get<bool>()) injected.push_back(flag);
        } else if (value.is_array()) {
            for (const auto& v : value) {
                injected.push_back(flag);
                injected.push_back(v.is_string() ? v.get<std::string>() : v.dump());
            }
        } else {
            injected.push_back(flag);
            injected.push_back(value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
    // Subcommand name first, then config values, then explicit flags.
    std::vector<std::string> merged{out.front()};
    merged.insert(merged.end(), injected.begin(), injected.end());
    merged.insert(merged.end(), out.begin() + 1, out.end());
    return merged;
}

// --- subcommands ------------------------------------------------------------------

void cmd_simulate(std::size_t n, double phi, double bias, std::uint64_t seed, const std::string& dir) {
    SyntheticConfig cfg;
    cfg.n = n;
    cfg.dispersion = phi;
    cfg.bias = bias;
    cfg.seed = seed;
    const auto sim = simulate(cfg);
    ensure_dir(dir);
    save_csv(out_path(dir, "data.csv"), sim.data);
    write_file_atomic(out_path(dir, "truth.csv"), format_ground_truth_csv(sim.truth));
    save_schema(out_path(dir, "schema.json"), sim.data.schema());
}

void cmd_preprocess(const std::string& data, const std::string& schema, const std::string& dir,
                    const PreprocessOptions& opts, const SplitSpec& spec) {
    const auto raw = load_csv(data, load_schema(schema));
    const auto pre = preprocess(raw, opts);
    const auto parts = split(pre.data, spec);
    ensure_dir(dir);
    save_csv(out_path(dir, "train.csv"), parts.train);
    save_csv(out_path(dir, "val.csv"), parts.val);
    save_csv(out_path(dir, "test.csv"), parts.test);
    save_schema(out_path(dir, "schema.json"), pre.data.schema());
    write_file_atomic(out_path(dir, "preprocess.json"), report_to_json(pre.report).dump(1) + "\n");
}

SelectionConfig selection_config(const Hyper& h, std::size_t ensemble, std::optional<std::size_t> k1,
                                 std::optional<std::size_t> k2) {
    SelectionConfig c;
    c.ensemble_size = ensemble;
    c.k1 = k1;
    c.k2 = k2;
    c.arch = h.arch();
    c.train = h.train();
    c.distribution = h.distribution();
    c.seed = h.seed;
    c.jobs = h.jobs;
    return c;
}

void write_report(const SelectionReport& r, const std::string& dir) {
    ensure_dir(dir);
    write_file_atomic(out_path(dir, "selection.json"), report_to_json(r).dump(1) + "\n");
    write_file_atomic(out_path(dir, "main_scores.csv"), format_main_scores_csv(r));
    if (r.baseline_val_nll) write_file_atomic(out_path(dir, "pair_deltas.csv"), format_pair_deltas_csv(r));
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Additive neural pricing models with monotone lattices and staged term selection"};
    app.footer(kExitCodes);
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--config", "JSON file of flag values (keys are long flag names); explicit flags win");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate the synthetic severity dataset");
    std::size_t sim_n = 50000;
    double sim_phi = 1.0, sim_bias = 7.5;
    std::uint64_t sim_seed = 0;
    std::string sim_out = ".";
    sim->add_option("--n", sim_n, "Rows")->capture_default_str();
    sim->add_option("--phi", sim_phi, "Gamma dispersion")->capture_default_str();
    sim->add_option("--bias", sim_bias, "Intercept of log mu")->capture_default_str();
    sim->add_option("--seed", sim_seed, "Seed")->capture_default_str();
    sim->add_option("--out-dir", sim_out, "Writes data.csv, truth.csv, schema.json")->capture_default_str();

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "Filter, standardize, encode and split a dataset");
    std::string pre_data, pre_schema, pre_out = ".";
    PreprocessOptions pre_opts;
    SplitSpec pre_split;
    pre->add_option("--data", pre_data, "Input CSV")->required();
    pre->add_option("--schema", pre_schema, "Schema JSON")->required();
    pre->add_option("--out-dir", pre_out, "Writes train/val/test CSVs, schema.json, preprocess.json")
        ->capture_default_str();
    pre->add_flag("--standardize", pre_opts.standardize, "Standardize continuous features");
    pre->add_flag("--one-hot", pre_opts.one_hot, "One-hot encode categorical features");
    pre->add_flag("--iqr-filter", pre_opts.iqr_filter, "Drop rows whose response lies outside 1.5 IQR");
    pre->add_option("--train-frac", pre_split.train_frac)->capture_default_str();
    pre->add_option("--val-frac", pre_split.val_frac)->capture_default_str();
    pre->add_option("--test-frac", pre_split.test_frac)->capture_default_str();
    pre->add_option("--seed", pre_split.seed, "Split seed")->capture_default_str();

    // select-main
    auto* sm = app.add_subcommand("select-main", "Stage 1: rank main effects with an ensemble");
    DataArgs sm_data;
    Hyper sm_h;
    std::size_t sm_n = 10;
    std::optional<std::size_t> sm_k1;
    std::string sm_out = ".";
    sm_data.add_to(sm);
    sm_h.add_to(sm);
    sm->add_option("--ensemble", sm_n, "Ensemble size")->capture_default_str();
    sm->add_option("--k1", sm_k1, "Keep the top K1 features (omit to only report scores)");
    sm->add_option("--out-dir", sm_out, "Writes selection.json and main_scores.csv")->capture_default_str();

    // select-pairs
    auto* sp = app.add_subcommand("select-pairs", "Stage 2: screen heredity-eligible pairs");
    DataArgs sp_data;
    Hyper sp_h;
    std::string sp_report, sp_mains, sp_out = ".";
    std::optional<std::size_t> sp_k2;
    std::optional<int> sp_baseline_epochs;
    sp_data.add_to(sp);
    sp_h.add_to(sp);
    sp->add_option("--report", sp_report, "Stage-1 selection.json (its selected mains are used)");
    sp->add_option("--mains", sp_mains, "Comma-separated main features (overrides --report)");
    sp->add_option("--k2", sp_k2, "Keep the top K2 pairs (omit to only report deltas)");
    sp->add_option("--baseline-epochs", sp_baseline_epochs, "Maximum epochs of the mains-only baseline (default --epochs)");
    sp->add_option("--out-dir", sp_out, "Writes selection.json and pair_deltas.csv")->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "Stage 3: train the final model with penalties");
    DataArgs tr_data;
    Hyper tr_h;
    std::string tr_report, tr_mains, tr_pairs, tr_model = "model.json", tr_history = "history.csv", tr_pre;
    tr_data.add_to(tr);
    tr_h.add_to(tr);
    tr->add_option("--report", tr_report, "Selection report with selected mains and pairs");
    tr->add_option("--mains", tr_mains, "Comma-separated main features (overrides --report)");
    tr->add_option("--pairs", tr_pairs, "Comma-separated pairs A:B (overrides --report)");
    tr->add_option("--preprocess-report", tr_pre, "preprocess.json to embed in the archive");
    tr->add_option("--model", tr_model, "Output model archive")->capture_default_str();
    tr->add_option("--history", tr_history, "Output training history CSV")->capture_default_str();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Test-set NLL, RMSE and MAE, optionally against a GLM");
    std::string ev_model, ev_test, ev_schema, ev_glm_train, ev_out = "metrics.csv";
    ev->add_option("--model", ev_model, "Model archive")->required();
    ev->add_option("--test", ev_test, "Test CSV")->required();
    ev->add_option("--schema", ev_schema, "Schema JSON")->required();
    ev->add_option("--glm-train", ev_glm_train, "Also fit a GLM on this training CSV and report it");
    ev->add_option("--out", ev_out, "Output metrics CSV")->capture_default_str();

    // predict
    auto* pr = app.add_subcommand("predict", "Per-row mean and per-term contributions");
    std::string pr_model, pr_data, pr_schema, pr_out = "predictions.csv";
    pr->add_option("--model", pr_model, "Model archive")->required();
    pr->add_option("--data", pr_data, "Input CSV")->required();
    pr->add_option("--schema", pr_schema, "Schema JSON")->required();
    pr->add_option("--out", pr_out, "Output CSV")->capture_default_str();

    // export-shapes
    auto* ex = app.add_subcommand("export-shapes", "Write every term's shape function on a grid");
    std::string ex_model, ex_out = "shapes";
    std::size_t ex_res = 100;
    ex->add_option("--model", ex_model, "Model archive")->required();
    ex->add_option("--resolution", ex_res, "Grid points per continuous input")->capture_default_str();
    ex->add_option("--out-dir", ex_out, "One CSV per term")->capture_default_str();

    // plot
    auto* pl = app.add_subcommand("plot", "Render shape-grid CSVs as SVG charts");
    std::vector<std::string> pl_in;
    std::string pl_out = "plots";
    pl->add_option("inputs", pl_in, "Shape-grid CSV files")->required();
    pl->add_option("--out-dir", pl_out, "Output directory")->capture_default_str();

    try {
        auto args = expand_config(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::Error& e) {
        app.exit(e);
        return 2;
    }

    if (*sim) {
        cmd_simulate(sim_n, sim_phi, sim_bias, sim_seed, sim_out);
    } else if (*pre) {
        pre_split.validate();
        cmd_preprocess(pre_data, pre_schema, pre_out, pre_opts, pre_split);
    } else if (*sm) {
        const auto schema = load_schema(sm_data.schema);
        const auto train = load_csv(sm_data.train, schema);
        const auto val = load_csv(sm_data.val, schema);
        const auto r = select_main(train, val, selection_config(sm_h, sm_n, sm_k1, std::nullopt));
        write_report(r, sm_out);
        for (auto j : r.main_ranking)
            std::cout << r.main_scores[j].name << " " << fmt(r.main_scores[j].score) << "\n";
    } else if (*sp) {
        const auto schema = load_schema(sp_data.schema);
        const auto train = load_csv(sp_data.train, schema);
        const auto val = load_csv(sp_data.val, schema);
        SelectionReport base;
        std::vector<std::size_t> mains;
        if (!sp_report.empty()) {
            base = selection_report_from_json(nlohmann::json::parse(read_file(sp_report)));
            mains = base.selected_mains;
        }
        if (!sp_mains.empty()) {
            mains.clear();
            for (const auto& n : split_list(sp_mains, ',')) mains.push_back(feature_by_name(train, n));
        }
        if (mains.empty()) throw ConfigError("select-pairs needs --mains or a report with selected mains");
        auto sc = selection_config(sp_h, 1, std::nullopt, sp_k2);
        sc.baseline_epochs = sp_baseline_epochs;
        const auto r = select_pairs(train, val, mains, sc, base);
        write_report(r, sp_out);
        for (const auto& d : r.pair_deltas) std::cout << d.name << " " << fmt(d.delta) << "\n";
    } else if (*tr) {
        const auto schema = load_schema(tr_data.schema);
        const auto train = load_csv(tr_data.train, schema);
        const auto val = load_csv(tr_data.val, schema);
        std::vector<std::size_t> mains;
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        if (!tr_report.empty()) {
            const auto r = selection_report_from_json(nlohmann::json::parse(read_file(tr_report)));
            mains = r.selected_mains;
            pairs = r.selected_pairs;
        }
        if (!tr_mains.empty()) {
            mains.clear();
            for (const auto& n : split_list(tr_mains, ',')) mains.push_back(feature_by_name(train, n));
        }
        if (!tr_pairs.empty()) {
            pairs.clear();
            for (const auto& p : split_list(tr_pairs, ',')) {
                const auto ab = split_list(p, ':');
                if (ab.size() != 2) throw ConfigError("pairs are written A:B, got '" + p + "'");
                pairs.emplace_back(feature_by_name(train, ab[0]), feature_by_name(train, ab[1]));
            }
        }
        if (mains.empty()) throw ConfigError("train needs --mains or a report with selected mains");
        const auto result = fine_tune(train, val, mains, pairs, tr_h.arch(), tr_h.distribution(), tr_h.train());
        if (result.reason == StopReason::diverged)
            std::cerr << "warning: training diverged (" << result.message << "); kept the last finite snapshot\n";
        ModelArchive a;
        a.schema = schema;
        a.model = result.model;
        a.train_config = tr_h.train();
        a.train_config.penalties = true;
        if (!tr_pre.empty()) a.preprocess = report_from_json(nlohmann::json::parse(read_file(tr_pre)));
        if (a.model.distribution().family == Family::gamma) {
            const auto p = predict_batch(a.model, train);
            a.fitted_dispersion = estimate_dispersion(train.response(), p.mu);
        }
        a.history_digest = history_digest(result);
        save_archive(tr_model, a);
        write_file_atomic(tr_history, format_history_csv(result.history));
        std::cout << "best epoch " << result.best_epoch << ", validation NLL " << fmt(result.best_val_nll) << " ("
                  << to_string(result.reason) << ")\n";
    } else if (*ev) {
        const auto a = load_archive(ev_model);
        const auto schema = load_schema(ev_schema);
        const auto test = load_csv(ev_test, schema);
        a.model.check_schema(test);
        std::vector<std::pair<std::string, MetricsReport>> rows;
        auto dist = a.model.distribution();
        if (a.fitted_dispersion) dist.dispersion = *a.fitted_dispersion;
        const auto p = predict_batch(a.model, test);
        rows.emplace_back("anam", compute_metrics(test.response(), p.mu, dist));
        if (!ev_glm_train.empty()) {
            const auto gtrain = load_csv(ev_glm_train, schema);
            const auto glm = fit_glm(gtrain, a.model.distribution());
            auto gdist = glm.distribution;
            if (gdist.family == Family::gamma)
                gdist.dispersion = estimate_dispersion(gtrain.response(), glm_predict(glm, gtrain),
                                                       static_cast<double>(glm.coefficients.size()));
            rows.emplace_back("glm", compute_metrics(test.response(), glm_predict(glm, test), gdist));
        }
        write_file_atomic(ev_out, format_metrics_csv(rows));
        std::cout << format_metrics_table(rows);
    } else if (*pr) {
        const auto a = load_archive(pr_model);
        const auto ds = load_csv(pr_data, load_schema(pr_schema));
        a.model.check_schema(ds);
        const auto p = predict_batch(a.model, ds);
        std::string out = "row,mu";
        for (std::size_t t = 0; t < a.model.terms().size(); ++t) out += "," + a.model.term_name(t);
        out += "\n";
        for (std::size_t i = 0; i < ds.rows(); ++i) {
            out += std::to_string(i + 1) + "," + fmt(p.mu[i]);
            for (const auto& c : p.contributions) out += "," + fmt(c[i]);
            out += "\n";
        }
        write_file_atomic(pr_out, out);
    } else if (*ex) {
        const auto a = load_archive(ex_model);
        ensure_dir(ex_out);
        for (std::size_t t = 0; t < a.model.terms().size(); ++t) {
            std::string name = a.model.term_name(t);
            std::replace(name.begin(), name.end(), ':', '_');
            write_file_atomic(out_path(ex_out, "shape_" + name + ".csv"),
                              format_shape_grid_csv(export_shape_grid(a.model, t, ex_res)));
        }
    } else if (*pl) {
        ensure_dir(pl_out);
        for (const auto& in : pl_in) {
            const auto table = parse_shape_table(read_file(in));
            const auto stem = fs::path(in).stem().string();
            std::string title;
            for (std::size_t d = 0; d < table.input_names.size(); ++d)
                title += (d ? " x " : "") + table.input_names[d];
            write_file_atomic(out_path(pl_out, stem + ".svg"), render_svg(table, title));
        }
    }
    return 0;
}

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const MissingFileError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed JSON: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
