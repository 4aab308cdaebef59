#include "anam/data.hpp"

#include "anam/errors.hpp"
#include "anam/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace anam {

namespace {

const char* kind_name(ColumnKind k) {
    return k == ColumnKind::continuous ? "continuous" : "categorical";
}

const char* role_name(ColumnRole r) {
    switch (r) {
    case ColumnRole::feature: return "feature";
    case ColumnRole::response: return "response";
    case ColumnRole::exposure: return "exposure";
    case ColumnRole::ignore: return "ignore";
    }
    return "feature";
}

ColumnKind kind_from(const std::string& s) {
    if (s == "continuous") return ColumnKind::continuous;
    if (s == "categorical") return ColumnKind::categorical;
    throw ConfigError("unknown column kind '" + s + "'");
}

ColumnRole role_from(const std::string& s) {
    if (s == "feature") return ColumnRole::feature;
    if (s == "response") return ColumnRole::response;
    if (s == "exposure") return ColumnRole::exposure;
    if (s == "ignore") return ColumnRole::ignore;
    throw ConfigError("unknown column role '" + s + "'");
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            return out;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

// --- schema --------------------------------------------------------------

void validate_schema(std::span<const ColumnSchema> schema) {
    int responses = 0;
    int exposures = 0;
    std::set<std::string> names;
    for (const auto& c : schema) {
        if (c.name.empty()) throw ConfigError("schema column with empty name");
        if (!names.insert(c.name).second) throw ConfigError("duplicate schema column '" + c.name + "'");
        if (c.role == ColumnRole::response) ++responses;
        if (c.role == ColumnRole::exposure) ++exposures;
        if (c.kind == ColumnKind::categorical) {
            if (c.levels.empty()) throw ConfigError("categorical column '" + c.name + "' has no levels");
            std::set<std::string> lv(c.levels.begin(), c.levels.end());
            if (lv.size() != c.levels.size())
                throw ConfigError("categorical column '" + c.name + "' has duplicate levels");
            if (c.role != ColumnRole::feature && c.role != ColumnRole::ignore)
                throw ConfigError("column '" + c.name + "': only features may be categorical");
        }
    }
    if (responses != 1) throw ConfigError("schema must declare exactly one response column");
    if (exposures > 1) throw ConfigError("schema may declare at most one exposure column");
}

std::vector<ColumnSchema> schema_from_json(const nlohmann::json& j) {
    const auto& cols = j.contains("columns") ? j.at("columns") : j;
    if (!cols.is_array()) throw ConfigError("schema document must be an array of columns");
    std::vector<ColumnSchema> out;
    for (const auto& c : cols) {
        ColumnSchema s;
        s.name = c.at("name").get<std::string>();
        s.kind = kind_from(c.value("kind", std::string("continuous")));
        s.role = role_from(c.value("role", std::string("feature")));
        if (c.contains("levels")) s.levels = c.at("levels").get<std::vector<std::string>>();
        out.push_back(std::move(s));
    }
    validate_schema(out);
    return out;
}

nlohmann::json schema_to_json(std::span<const ColumnSchema> schema) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : schema) {
        nlohmann::json e = {{"name", c.name}, {"kind", kind_name(c.kind)}, {"role", role_name(c.role)}};
        if (c.kind == ColumnKind::categorical) e["levels"] = c.levels;
        cols.push_back(std::move(e));
    }
    return {{"columns", cols}};
}

std::vector<ColumnSchema> load_schema(const std::string& path) {
    const auto text = read_file(path);
    try {
        return schema_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid schema file " + path + ": " + e.what());
    }
}

void save_schema(const std::string& path, std::span<const ColumnSchema> schema) {
    write_file_atomic(path, schema_to_json(schema).dump(2) + "\n");
}

// --- dataset -------------------------------------------------------------

Dataset::Dataset(std::vector<Feature> features, std::vector<std::vector<double>> columns,
                 std::vector<double> response, std::optional<std::vector<double>> exposure,
                 std::string response_name, std::string exposure_name)
    : features_(std::move(features)),
      columns_(std::move(columns)),
      response_(std::move(response)),
      exposure_(std::move(exposure)),
      response_name_(std::move(response_name)),
      exposure_name_(std::move(exposure_name)) {
    validate();
}

void Dataset::validate() const {
    if (features_.size() != columns_.size()) throw DataError("feature/column count mismatch");
    const std::size_t n = response_.size();
    for (std::size_t j = 0; j < columns_.size(); ++j) {
        if (columns_[j].size() != n) throw DataError("column '" + features_[j].name + "' has wrong length");
        const auto& f = features_[j];
        for (std::size_t i = 0; i < n; ++i) {
            const double v = columns_[j][i];
            if (!std::isfinite(v)) throw MissingValueError(i, f.name);
            if (f.categorical() && (v < 0 || v >= f.level_count() || std::floor(v) != v))
                throw DataError("column '" + f.name + "': invalid level index at row " + std::to_string(i));
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(response_[i])) throw DataError("non-finite response at row " + std::to_string(i));
    if (exposure_) {
        if (exposure_->size() != n) throw DataError("exposure has wrong length");
        for (std::size_t i = 0; i < n; ++i)
            if (!((*exposure_)[i] > 0.0) || !std::isfinite((*exposure_)[i]))
                throw DataError("exposure must be strictly positive (row " + std::to_string(i) + ")");
    }
}

std::size_t Dataset::feature_index(std::string_view name) const {
    for (std::size_t j = 0; j < features_.size(); ++j)
        if (features_[j].name == name) return j;
    throw ConfigError("unknown feature '" + std::string(name) + "'");
}

std::span<const double> Dataset::exposure() const {
    if (!exposure_) throw ConfigError("dataset has no exposure column");
    return *exposure_;
}

std::vector<ColumnSchema> Dataset::schema() const {
    std::vector<ColumnSchema> out;
    for (const auto& f : features_) out.push_back({f.name, f.kind, ColumnRole::feature, f.levels});
    out.push_back({response_name_, ColumnKind::continuous, ColumnRole::response, {}});
    if (exposure_) out.push_back({exposure_name_, ColumnKind::continuous, ColumnRole::exposure, {}});
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    std::vector<std::vector<double>> cols(columns_.size());
    for (std::size_t j = 0; j < columns_.size(); ++j) {
        cols[j].reserve(rows.size());
        for (auto r : rows) cols[j].push_back(columns_[j].at(r));
    }
    std::vector<double> y;
    y.reserve(rows.size());
    for (auto r : rows) y.push_back(response_.at(r));
    std::optional<std::vector<double>> e;
    if (exposure_) {
        e.emplace();
        for (auto r : rows) e->push_back(exposure_->at(r));
    }
    return Dataset(features_, std::move(cols), std::move(y), std::move(e), response_name_, exposure_name_);
}

Dataset Dataset::with_response(std::vector<double> response) const {
    return Dataset(features_, columns_, std::move(response), exposure_, response_name_, exposure_name_);
}

// --- CSV -----------------------------------------------------------------

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFileError(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path() && !fs::exists(target.parent_path()))
        throw IoError("output directory does not exist: " + target.parent_path().string());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
}

Dataset parse_csv(std::string_view text, std::span<const ColumnSchema> schema) {
    validate_schema(schema);

    std::vector<std::string_view> lines;
    {
        std::size_t start = 0;
        while (start < text.size()) {
            auto pos = text.find('\n', start);
            if (pos == std::string_view::npos) pos = text.size();
            auto line = text.substr(start, pos - start);
            if (!trim(line).empty()) lines.push_back(line);
            start = pos + 1;
        }
    }
    if (lines.empty()) throw DataError("CSV has no header row");

    const auto header = split_fields(lines[0]);
    std::map<std::string, std::size_t, std::less<>> col_of;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (!col_of.emplace(std::string(header[c]), c).second)
            throw DataError("duplicate CSV header '" + std::string(header[c]) + "'");
    }
    for (const auto& h : header) {
        const bool known = std::any_of(schema.begin(), schema.end(), [&](const auto& s) { return s.name == h; });
        if (!known) throw DataError("CSV column '" + std::string(h) + "' is not in the schema");
    }
    for (const auto& s : schema)
        if (!col_of.count(s.name)) throw DataError("CSV is missing schema column '" + s.name + "'");

    const std::size_t n = lines.size() - 1;
    std::vector<Feature> features;
    std::vector<std::vector<double>> columns;
    std::vector<std::size_t> feature_cols;
    std::vector<double> response(n);
    std::optional<std::vector<double>> exposure;
    std::string response_name, exposure_name = "exposure";
    std::size_t response_col = 0, exposure_col = 0;
    for (const auto& s : schema) {
        switch (s.role) {
        case ColumnRole::feature:
            features.push_back({s.name, s.kind, s.levels});
            columns.emplace_back(n);
            feature_cols.push_back(col_of.at(s.name));
            break;
        case ColumnRole::response:
            response_name = s.name;
            response_col = col_of.at(s.name);
            break;
        case ColumnRole::exposure:
            exposure_name = s.name;
            exposure_col = col_of.at(s.name);
            exposure.emplace(n);
            break;
        case ColumnRole::ignore: break;
        }
    }

    auto parse_number = [&](std::string_view cell, std::size_t row, const std::string& col) {
        if (cell.empty()) throw MissingValueError(row, col);
        double v = 0.0;
        const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v))
            throw ParseError(row, col, "cannot parse '" + std::string(cell) + "' as a number");
        return v;
    };

    for (std::size_t i = 0; i < n; ++i) {
        const auto fields = split_fields(lines[i + 1]);
        if (fields.size() != header.size())
            throw ParseError(i + 1, "*", "expected " + std::to_string(header.size()) + " fields, found " +
                                             std::to_string(fields.size()));
        for (std::size_t j = 0; j < features.size(); ++j) {
            const auto cell = fields[feature_cols[j]];
            const auto& f = features[j];
            if (f.categorical()) {
                if (cell.empty()) throw MissingValueError(i + 1, f.name);
                const auto it = std::find(f.levels.begin(), f.levels.end(), cell);
                if (it == f.levels.end()) throw UnknownLevelError(i + 1, f.name, std::string(cell));
                columns[j][i] = static_cast<double>(it - f.levels.begin());
            } else {
                columns[j][i] = parse_number(cell, i + 1, f.name);
            }
        }
        response[i] = parse_number(fields[response_col], i + 1, response_name);
        if (exposure) {
            const double e = parse_number(fields[exposure_col], i + 1, exposure_name);
            if (!(e > 0.0)) throw ParseError(i + 1, exposure_name, "exposure must be strictly positive");
            (*exposure)[i] = e;
        }
    }
    return Dataset(std::move(features), std::move(columns), std::move(response), std::move(exposure),
                   response_name, exposure_name);
}

Dataset load_csv(const std::string& path, std::span<const ColumnSchema> schema) {
    return parse_csv(read_file(path), schema);
}

std::string format_csv(const Dataset& ds) {
    std::string out;
    for (const auto& f : ds.features()) out += f.name + ",";
    out += ds.response_name();
    if (ds.has_exposure()) out += "," + ds.exposure_name();
    out += "\n";
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        for (std::size_t j = 0; j < ds.num_features(); ++j) {
            const auto& f = ds.feature(j);
            if (f.categorical())
                out += f.levels[static_cast<std::size_t>(ds.x(i, j))];
            else
                out += format_double(ds.x(i, j));
            out += ",";
        }
        out += format_double(ds.response()[i]);
        if (ds.has_exposure()) out += "," + format_double(ds.exposure()[i]);
        out += "\n";
    }
    return out;
}

void save_csv(const std::string& path, const Dataset& ds) {
    write_file_atomic(path, format_csv(ds));
}

// --- preprocessing -------------------------------------------------------

double quantile(std::span<const double> values, double q) {
    if (values.empty()) throw ConfigError("quantile of an empty sample");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

Dataset one_hot_expand(const Dataset& ds) {
    std::vector<Feature> features;
    std::vector<std::vector<double>> cols;
    for (std::size_t j = 0; j < ds.num_features(); ++j) {
        const auto& f = ds.feature(j);
        const auto col = ds.column(j);
        if (!f.categorical()) {
            features.push_back(f);
            cols.emplace_back(col.begin(), col.end());
            continue;
        }
        for (int l = 0; l < f.level_count(); ++l) {
            features.push_back({f.name + "=" + f.levels[l], ColumnKind::continuous, {}});
            std::vector<double> ind(ds.rows());
            for (std::size_t i = 0; i < ds.rows(); ++i) ind[i] = col[i] == l ? 1.0 : 0.0;
            cols.push_back(std::move(ind));
        }
    }
    std::optional<std::vector<double>> e;
    if (ds.has_exposure()) e.emplace(ds.exposure().begin(), ds.exposure().end());
    return Dataset(std::move(features), std::move(cols), {ds.response().begin(), ds.response().end()}, std::move(e),
                   ds.response_name(), ds.exposure_name());
}

namespace {

Dataset standardize_with(const Dataset& ds, const std::vector<ColumnStats>& stats) {
    std::vector<std::vector<double>> cols;
    for (std::size_t j = 0; j < ds.num_features(); ++j) {
        const auto col = ds.column(j);
        cols.emplace_back(col.begin(), col.end());
    }
    for (const auto& s : stats) {
        const auto j = ds.feature_index(s.name);
        for (auto& v : cols[j]) v = (v - s.mean) / s.sd;
    }
    std::optional<std::vector<double>> e;
    if (ds.has_exposure()) e.emplace(ds.exposure().begin(), ds.exposure().end());
    return Dataset(ds.features(), std::move(cols), {ds.response().begin(), ds.response().end()}, std::move(e),
                   ds.response_name(), ds.exposure_name());
}

}  // namespace

Preprocessed preprocess(const Dataset& ds, const PreprocessOptions& opts) {
    PreprocessReport report;
    report.options = opts;
    report.input_rows = ds.rows();

    Dataset current = ds;
    if (opts.iqr_filter && ds.rows() > 0) {
        const double q1 = quantile(ds.response(), 0.25);
        const double q3 = quantile(ds.response(), 0.75);
        const double iqr = q3 - q1;
        report.iqr_lower = q1 - 1.5 * iqr;
        report.iqr_upper = q3 + 1.5 * iqr;
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < ds.rows(); ++i) {
            const double y = ds.response()[i];
            if (y >= report.iqr_lower && y <= report.iqr_upper) keep.push_back(i);
        }
        report.removed_rows = ds.rows() - keep.size();
        current = ds.subset(keep);
    }

    if (opts.standardize) {
        const double n = static_cast<double>(current.rows());
        if (current.rows() < 2) throw DataError("standardization needs at least two rows");
        for (std::size_t j = 0; j < current.num_features(); ++j) {
            const auto& f = current.feature(j);
            if (f.categorical()) continue;
            const auto col = current.column(j);
            const double mean = std::accumulate(col.begin(), col.end(), 0.0) / n;
            double ss = 0.0;
            for (double v : col) ss += (v - mean) * (v - mean);
            const double sd = std::sqrt(ss / (n - 1.0));
            if (!(sd > 0.0)) throw ZeroVarianceError(f.name);
            report.stats.push_back({f.name, mean, sd});
        }
        current = standardize_with(current, report.stats);
    }

    if (opts.one_hot) current = one_hot_expand(current);
    return {std::move(current), std::move(report)};
}

Dataset apply_preprocess(const Dataset& ds, const PreprocessReport& report) {
    Dataset out = report.options.standardize ? standardize_with(ds, report.stats) : ds;
    if (report.options.one_hot) out = one_hot_expand(out);
    return out;
}

nlohmann::json report_to_json(const PreprocessReport& r) {
    nlohmann::json stats = nlohmann::json::array();
    for (const auto& s : r.stats) stats.push_back({{"name", s.name}, {"mean", s.mean}, {"sd", s.sd}});
    return {{"standardize", r.options.standardize},
            {"one_hot", r.options.one_hot},
            {"iqr_filter", r.options.iqr_filter},
            {"input_rows", r.input_rows},
            {"removed_rows", r.removed_rows},
            {"iqr_lower", r.iqr_lower},
            {"iqr_upper", r.iqr_upper},
            {"sd_divisor", r.sd_divisor},
            {"stats", stats}};
}

PreprocessReport report_from_json(const nlohmann::json& j) {
    PreprocessReport r;
    r.options.standardize = j.value("standardize", false);
    r.options.one_hot = j.value("one_hot", false);
    r.options.iqr_filter = j.value("iqr_filter", false);
    r.input_rows = j.value("input_rows", std::size_t{0});
    r.removed_rows = j.value("removed_rows", std::size_t{0});
    r.iqr_lower = j.value("iqr_lower", 0.0);
    r.iqr_upper = j.value("iqr_upper", 0.0);
    r.sd_divisor = j.value("sd_divisor", std::string("n-1"));
    for (const auto& s : j.value("stats", nlohmann::json::array()))
        r.stats.push_back({s.at("name").get<std::string>(), s.at("mean").get<double>(), s.at("sd").get<double>()});
    return r;
}

// --- splitting -----------------------------------------------------------

void SplitSpec::validate() const {
    if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(test_frac > 0.0))
        throw ConfigError("split fractions must be positive");
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-12)
        throw ConfigError("split fractions must sum to 1");
}

SplitResult split(const Dataset& ds, const SplitSpec& spec) {
    spec.validate();
    const std::size_t n = ds.rows();
    if (n < 3) throw DataError("split needs at least 3 rows");

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(spec.seed, streams::split);
    std::shuffle(perm.begin(), perm.end(), rng);

    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.val_frac));
    const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.test_frac));
    const std::size_t n_train = n - n_val - n_test;

    SplitResult out;
    out.train_rows.assign(perm.begin(), perm.begin() + n_train);
    out.val_rows.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    out.test_rows.assign(perm.begin() + n_train + n_val, perm.end());
    std::sort(out.train_rows.begin(), out.train_rows.end());
    std::sort(out.val_rows.begin(), out.val_rows.end());
    std::sort(out.test_rows.begin(), out.test_rows.end());
    out.train = ds.subset(out.train_rows);
    out.val = ds.subset(out.val_rows);
    out.test = ds.subset(out.test_rows);
    return out;
}

}  // namespace anam
