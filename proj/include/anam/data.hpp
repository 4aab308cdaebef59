#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace anam {

enum class ColumnKind { continuous, categorical };
enum class ColumnRole { feature, response, exposure, ignore };

struct ColumnSchema {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    ColumnRole role = ColumnRole::feature;
    std::vector<std::string> levels;  // categorical only
};

// Exactly one response, at most one exposure, well-formed level lists.
void validate_schema(std::span<const ColumnSchema> schema);

std::vector<ColumnSchema> schema_from_json(const nlohmann::json& j);
nlohmann::json schema_to_json(std::span<const ColumnSchema> schema);
std::vector<ColumnSchema> load_schema(const std::string& path);
void save_schema(const std::string& path, std::span<const ColumnSchema> schema);

// A model input. Categorical values are stored as the level index.
struct Feature {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    std::vector<std::string> levels;

    bool categorical() const noexcept { return kind == ColumnKind::categorical; }
    int level_count() const noexcept { return static_cast<int>(levels.size()); }
};

// Validated, immutable table of observations: feature columns, a response
// and an optional exposure.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<Feature> features, std::vector<std::vector<double>> columns,
            std::vector<double> response, std::optional<std::vector<double>> exposure = std::nullopt,
            std::string response_name = "y", std::string exposure_name = "exposure");

    std::size_t rows() const noexcept { return response_.size(); }
    std::size_t num_features() const noexcept { return features_.size(); }

    const std::vector<Feature>& features() const noexcept { return features_; }
    const Feature& feature(std::size_t j) const { return features_.at(j); }
    std::size_t feature_index(std::string_view name) const;

    std::span<const double> column(std::size_t j) const { return columns_.at(j); }
    double x(std::size_t row, std::size_t j) const { return columns_[j][row]; }
    std::span<const double> response() const noexcept { return response_; }
    bool has_exposure() const noexcept { return exposure_.has_value(); }
    std::span<const double> exposure() const;

    const std::string& response_name() const noexcept { return response_name_; }
    const std::string& exposure_name() const noexcept { return exposure_name_; }

    // Schema describing this dataset's columns (features, response, exposure).
    std::vector<ColumnSchema> schema() const;

    Dataset subset(std::span<const std::size_t> rows) const;

    // Same columns with a new response vector (used by tests and fixtures).
    Dataset with_response(std::vector<double> response) const;

private:
    void validate() const;

    std::vector<Feature> features_;
    std::vector<std::vector<double>> columns_;
    std::vector<double> response_;
    std::optional<std::vector<double>> exposure_;
    std::string response_name_ = "y";
    std::string exposure_name_ = "exposure";
};

Dataset load_csv(const std::string& path, std::span<const ColumnSchema> schema);
Dataset parse_csv(std::string_view text, std::span<const ColumnSchema> schema);
std::string format_csv(const Dataset& ds);
void save_csv(const std::string& path, const Dataset& ds);

// Writes `content` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// --- preprocessing -------------------------------------------------------

struct PreprocessOptions {
    bool standardize = false;
    bool one_hot = false;
    bool iqr_filter = false;
};

struct ColumnStats {
    std::string name;
    double mean = 0.0;
    double sd = 1.0;
};

struct PreprocessReport {
    PreprocessOptions options;
    std::size_t input_rows = 0;
    std::size_t removed_rows = 0;
    double iqr_lower = 0.0;
    double iqr_upper = 0.0;
    std::string sd_divisor = "n-1";
    std::vector<ColumnStats> stats;  // standardized continuous features
};

nlohmann::json report_to_json(const PreprocessReport& r);
PreprocessReport report_from_json(const nlohmann::json& j);

struct Preprocessed {
    Dataset data;
    PreprocessReport report;
};

// Sample quantile with linear interpolation between order statistics.
double quantile(std::span<const double> values, double q);

Preprocessed preprocess(const Dataset& ds, const PreprocessOptions& opts);
// Reapplies the standardization and encoding recorded in `report`, e.g. to
// validation and test data. No rows are removed.
Dataset apply_preprocess(const Dataset& ds, const PreprocessReport& report);
Dataset one_hot_expand(const Dataset& ds);

// --- splitting -----------------------------------------------------------

struct SplitSpec {
    double train_frac = 0.6;
    double val_frac = 0.2;
    double test_frac = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitResult {
    Dataset train, val, test;
    std::vector<std::size_t> train_rows, val_rows, test_rows;
};

SplitResult split(const Dataset& ds, const SplitSpec& spec);

// --- synthetic severity data ----------------------------------------------

struct SyntheticConfig {
    std::size_t n = 50000;
    double dispersion = 1.0;
    double bias = 7.5;
    std::uint64_t seed = 0;

    void validate() const;
};

inline constexpr std::size_t kSyntheticFeatures = 10;
inline constexpr std::size_t kSyntheticTerms = 5;

// Ground-truth components of log(mu) for one row: f1, f2, f34, f56, f78.
std::array<double, kSyntheticTerms> synthetic_terms(std::span<const double> x);
double synthetic_f1(double x1);
double synthetic_f2(double x2);
double synthetic_f34(double x3, double x4);
double synthetic_f56(double x5, double x6);
double synthetic_f78(double x7, double x8);

struct GroundTruth {
    double bias = 0.0;
    std::vector<double> mu;
    std::vector<std::array<double, kSyntheticTerms>> terms;
};

struct Simulated {
    Dataset data;
    GroundTruth truth;
};

Simulated simulate(const SyntheticConfig& cfg);
std::string format_ground_truth_csv(const GroundTruth& truth);

}  // namespace anam
