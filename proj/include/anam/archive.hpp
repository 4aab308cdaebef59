#pragma once

#include "anam/data.hpp"
#include "anam/model.hpp"
#include "anam/trainer.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace anam {

inline constexpr int kArchiveVersion = 1;

// Everything needed to reuse a trained model. Doubles are stored as C99
// hex-float strings so a load/save cycle is bit-exact.
struct ModelArchive {
    int version = kArchiveVersion;
    std::vector<ColumnSchema> schema;
    AnamModel model;
    std::optional<PreprocessReport> preprocess;
    TrainConfig train_config;
    std::optional<double> fitted_dispersion;  // Pearson estimate on training residuals
    nlohmann::json history_digest = nlohmann::json::object();
};

std::string hex_double(double v);
double parse_hex_double(const std::string& s);

nlohmann::json model_to_json(const AnamModel& model);
AnamModel model_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Summary of a training history: length, best epoch, stop reason and a
// 64-bit FNV-1a hash of the history CSV.
nlohmann::json history_digest(const TrainResult& result);

std::string serialize_archive(const ModelArchive& archive);
ModelArchive parse_archive(std::string_view text);
void save_archive(const std::string& path, const ModelArchive& archive);
ModelArchive load_archive(const std::string& path);

}  // namespace anam
