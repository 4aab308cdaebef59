#pragma once

#include "anam/model.hpp"
#include "anam/trainer.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace anam {

// How terms are built from features: MLP subnetworks by default, lattices for
// every term touching a monotone feature.
struct ArchitectureConfig {
    MlpConfig main_mlp;  // 2 hidden layers, 20 and 10 units
    MlpConfig pair_mlp = [] {
        MlpConfig c;
        c.hidden_layers = 10;
        c.first_hidden_width = 100;
        return c;
    }();
    int main_lattice_vertices = 10;
    int pair_lattice_vertices = 8;
    int calibrator_knots = 10;
    std::map<std::string, Monotonicity> monotone;  // by feature name
    bool smooth_mains = false;                      // flag continuous main terms smooth

    void validate(const Dataset& ds) const;
    Monotonicity direction(const Dataset& ds, std::size_t feature) const;
};

TermSpec main_term_spec(const Dataset& ds, std::size_t feature, const ArchitectureConfig& arch);
TermSpec pair_term_spec(const Dataset& ds, std::size_t a, std::size_t b, const ArchitectureConfig& arch);
ModelSpec make_model_spec(const Dataset& ds, const std::vector<std::size_t>& mains,
                          const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                          const ArchitectureConfig& arch, const DistributionSpec& dist);

struct SelectionConfig {
    std::size_t ensemble_size = 10;
    std::optional<std::size_t> k1;  // nullopt: report only, the caller picks
    std::optional<std::size_t> k2;
    ArchitectureConfig arch;        // screening architectures
    TrainConfig train;              // penalties are always off during screening
    std::optional<int> baseline_epochs;  // stage-2 mains-only baseline; defaults to train.max_epochs
    DistributionSpec distribution;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;

    void validate(std::size_t num_features) const;
};

struct FeatureScore {
    std::size_t feature = 0;
    std::string name;
    double score = 0.0;
};

struct PairDelta {
    std::size_t a = 0, b = 0;
    std::string name;
    double val_nll = 0.0;
    double delta = 0.0;  // baseline - val_nll
    int best_epoch = 0;
};

struct SelectionReport {
    std::size_t members_trained = 0;
    std::size_t members_dropped = 0;
    std::vector<FeatureScore> main_scores;  // feature order
    std::vector<std::size_t> main_ranking;  // by score, descending; ties in feature order
    std::vector<std::size_t> selected_mains;
    std::optional<double> baseline_val_nll;
    std::vector<PairDelta> pair_deltas;  // by delta, descending; ties in candidate order
    std::vector<std::pair<std::size_t, std::size_t>> selected_pairs;
    std::vector<std::string> warnings;
};

// Stage 1: main-effects ensemble scored by average shape-function variance.
SelectionReport select_main(const Dataset& train, const Dataset& val, const SelectionConfig& cfg);

// Stage 2: every heredity-eligible pair added to the trained mains-only
// baseline, training only the pair and its two parents. Results are merged
// into `report` (pass the stage-1 report or an empty one).
SelectionReport select_pairs(const Dataset& train, const Dataset& val, const std::vector<std::size_t>& mains,
                             const SelectionConfig& cfg, SelectionReport report = {});

// Stage 3: fresh model over the chosen terms trained with penalties on.
TrainResult fine_tune(const Dataset& train, const Dataset& val, const std::vector<std::size_t>& mains,
                      const std::vector<std::pair<std::size_t, std::size_t>>& pairs, const ArchitectureConfig& arch,
                      const DistributionSpec& dist, TrainConfig cfg);

nlohmann::json report_to_json(const SelectionReport& r);
SelectionReport selection_report_from_json(const nlohmann::json& j);
std::string format_main_scores_csv(const SelectionReport& r);
std::string format_pair_deltas_csv(const SelectionReport& r);

}  // namespace anam
