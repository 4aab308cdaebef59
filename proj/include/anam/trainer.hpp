#pragma once

#include "anam/model.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace anam {

enum class OptimizerKind { adam, rmsprop };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
    double learning_rate = 1e-3;
    int max_epochs = 100;
    double convergence_threshold = 1e-8;  // on ||theta(t) - theta(t-1)|| per epoch
    std::size_t batch_size = 1000;
    int patience = 10;
    bool penalties = true;
    double omega_smooth = 0.0;
    double omega_mc = 0.0;
    std::size_t smooth_grid_size = 1000;
    int dykstra_iterations = 10;
    double dykstra_tolerance = 1e-7;
    int final_dykstra_iterations = 1000;
    double final_dykstra_tolerance = 1e-15;
    OptimizerKind optimizer = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double rho = 0.9;  // RMSprop decay
    std::uint64_t seed = 0;

    void validate(std::size_t train_rows) const;
};

// Gradient laid out like the model's parameters.
struct ModelGradient {
    double bias = 0.0;
    std::vector<double> weight;              // per term
    std::vector<std::vector<double>> shape;  // per term, Term::flat_params() order

    static ModelGradient zeros_like(const AnamModel& model);
    void scale(double s);
    void add(const ModelGradient& o);
};

// Fixed uniform grid over a smooth main term's training range.
struct SmoothGrid {
    std::size_t term = 0;
    std::vector<double> points;
    double spacing = 0.0;
};

std::vector<SmoothGrid> make_smooth_grids(const AnamModel& model, std::size_t points);

// sum_{i=2}^{n-1} |v[i+1] - 2 v[i] + v[i-1]| / h^2
double second_difference_roughness(std::span<const double> values, double spacing);
// Roughness of a term's centred, weighted output on `grid` (penalty weight stripped).
double term_roughness(const AnamModel& model, const SmoothGrid& grid);

// omega * sum over grids of the roughness. Parameter gradients are added to
// `grad` for terms with trainable[t] (empty mask = all).
double smoothness_penalty(const AnamModel& model, std::span<const SmoothGrid> grids, double omega,
                          ModelGradient* grad = nullptr, const std::vector<bool>& trainable = {});

// Couples (main term index, pair term index) sharing a feature.
std::vector<std::pair<std::size_t, std::size_t>> marginal_clarity_couples(const AnamModel& model);

// omega * sum over couples of |mean_i(c_main,i * c_pair,i)| on per-term
// contributions (centred, weighted). d_contrib receives d(penalty)/d c.
double marginal_clarity_penalty(const AnamModel& model, const std::vector<std::vector<double>>& contributions,
                                double omega, std::vector<std::vector<double>>* d_contrib = nullptr);

struct ClarityMeasure {
    std::size_t main_term = 0;
    std::size_t pair_term = 0;
    double mean_product = 0.0;
};

// Empirical marginal-clarity measure per couple on `data`.
std::vector<ClarityMeasure> marginal_clarity_measures(const AnamModel& model, const Dataset& data);

struct ObjectiveOptions {
    bool penalties = false;
    double omega_smooth = 0.0;
    double omega_mc = 0.0;
    std::span<const SmoothGrid> grids;
    std::vector<bool> trainable;  // per term; empty = all
};

struct ObjectiveResult {
    double value = 0.0;  // nll + smooth + mc
    double nll = 0.0;    // mean over the batch
    double smooth = 0.0;
    double mc = 0.0;
};

ObjectiveResult objective(const AnamModel& model, const Dataset& data, std::span<const std::size_t> rows,
                          const ObjectiveOptions& opts, ModelGradient* grad = nullptr);

// Mean per-row negative log-likelihood over the whole dataset.
double mean_nll(const AnamModel& model, const Dataset& data);

// Adam / RMSprop over all model parameters. Frozen terms are skipped.
class Optimizer {
public:
    Optimizer(const AnamModel& model, const TrainConfig& cfg);
    void step(AnamModel& model, const ModelGradient& grad, const std::vector<bool>& trainable, bool train_bias = true);
    long steps() const noexcept { return t_; }

private:
    double update(double g, std::size_t k);

    OptimizerKind kind_;
    double lr_, beta1_, beta2_, eps_, rho_;
    std::vector<double> m_, v_;
    long t_ = 0;
    double b1t_ = 1.0, b2t_ = 1.0;
};

struct EpochRecord {
    int epoch = 0;
    double train_objective = 0.0;
    double train_nll = 0.0;
    double val_nll = 0.0;
    double smooth_pen = 0.0;
    double mc_pen = 0.0;
};

std::string format_history_csv(const std::vector<EpochRecord>& history);

enum class StopReason { max_epochs, early_stopped, converged, diverged };
std::string to_string(StopReason r);

struct TrainOptions {
    std::vector<bool> trainable;  // per term; empty = all terms trainable
    bool train_bias = true;
};

struct TrainResult {
    AnamModel model;
    std::vector<EpochRecord> history;
    StopReason reason = StopReason::max_epochs;
    int best_epoch = 0;
    double best_val_nll = 0.0;
    std::string message;
};

// Projected minibatch training with validation early stopping. The returned
// model is the best-validation snapshot after a final tightening projection
// and centring.
TrainResult train(const AnamModel& model, const Dataset& train_data, const Dataset& val_data, const TrainConfig& cfg,
                  const TrainOptions& opts = {});

// Final tightening projection of every constrained term.
void tighten(AnamModel& model, int max_iterations, double tolerance);

// Euclidean norm over the trainable parameters of a - b.
double parameter_distance(const AnamModel& a, const AnamModel& b);

}  // namespace anam
