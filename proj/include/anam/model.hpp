#pragma once

#include "anam/data.hpp"
#include "anam/distributions.hpp"
#include "anam/lattice.hpp"
#include "anam/mlp.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace anam {

enum class Backend { mlp, lattice };

// Declaration of one main effect (one feature) or pairwise effect (two).
struct TermSpec {
    std::vector<std::size_t> features;
    Backend backend = Backend::mlp;
    MlpConfig mlp;                // input_dim is derived from the features
    int lattice_vertices = 8;     // continuous lattice dims; categorical dims use the level count
    int calibrator_knots = 10;
    std::vector<Monotonicity> monotone;  // per input; empty means none
    bool smooth = false;

    bool is_pair() const noexcept { return features.size() == 2; }
    Monotonicity direction(std::size_t input) const {
        return input < monotone.size() ? monotone[input] : Monotonicity::none;
    }
    bool any_monotone() const;
};

// Feature metadata kept with the model: encoding and the observed training range.
struct FeatureInfo {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    std::vector<std::string> levels;
    double min = 0.0;
    double max = 1.0;

    bool categorical() const noexcept { return kind == ColumnKind::categorical; }
};

std::vector<FeatureInfo> feature_info(const Dataset& ds);

struct MlpShape {
    MlpParams net;
    std::vector<int> level_counts;  // per input, 0 = continuous (one unit), k = one-hot of width k
};

struct LatticeShape {
    LatticeParams lattice;
    std::vector<std::optional<Calibrator>> calibrators;  // empty for categorical dims
};

// Per-batch state kept between a term's forward and backward pass.
struct TermCache {
    MlpCache mlp;
    std::vector<Calibrator::Result> cal;  // rows x dims, row-major
    std::vector<LatticeEval> lat;
};

class Term {
public:
    Term() = default;
    Term(TermSpec spec, std::variant<MlpShape, LatticeShape> shape);

    const TermSpec& spec() const noexcept { return spec_; }
    const std::variant<MlpShape, LatticeShape>& shape() const noexcept { return shape_; }
    std::variant<MlpShape, LatticeShape>& shape() noexcept { return shape_; }
    bool is_lattice() const noexcept { return std::holds_alternative<LatticeShape>(shape_); }

    std::size_t num_params() const;
    // Copies the trainable shape parameters into / out of a flat vector.
    // MLP: layer blocks in order. Lattice: calibrator outputs per dim, then vertices.
    std::vector<double> flat_params() const;
    void set_flat_params(std::span<const double> flat);
    // Applies f(value&, flat_index) to every shape parameter.
    template <class F>
    void for_each_param(F&& f);

    // Raw (uncentered, unweighted) outputs. `inputs[d]` holds the d-th input
    // column for every row of the batch.
    void forward(std::span<const std::span<const double>> inputs, std::vector<double>& out,
                 TermCache* cache = nullptr) const;
    // Accumulates d(sum_i upstream_i * raw_i)/d(shape params) into `grad`.
    void backward(const TermCache& cache, std::span<const double> upstream, std::span<double> grad) const;

    // Monotonicity projection (lattice vertices + monotone calibrators) and
    // calibrator range clamping. No-op for MLP terms.
    void project(int max_iterations, double tolerance);
    // Largest monotonicity violation over all constraints of this term.
    double constraint_violation() const;

    double weight = 1.0;   // output weight alpha
    double center = 0.0;   // training-sample mean of the raw output
    bool weight_trainable = true;

    bool operator==(const Term& o) const;

private:
    TermSpec spec_;
    std::variant<MlpShape, LatticeShape> shape_;
};

struct ModelSpec {
    std::vector<TermSpec> terms;
    DistributionSpec distribution;
    bool uses_offset = false;
    ClipBounds clip;
};

struct Prediction {
    double mu = 0.0;
    double eta = 0.0;
    std::vector<double> contributions;
};

struct BatchPrediction {
    std::vector<double> mu;
    std::vector<double> eta;
    std::vector<std::vector<double>> contributions;  // per term, per row
};

class AnamModel {
public:
    AnamModel() = default;
    AnamModel(std::vector<FeatureInfo> features, DistributionSpec distribution, bool uses_offset,
              ClipBounds clip = {});

    const std::vector<FeatureInfo>& features() const noexcept { return features_; }
    const DistributionSpec& distribution() const noexcept { return distribution_; }
    DistributionSpec& distribution() noexcept { return distribution_; }
    bool uses_offset() const noexcept { return uses_offset_; }
    const ClipBounds& clip() const noexcept { return clip_; }

    // Builds a freshly initialized term; data drives calibrator knot placement.
    std::size_t add_term(const TermSpec& spec, const Dataset& train, std::uint64_t seed);
    void add_term(Term term);

    std::vector<Term>& terms() noexcept { return terms_; }
    const std::vector<Term>& terms() const noexcept { return terms_; }
    const Term& term(std::size_t t) const { return terms_.at(t); }
    std::string term_name(std::size_t t) const;
    std::optional<std::size_t> find_term(std::string_view name) const;

    // Every pair's two features are present as main terms.
    void check_heredity() const;
    // Dataset features match the model's by position, name and encoding.
    void check_schema(const Dataset& ds) const;

    // Gather the input columns of term t for the given rows.
    std::vector<std::vector<double>> term_inputs(std::size_t t, const Dataset& ds,
                                                 std::span<const std::size_t> rows) const;

    // Total parameter count (bias + trainable weights + shape params).
    std::size_t num_params() const;

    double bias = 0.0;

    bool operator==(const AnamModel& o) const;

private:
    std::vector<FeatureInfo> features_;
    DistributionSpec distribution_;
    bool uses_offset_ = false;
    ClipBounds clip_;
    std::vector<Term> terms_;
};

// Builds the model described by `spec` with fresh parameters. The bias is
// initialised at the intercept-only maximum likelihood value and every term
// is centred on the training data.
AnamModel build_model(const ModelSpec& spec, const Dataset& train, std::uint64_t seed);

Prediction predict(const AnamModel& model, std::span<const double> x, std::optional<double> exposure = std::nullopt);
BatchPrediction predict_batch(const AnamModel& model, const Dataset& ds);
BatchPrediction predict_rows(const AnamModel& model, const Dataset& ds, std::span<const std::size_t> rows);

// Raw outputs of every term on the given rows.
std::vector<std::vector<double>> raw_term_values(const AnamModel& model, const Dataset& ds,
                                                 std::span<const std::size_t> rows);

// Re-centres every term on `train`, compensating in the bias so predictions
// are unchanged.
void center_terms(AnamModel& model, const Dataset& train);

struct TermImportance {
    std::size_t term = 0;
    std::string name;
    double score = 0.0;
};

// Sample variance (about zero) of each centred, weighted term; descending,
// ties in declaration order.
std::vector<TermImportance> importance(const AnamModel& model, const Dataset& data);

struct ShapeGrid {
    std::vector<std::string> input_names;
    std::vector<std::vector<double>> inputs;  // rows x (1 or 2)
    std::vector<double> values;               // centred, weighted term value
    std::vector<bool> categorical;            // per input
    std::vector<std::vector<std::string>> levels;
};

// Main terms: `resolution` points over the training range (categorical:
// every level). Pair terms: resolution x resolution grid, first input outer.
ShapeGrid export_shape_grid(const AnamModel& model, std::size_t term, std::size_t resolution);
std::string format_shape_grid_csv(const ShapeGrid& grid);

// Several assemblies over one feature schema, one per output parameter.
struct MultiOutputModel {
    std::vector<AnamModel> heads;
};

std::vector<double> multi_output_predict(const MultiOutputModel& models, std::span<const double> x,
                                         std::optional<double> exposure = std::nullopt);
// Gamma NLL where head 0 is the mean and head 1 the dispersion.
double gamma_nll_from_heads(std::span<const double> heads, double y);

// --- template implementation ---------------------------------------------

template <class F>
void Term::for_each_param(F&& f) {
    std::size_t k = 0;
    if (auto* m = std::get_if<MlpShape>(&shape_)) {
        for (auto& v : m->net.values()) f(v, k++);
        return;
    }
    auto& l = std::get<LatticeShape>(shape_);
    for (auto& c : l.calibrators)
        if (c)
            for (auto& v : c->outputs()) f(v, k++);
    for (auto& v : l.lattice.values) f(v, k++);
}

}  // namespace anam
