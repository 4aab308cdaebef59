#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace anam {

struct Activation {
    enum class Kind { leaky_relu, linear };
    Kind kind = Kind::leaky_relu;
    double slope = 0.01;  // negative-side slope for leaky_relu

    double apply(double v) const noexcept {
        return kind == Kind::linear || v >= 0.0 ? v : slope * v;
    }
    // At exactly 0 the positive branch is taken.
    double derivative(double v) const noexcept {
        return kind == Kind::linear || v >= 0.0 ? 1.0 : slope;
    }
};

struct MlpConfig {
    int input_dim = 1;
    int hidden_layers = 2;
    int first_hidden_width = 20;
    Activation activation;
    std::uint64_t seed = 0;

    void validate() const;
    // Triangle-shaped hidden widths: layer l of L has
    // round(first_hidden_width * (L - l + 1) / L) units, at least one.
    std::vector<int> hidden_widths() const;
};

// Feedforward subnetwork. Parameters live in one flat buffer; layer l maps
// dims[l] -> dims[l+1] with a column-major (out x in) weight block followed
// by the out-sized bias. Hidden layers use `activation`, the output layer is
// linear and has width 1.
class MlpParams {
public:
    MlpParams() = default;
    MlpParams(std::vector<int> dims, Activation activation);

    std::size_t num_layers() const noexcept { return dims_.size() - 1; }
    int input_dim() const noexcept { return dims_.front(); }
    const std::vector<int>& dims() const noexcept { return dims_; }
    const Activation& activation() const noexcept { return activation_; }
    Activation layer_activation(std::size_t l) const;

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }

    // Start of layer l's weight block in values().
    std::size_t offset(std::size_t l) const { return offsets_.at(l); }

    Eigen::Map<Eigen::MatrixXd> weight(std::size_t l);
    Eigen::Map<const Eigen::MatrixXd> weight(std::size_t l) const;
    Eigen::Map<Eigen::VectorXd> bias(std::size_t l);
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t l) const;

    // Same layout, all zeros.
    MlpParams zeros_like() const;

    bool operator==(const MlpParams& o) const {
        return dims_ == o.dims_ && values_ == o.values_ && activation_.kind == o.activation_.kind &&
               activation_.slope == o.activation_.slope;
    }

private:
    std::vector<int> dims_;
    Activation activation_;
    std::vector<std::size_t> offsets_;
    std::vector<double> values_;
};

MlpParams make_mlp(const MlpConfig& cfg);
// Glorot-uniform weights, zero biases, deterministic in cfg.seed.
MlpParams init_glorot(const MlpConfig& cfg);

struct MlpGrad {
    double output = 0.0;
    MlpParams param_grads;
    std::vector<double> input_grad;
};

double mlp_eval(const MlpParams& params, std::span<const double> x);
// Forward pass plus exact backpropagation of `upstream` (dL/doutput).
MlpGrad eval_with_grad(const MlpParams& params, std::span<const double> x, double upstream);

// Batched evaluation over the columns of `inputs` (input_dim x batch).
struct MlpCache {
    std::vector<Eigen::MatrixXd> pre;   // pre-activations per layer
    std::vector<Eigen::MatrixXd> post;  // post[0] = inputs, post[l+1] = layer l output
};

void mlp_forward(const MlpParams& params, const Eigen::MatrixXd& inputs, Eigen::RowVectorXd& out,
                 MlpCache* cache = nullptr);
// Accumulates parameter gradients into `grad` (params-sized). If
// `input_grad` is non-null it receives dL/dinputs.
void mlp_backward(const MlpParams& params, const MlpCache& cache, const Eigen::RowVectorXd& upstream,
                  std::span<double> grad, Eigen::MatrixXd* input_grad = nullptr);

}  // namespace anam
