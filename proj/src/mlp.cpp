#include "anam/mlp.hpp"

#include "anam/errors.hpp"
#include "anam/rng.hpp"

#include <cmath>

namespace anam {

void MlpConfig::validate() const {
    if (input_dim < 1) throw ConfigError("MLP input_dim must be at least 1");
    if (hidden_layers < 0) throw ConfigError("MLP hidden_layers must be non-negative");
    if (hidden_layers > 0 && first_hidden_width < 1) throw ConfigError("MLP first_hidden_width must be at least 1");
    if (activation.kind == Activation::Kind::leaky_relu && !(activation.slope >= 0.0))
        throw ConfigError("leaky ReLU slope must be non-negative");
}

std::vector<int> MlpConfig::hidden_widths() const {
    std::vector<int> w;
    const int L = hidden_layers;
    for (int l = 1; l <= L; ++l) {
        const double width = static_cast<double>(first_hidden_width) * (L - l + 1) / L;
        w.push_back(std::max(1, static_cast<int>(std::lround(width))));
    }
    return w;
}

MlpParams::MlpParams(std::vector<int> dims, Activation activation)
    : dims_(std::move(dims)), activation_(activation) {
    if (dims_.size() < 2 || dims_.back() != 1) throw ConfigError("MLP must end in a single output unit");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
        offsets_.push_back(off);
        off += static_cast<std::size_t>(dims_[l + 1]) * (dims_[l] + 1);
    }
    offsets_.push_back(off);
    values_.assign(off, 0.0);
}

Activation MlpParams::layer_activation(std::size_t l) const {
    if (l + 1 == num_layers()) return Activation{Activation::Kind::linear, 1.0};
    return activation_;
}

Eigen::Map<Eigen::MatrixXd> MlpParams::weight(std::size_t l) {
    return {values_.data() + offsets_[l], dims_[l + 1], dims_[l]};
}

Eigen::Map<const Eigen::MatrixXd> MlpParams::weight(std::size_t l) const {
    return {values_.data() + offsets_[l], dims_[l + 1], dims_[l]};
}

Eigen::Map<Eigen::VectorXd> MlpParams::bias(std::size_t l) {
    return {values_.data() + offsets_[l] + static_cast<std::size_t>(dims_[l + 1]) * dims_[l], dims_[l + 1]};
}

Eigen::Map<const Eigen::VectorXd> MlpParams::bias(std::size_t l) const {
    return {values_.data() + offsets_[l] + static_cast<std::size_t>(dims_[l + 1]) * dims_[l], dims_[l + 1]};
}

MlpParams MlpParams::zeros_like() const {
    return MlpParams(dims_, activation_);
}

MlpParams make_mlp(const MlpConfig& cfg) {
    cfg.validate();
    std::vector<int> dims{cfg.input_dim};
    for (int w : cfg.hidden_widths()) dims.push_back(w);
    dims.push_back(1);
    return MlpParams(std::move(dims), cfg.activation);
}

MlpParams init_glorot(const MlpConfig& cfg) {
    MlpParams p = make_mlp(cfg);
    Rng rng(cfg.seed, streams::init);
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
        auto w = p.weight(l);
        const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-a, a);
    }
    return p;
}

void mlp_forward(const MlpParams& params, const Eigen::MatrixXd& inputs, Eigen::RowVectorXd& out, MlpCache* cache) {
    if (inputs.rows() != params.input_dim()) throw ConfigError("MLP input dimension mismatch");
    const std::size_t L = params.num_layers();
    if (cache) {
        cache->pre.resize(L);
        cache->post.resize(L + 1);
        cache->post[0] = inputs;
    }
    Eigen::MatrixXd h = inputs;
    for (std::size_t l = 0; l < L; ++l) {
        Eigen::MatrixXd z = params.weight(l) * h;
        z.colwise() += params.bias(l);
        const Activation act = params.layer_activation(l);
        if (cache) cache->pre[l] = z;
        if (act.kind != Activation::Kind::linear) z = z.unaryExpr([&](double v) { return act.apply(v); });
        h = std::move(z);
        if (cache) cache->post[l + 1] = h;
    }
    out = h.row(0);
    for (Eigen::Index i = 0; i < out.size(); ++i)
        if (!std::isfinite(out[i])) throw NumericError("non-finite MLP output", static_cast<std::size_t>(i));
}

void mlp_backward(const MlpParams& params, const MlpCache& cache, const Eigen::RowVectorXd& upstream,
                  std::span<double> grad, Eigen::MatrixXd* input_grad) {
    if (grad.size() != params.size()) throw ConfigError("MLP gradient buffer has wrong size");
    const std::size_t L = params.num_layers();
    Eigen::MatrixXd delta = upstream;
    for (std::size_t l = L; l-- > 0;) {
        const Activation act = params.layer_activation(l);
        if (act.kind != Activation::Kind::linear)
            delta.array() *= cache.pre[l].unaryExpr([&](double v) { return act.derivative(v); }).array();
        const auto rows = params.dims()[l + 1];
        const auto cols = params.dims()[l];
        const std::size_t off = params.offset(l);
        Eigen::Map<Eigen::MatrixXd> gw(grad.data() + off, rows, cols);
        Eigen::Map<Eigen::VectorXd> gb(grad.data() + off + static_cast<std::size_t>(rows) * cols, rows);
        gw.noalias() += delta * cache.post[l].transpose();
        gb += delta.rowwise().sum();
        if (l > 0 || input_grad) {
            Eigen::MatrixXd prev = params.weight(l).transpose() * delta;
            delta = std::move(prev);
        }
    }
    if (input_grad) *input_grad = std::move(delta);
}

double mlp_eval(const MlpParams& params, std::span<const double> x) {
    if (static_cast<int>(x.size()) != params.input_dim()) throw ConfigError("MLP input dimension mismatch");
    Eigen::MatrixXd in = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    Eigen::RowVectorXd out;
    mlp_forward(params, in, out);
    return out[0];
}

MlpGrad eval_with_grad(const MlpParams& params, std::span<const double> x, double upstream) {
    if (static_cast<int>(x.size()) != params.input_dim()) throw ConfigError("MLP input dimension mismatch");
    Eigen::MatrixXd in = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    Eigen::RowVectorXd out;
    MlpCache cache;
    mlp_forward(params, in, out, &cache);
    MlpGrad g;
    g.output = out[0];
    g.param_grads = params.zeros_like();
    Eigen::RowVectorXd up(1);
    up[0] = upstream;
    Eigen::MatrixXd ig;
    mlp_backward(params, cache, up, g.param_grads.values(), &ig);
    g.input_grad.assign(ig.data(), ig.data() + ig.size());
    return g;
}

}  // namespace anam
