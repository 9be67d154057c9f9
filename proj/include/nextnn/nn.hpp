#pragma once

// Single-output feed-forward networks: evaluation, Glorot initialisation,
// weight Jacobians and summed local-loss gradients.
//
// Weight layout (layer-major, then source-neuron-major):
//   for each layer l with fan_in inputs and fan_out outputs, the block
//   w[offset_l + s * fan_out + t] is the weight from source s to target t,
//   where s == fan_in denotes the bias unit. Viewed column-major this is the
//   fan_out x (fan_in + 1) matrix [W_l | b_l]. Each source neuron's outgoing
//   weights are therefore a contiguous run of fan_out entries.

#include "nextnn/common.hpp"
#include "nextnn/dataset.hpp"
#include "nextnn/loss.hpp"

#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nextnn {

enum class Activation { tanh, sigmoid, identity };

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        default: return "identity";
    }
}

inline Activation parse_activation(std::string_view s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "identity" || s == "linear") return Activation::identity;
    throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

inline double activate(Activation a, double z) {
    switch (a) {
        case Activation::tanh: return std::tanh(z);
        case Activation::sigmoid: return sigmoid(z);
        default: return z;
    }
}

/// Derivative of the activation expressed through its output value.
inline double activation_slope(Activation a, double out) {
    switch (a) {
        case Activation::tanh: return 1.0 - out * out;
        case Activation::sigmoid: return out * (1.0 - out);
        default: return 1.0;
    }
}

struct LayerShape {
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    std::size_t offset = 0;

    std::size_t num_params() const { return (fan_in + 1) * fan_out; }
};

/// Network shape. Hidden units always use tanh; the single output unit uses
/// `output`.
struct NetArch {
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden;
    Activation output = Activation::tanh;

    std::vector<LayerShape> layers() const {
        std::vector<LayerShape> out;
        std::size_t fan_in = input_dim;
        std::size_t offset = 0;
        auto push = [&](std::size_t fan_out) {
            out.push_back({fan_in, fan_out, offset});
            offset += (fan_in + 1) * fan_out;
            fan_in = fan_out;
        };
        for (auto h : hidden) push(h);
        push(1);
        return out;
    }

    /// Q, the total number of weights and biases.
    std::size_t num_params() const {
        std::size_t q = 0;
        for (const auto& l : layers()) q += l.num_params();
        return q;
    }

    void validate() const {
        if (input_dim == 0) throw std::invalid_argument("NetArch: input dimension must be positive");
        for (auto h : hidden)
            if (h == 0) throw std::invalid_argument("NetArch: hidden widths must be positive");
    }
};

/// Contiguous index range [offset, offset + size) of the weight vector.
struct IndexRange {
    std::size_t offset = 0;
    std::size_t size = 0;

    friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

/// One group per neuron (inputs, hidden units and per-layer bias units),
/// collecting that neuron's outgoing weights. The groups partition [0, Q).
inline std::vector<IndexRange> neuron_groups(const NetArch& arch) {
    std::vector<IndexRange> groups;
    for (const auto& l : arch.layers())
        for (std::size_t s = 0; s <= l.fan_in; ++s) groups.push_back({l.offset + s * l.fan_out, l.fan_out});
    return groups;
}

struct ForwardResult {
    double output = 0.0;          // f(w; x)
    double pre_activation = 0.0;  // f_L(w; x), the output before its activation
};

namespace detail {

inline Eigen::Map<const Matrix> layer_block(const LayerShape& l, const Vector& w) {
    return {w.data() + l.offset, static_cast<Eigen::Index>(l.fan_out), static_cast<Eigen::Index>(l.fan_in + 1)};
}

inline void check_inputs(const NetArch& arch, const Vector& w, Eigen::Index x_dim) {
    if (static_cast<std::size_t>(w.size()) != arch.num_params())
        throw std::invalid_argument("weight vector length " + std::to_string(w.size()) + " does not match Q=" +
                                    std::to_string(arch.num_params()));
    if (static_cast<std::size_t>(x_dim) != arch.input_dim)
        throw std::invalid_argument("input dimension " + std::to_string(x_dim) + " does not match d=" +
                                    std::to_string(arch.input_dim));
}

/// Forward pass keeping the input of every layer; returns the output pre-activation.
template <class InputVec>
double forward_trace(const std::vector<LayerShape>& layers, const Vector& w, const InputVec& x,
                     std::vector<Vector>& inputs) {
    inputs.resize(layers.size());
    inputs[0] = x;
    double out = 0.0;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto& l = layers[k];
        const auto W = layer_block(l, w);
        Vector pre = W.leftCols(static_cast<Eigen::Index>(l.fan_in)) * inputs[k] +
                     W.col(static_cast<Eigen::Index>(l.fan_in));
        if (k + 1 < layers.size()) inputs[k + 1] = pre.array().tanh().matrix();
        else out = pre(0);
    }
    return out;
}

/// Accumulates scale * d f_L / d w into grad, given inputs from forward_trace.
template <class GradVec>
void backprop_pre(const std::vector<LayerShape>& layers, const Vector& w, const std::vector<Vector>& inputs,
                  double scale, GradVec&& grad) {
    Vector delta = Vector::Constant(1, scale);
    for (std::size_t k = layers.size(); k-- > 0;) {
        const auto& l = layers[k];
        const auto fan_in = static_cast<Eigen::Index>(l.fan_in);
        const auto fan_out = static_cast<Eigen::Index>(l.fan_out);
        Eigen::Map<Matrix> G(grad.data() + l.offset, fan_out, fan_in + 1);
        G.leftCols(fan_in).noalias() += delta * inputs[k].transpose();
        G.col(fan_in) += delta;
        if (k > 0) {
            const auto W = layer_block(l, w);
            Vector back = W.leftCols(fan_in).transpose() * delta;
            delta = back.array() * (1.0 - inputs[k].array().square());
        }
    }
}

}  // namespace detail

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline Vector init_weights(const NetArch& arch, std::uint64_t seed) {
    arch.validate();
    std::mt19937_64 rng(seed);
    Vector w = Vector::Zero(static_cast<Eigen::Index>(arch.num_params()));
    for (const auto& l : arch.layers()) {
        const double bound = std::sqrt(6.0 / static_cast<double>(l.fan_in + l.fan_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t s = 0; s < l.fan_in; ++s)
            for (std::size_t t = 0; t < l.fan_out; ++t)
                w(static_cast<Eigen::Index>(l.offset + s * l.fan_out + t)) = dist(rng);
    }
    return w;
}

template <class InputVec>
ForwardResult forward(const NetArch& arch, const Vector& w, const InputVec& x) {
    detail::check_inputs(arch, w, x.size());
    std::vector<Vector> inputs;
    const double pre = detail::forward_trace(arch.layers(), w, x, inputs);
    return {activate(arch.output, pre), pre};
}

/// Gradient of the output pre-activation f_L with respect to every weight.
template <class InputVec>
Vector pre_activation_jacobian(const NetArch& arch, const Vector& w, const InputVec& x) {
    detail::check_inputs(arch, w, x.size());
    const auto layers = arch.layers();
    std::vector<Vector> inputs;
    detail::forward_trace(layers, w, x, inputs);
    Vector j = Vector::Zero(w.size());
    detail::backprop_pre(layers, w, inputs, 1.0, j);
    return j;
}

/// Gradient of the network output f with respect to every weight (one backprop pass).
template <class InputVec>
Vector weight_jacobian(const NetArch& arch, const Vector& w, const InputVec& x) {
    detail::check_inputs(arch, w, x.size());
    const auto layers = arch.layers();
    std::vector<Vector> inputs;
    const double pre = detail::forward_trace(layers, w, x, inputs);
    const double slope = activation_slope(arch.output, activate(arch.output, pre));
    Vector j = Vector::Zero(w.size());
    detail::backprop_pre(layers, w, inputs, slope, j);
    return j;
}

/// Per-sample outputs and pre-activation Jacobians for a whole dataset.
struct BatchJacobian {
    Vector output;          // f(w; x_m)
    Vector pre_activation;  // f_L(w; x_m)
    Matrix pre_jacobian;    // row m = d f_L(w; x_m) / d w

    /// Rows of d f / d w, i.e. the weight Jacobians.
    Matrix output_jacobian(Activation act) const {
        Matrix j = pre_jacobian;
        for (Eigen::Index m = 0; m < j.rows(); ++m) j.row(m) *= activation_slope(act, output(m));
        return j;
    }
};

inline BatchJacobian batch_jacobian(const NetArch& arch, const Vector& w, const Dataset& data) {
    const auto n = static_cast<Eigen::Index>(data.size());
    BatchJacobian out{Vector(n), Vector(n), Matrix::Zero(n, w.size())};
    if (n == 0) return out;
    detail::check_inputs(arch, w, data.inputs.cols());
    const auto layers = arch.layers();
    std::vector<Vector> inputs;
    Vector row(w.size());
    for (Eigen::Index m = 0; m < n; ++m) {
        const double pre = detail::forward_trace(layers, w, data.inputs.row(m).transpose(), inputs);
        out.pre_activation(m) = pre;
        out.output(m) = activate(arch.output, pre);
        row.setZero();
        detail::backprop_pre(layers, w, inputs, 1.0, row);
        out.pre_jacobian.row(m) = row.transpose();
    }
    return out;
}

/// dl/df_L for one sample. The sigmoid/cross-entropy pairing uses the exact
/// cancellation f - d.
inline double loss_slope_pre(LossKind loss, Activation act, double d, double f) {
    if (loss == LossKind::cross_entropy && act == Activation::sigmoid) {
        require_binary_target(d);
        return f - d;
    }
    return loss_derivative(loss, d, f) * activation_slope(act, f);
}

inline void check_loss_compatible(const NetArch& arch, LossKind loss) {
    if (loss == LossKind::cross_entropy && arch.output != Activation::sigmoid)
        throw std::invalid_argument("cross-entropy loss requires a sigmoid output unit");
}

/// Gradient of the summed local loss sum_m l(d_m, f(w; x_m)). Empty data gives zero.
inline Vector local_gradient(const NetArch& arch, const Vector& w, const Dataset& data, LossKind loss) {
    check_loss_compatible(arch, loss);
    Vector grad = Vector::Zero(w.size());
    if (data.empty()) return grad;
    detail::check_inputs(arch, w, data.inputs.cols());
    const auto layers = arch.layers();
    std::vector<Vector> inputs;
    for (Eigen::Index m = 0; m < data.inputs.rows(); ++m) {
        const double pre = detail::forward_trace(layers, w, data.inputs.row(m).transpose(), inputs);
        const double f = activate(arch.output, pre);
        detail::backprop_pre(layers, w, inputs, loss_slope_pre(loss, arch.output, data.targets(m), f), grad);
    }
    return grad;
}

/// g_i(w) = sum_m l(d_m, f(w; x_m)).
inline double local_loss(const NetArch& arch, const Vector& w, const Dataset& data, LossKind loss) {
    check_loss_compatible(arch, loss);
    if (data.empty()) return 0.0;
    detail::check_inputs(arch, w, data.inputs.cols());
    const auto layers = arch.layers();
    std::vector<Vector> inputs;
    double total = 0.0;
    for (Eigen::Index m = 0; m < data.inputs.rows(); ++m) {
        const double pre = detail::forward_trace(layers, w, data.inputs.row(m).transpose(), inputs);
        total += loss_eval(loss, data.targets(m), activate(arch.output, pre));
    }
    return total;
}

}  // namespace nextnn
