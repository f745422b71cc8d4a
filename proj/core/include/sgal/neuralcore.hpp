#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sgal/errors.hpp"

namespace sgal {

using Vec = std::vector<double>;
using Rng = std::mt19937_64;

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::size_t size() const { return data.size(); }
};

enum class Activation : std::uint8_t { Identity = 0, Relu = 1, Tanh = 2 };

enum class ForwardMode { TrainWithDropout, EvalDeterministic, EvalWithDropout };

/// One fully connected layer: y = dropout(act(W x + b)).
/// Dropout is inverted (kept units scaled by 1/(1-rate)), so evaluation
/// needs no rescaling.
struct DenseLayer {
    Matrix weights;   // out_dim x in_dim
    Vec biases;       // out_dim
    Activation activation = Activation::Identity;
    double dropout_rate = 0.0;

    std::size_t in_dim() const { return weights.cols; }
    std::size_t out_dim() const { return weights.rows; }
};

/// Ordered stack of dense layers; consecutive dimensions must chain.
struct ParameterSet {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }
    std::size_t parameter_count() const;

    /// Throws ShapeError naming the first layer whose input dimension does
    /// not match the previous layer's output dimension.
    void validate_chain() const;
};

/// Gradient (or Adam moment) mirroring the shape of a ParameterSet.
struct ParamGrad {
    struct LayerGrad {
        Matrix weights;
        Vec biases;
    };
    std::vector<LayerGrad> layers;

    static ParamGrad zeros_like(const ParameterSet& params);
    void add_scaled(const ParamGrad& other, double scale);
    void scale(double s);
    bool all_finite() const;
};

/// Per-layer record of everything backward() needs.
struct LayerTape {
    Vec input;
    Vec pre_activation;
    Vec post_activation;   // after activation, before dropout
    Vec dropout_scale;     // per-unit multiplier (0 or 1/(1-rate)); empty if dropout off
};

struct Tape {
    std::vector<LayerTape> layers;
    std::size_t param_signature = 0;   // guards against tape/params mismatch
};

struct ForwardResult {
    Vec output;
    Tape tape;
};

struct BackwardResult {
    ParamGrad grads;
    Vec input_grad;
};

/// He-style uniform fan-in init for relu layers, Xavier-style otherwise.
DenseLayer make_dense_layer(std::size_t in_dim, std::size_t out_dim, Activation act,
                            double dropout_rate, Rng& rng);

ForwardResult forward(const ParameterSet& params, std::span<const double> input,
                      ForwardMode mode, Rng& rng);

/// Exact reverse-mode gradient of the scalar whose output gradient is given,
/// honoring the dropout mask recorded on the tape. Also returns the gradient
/// with respect to the network input (needed for chaining nets).
BackwardResult backward(const ParameterSet& params, const Tape& tape,
                        std::span<const double> output_grad);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    ParamGrad first_moment;
    ParamGrad second_moment;
    std::int64_t step_count = 0;
    AdamConfig config;

    static AdamState init(const ParameterSet& params, const AdamConfig& cfg);
};

/// Standard Adam with bias correction. Throws NumericError on non-finite
/// gradient entries; never partially applies an update.
void adam_step(ParameterSet& params, const ParamGrad& gradient, AdamState& state);

/// Max over parameters of |analytic - central difference| / max(|analytic|, |fd|, 1e-8).
/// loss_fn must be deterministic given params. If max_checks > 0, a
/// deterministic evenly-strided subset of parameters is checked.
double finite_difference_check(ParameterSet& params,
                               const std::function<double(const ParameterSet&)>& loss_fn,
                               const ParamGrad& analytic, double step,
                               std::size_t max_checks = 0);

// Flat binary persistence: 16-byte magic/version header, then per-layer
// records (in_dim, out_dim as int64 LE; activation as 1 byte; dropout_rate
// as f64 LE; row-major weights then biases as f64 LE). Bit-exact round-trip.
void save_parameter_set(const ParameterSet& params, std::ostream& out);
ParameterSet load_parameter_set(std::istream& in);
void save_parameter_set_file(const ParameterSet& params, const std::string& path);
ParameterSet load_parameter_set_file(const std::string& path);

} // namespace sgal
