#include "sgal/neuralcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace sgal {

namespace {

std::size_t shape_signature(const ParameterSet& params) {
    std::size_t h = 1469598103934665603ull;
    auto mix = [&h](std::size_t v) {
        h ^= v;
        h *= 1099511628211ull;
    };
    for (const auto& layer : params.layers) {
        mix(layer.in_dim());
        mix(layer.out_dim());
        mix(static_cast<std::size_t>(layer.activation));
    }
    return h;
}

double apply_activation(Activation act, double x) {
    switch (act) {
        case Activation::Identity: return x;
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Tanh: return std::tanh(x);
    }
    return x;
}

double activation_derivative(Activation act, double pre, double post) {
    switch (act) {
        case Activation::Identity: return 1.0;
        case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: return 1.0 - post * post;
    }
    return 1.0;
}

} // namespace

std::size_t ParameterSet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.weights.size() + layer.biases.size();
    return n;
}

void ParameterSet::validate_chain() const {
    for (std::size_t i = 1; i < layers.size(); ++i) {
        if (layers[i].in_dim() != layers[i - 1].out_dim()) {
            throw ShapeError("layer " + std::to_string(i) + " expects input of dimension " +
                             std::to_string(layers[i].in_dim()) + " but layer " +
                             std::to_string(i - 1) + " outputs " +
                             std::to_string(layers[i - 1].out_dim()));
        }
    }
}

ParamGrad ParamGrad::zeros_like(const ParameterSet& params) {
    ParamGrad g;
    g.layers.reserve(params.layers.size());
    for (const auto& layer : params.layers) {
        LayerGrad lg;
        lg.weights = Matrix(layer.weights.rows, layer.weights.cols);
        lg.biases.assign(layer.biases.size(), 0.0);
        g.layers.push_back(std::move(lg));
    }
    return g;
}

void ParamGrad::add_scaled(const ParamGrad& other, double scale) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& dst = layers[l];
        const auto& src = other.layers[l];
        for (std::size_t i = 0; i < dst.weights.data.size(); ++i)
            dst.weights.data[i] += scale * src.weights.data[i];
        for (std::size_t i = 0; i < dst.biases.size(); ++i)
            dst.biases[i] += scale * src.biases[i];
    }
}

void ParamGrad::scale(double s) {
    for (auto& layer : layers) {
        for (auto& w : layer.weights.data) w *= s;
        for (auto& b : layer.biases) b *= s;
    }
}

bool ParamGrad::all_finite() const {
    for (const auto& layer : layers) {
        for (double w : layer.weights.data)
            if (!std::isfinite(w)) return false;
        for (double b : layer.biases)
            if (!std::isfinite(b)) return false;
    }
    return true;
}

DenseLayer make_dense_layer(std::size_t in_dim, std::size_t out_dim, Activation act,
                            double dropout_rate, Rng& rng) {
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw UsageError("dropout_rate must lie in [0, 1)");
    DenseLayer layer;
    layer.weights = Matrix(out_dim, in_dim);
    layer.biases.assign(out_dim, 0.0);
    layer.activation = act;
    layer.dropout_rate = dropout_rate;

    const double fan_in = static_cast<double>(in_dim);
    double bound;
    if (act == Activation::Relu) {
        bound = std::sqrt(6.0 / fan_in);
    } else {
        bound = std::sqrt(6.0 / (fan_in + static_cast<double>(out_dim)));
    }
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& w : layer.weights.data) w = dist(rng);
    return layer;
}

ForwardResult forward(const ParameterSet& params, std::span<const double> input,
                      ForwardMode mode, Rng& rng) {
    params.validate_chain();
    if (params.layers.empty()) throw ShapeError("forward on an empty ParameterSet");
    if (input.size() != params.input_dim()) {
        throw ShapeError("layer 0 expects input of dimension " +
                         std::to_string(params.input_dim()) + ", got " +
                         std::to_string(input.size()));
    }

    ForwardResult res;
    res.tape.param_signature = shape_signature(params);
    res.tape.layers.resize(params.layers.size());

    Vec current(input.begin(), input.end());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        auto& rec = res.tape.layers[l];
        rec.input = current;

        Vec pre(layer.out_dim(), 0.0);
        for (std::size_t r = 0; r < layer.out_dim(); ++r) {
            double acc = layer.biases[r];
            const double* wrow = &layer.weights.data[r * layer.in_dim()];
            for (std::size_t c = 0; c < layer.in_dim(); ++c) acc += wrow[c] * current[c];
            pre[r] = acc;
        }
        rec.pre_activation = pre;

        Vec post(pre.size());
        for (std::size_t r = 0; r < pre.size(); ++r)
            post[r] = apply_activation(layer.activation, pre[r]);
        rec.post_activation = post;

        const bool dropout_active = mode != ForwardMode::EvalDeterministic &&
                                    layer.dropout_rate > 0.0;
        if (dropout_active) {
            rec.dropout_scale.resize(post.size());
            const double keep = 1.0 - layer.dropout_rate;
            std::bernoulli_distribution keep_dist(keep);
            for (std::size_t r = 0; r < post.size(); ++r)
                rec.dropout_scale[r] = keep_dist(rng) ? 1.0 / keep : 0.0;
            for (std::size_t r = 0; r < post.size(); ++r) post[r] *= rec.dropout_scale[r];
        }
        current = std::move(post);
    }
    res.output = std::move(current);
    return res;
}

BackwardResult backward(const ParameterSet& params, const Tape& tape,
                        std::span<const double> output_grad) {
    if (tape.param_signature != shape_signature(params) ||
        tape.layers.size() != params.layers.size()) {
        throw StateError("tape was not produced by a forward pass of these parameters");
    }
    if (output_grad.size() != params.output_dim())
        throw ShapeError("output_grad dimension does not match the last layer");

    BackwardResult res;
    res.grads = ParamGrad::zeros_like(params);

    Vec grad(output_grad.begin(), output_grad.end());
    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const auto& layer = params.layers[li];
        const auto& rec = tape.layers[li];
        auto& lg = res.grads.layers[li];

        // dropout then activation
        Vec dpre(layer.out_dim());
        for (std::size_t r = 0; r < layer.out_dim(); ++r) {
            double g = grad[r];
            if (!rec.dropout_scale.empty()) g *= rec.dropout_scale[r];
            dpre[r] = g * activation_derivative(layer.activation, rec.pre_activation[r],
                                                rec.post_activation[r]);
        }

        for (std::size_t r = 0; r < layer.out_dim(); ++r) {
            lg.biases[r] = dpre[r];
            double* wg = &lg.weights.data[r * layer.in_dim()];
            for (std::size_t c = 0; c < layer.in_dim(); ++c)
                wg[c] = dpre[r] * rec.input[c];
        }

        Vec dinput(layer.in_dim(), 0.0);
        for (std::size_t r = 0; r < layer.out_dim(); ++r) {
            const double* wrow = &layer.weights.data[r * layer.in_dim()];
            const double g = dpre[r];
            for (std::size_t c = 0; c < layer.in_dim(); ++c) dinput[c] += g * wrow[c];
        }
        grad = std::move(dinput);
    }
    res.input_grad = std::move(grad);
    return res;
}

AdamState AdamState::init(const ParameterSet& params, const AdamConfig& cfg) {
    AdamState s;
    s.first_moment = ParamGrad::zeros_like(params);
    s.second_moment = ParamGrad::zeros_like(params);
    s.step_count = 0;
    s.config = cfg;
    return s;
}

void adam_step(ParameterSet& params, const ParamGrad& gradient, AdamState& state) {
    if (gradient.layers.size() != params.layers.size())
        throw StateError("gradient shape does not match parameters");
    if (!gradient.all_finite())
        throw NumericError("non-finite gradient entries; aborting update");

    state.step_count += 1;
    const auto& cfg = state.config;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));

    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto update = [&](double& p, double& m, double& v, double g) {
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            p -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        };
        auto& layer = params.layers[l];
        auto& m = state.first_moment.layers[l];
        auto& v = state.second_moment.layers[l];
        const auto& g = gradient.layers[l];
        for (std::size_t i = 0; i < layer.weights.data.size(); ++i)
            update(layer.weights.data[i], m.weights.data[i], v.weights.data[i],
                   g.weights.data[i]);
        for (std::size_t i = 0; i < layer.biases.size(); ++i)
            update(layer.biases[i], m.biases[i], v.biases[i], g.biases[i]);
    }
}

double finite_difference_check(ParameterSet& params,
                               const std::function<double(const ParameterSet&)>& loss_fn,
                               const ParamGrad& analytic, double step,
                               std::size_t max_checks) {
    if (step <= 0.0) throw UsageError("finite difference step must be positive");

    // Flatten parameter addresses together with their analytic gradients.
    std::vector<std::pair<double*, double>> entries;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& layer = params.layers[l];
        const auto& g = analytic.layers[l];
        for (std::size_t i = 0; i < layer.weights.data.size(); ++i)
            entries.emplace_back(&layer.weights.data[i], g.weights.data[i]);
        for (std::size_t i = 0; i < layer.biases.size(); ++i)
            entries.emplace_back(&layer.biases[i], g.biases[i]);
    }

    std::size_t stride = 1;
    if (max_checks > 0 && entries.size() > max_checks)
        stride = (entries.size() + max_checks - 1) / max_checks;

    double worst = 0.0;
    for (std::size_t i = 0; i < entries.size(); i += stride) {
        double* p = entries[i].first;
        const double saved = *p;
        *p = saved + step;
        const double up = loss_fn(params);
        *p = saved - step;
        const double down = loss_fn(params);
        *p = saved;
        const double fd = (up - down) / (2.0 * step);
        const double a = entries[i].second;
        const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
        worst = std::max(worst, std::abs(a - fd) / denom);
    }
    return worst;
}

// ---- persistence ----

namespace {

constexpr char kMagic[8] = {'S', 'G', 'A', 'L', 'P', 'S', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_i64(std::ostream& out, std::int64_t v) {
    const auto u = static_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& out, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError("truncated parameter file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::int64_t read_i64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw IoError("truncated parameter file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return static_cast<std::int64_t>(v);
}

double read_f64(std::istream& in) {
    const auto u = static_cast<std::uint64_t>(read_i64(in));
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

} // namespace

void save_parameter_set(const ParameterSet& params, std::ostream& out) {
    out.write(kMagic, 8);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(params.layers.size()));
    for (const auto& layer : params.layers) {
        write_i64(out, static_cast<std::int64_t>(layer.in_dim()));
        write_i64(out, static_cast<std::int64_t>(layer.out_dim()));
        const char act = static_cast<char>(layer.activation);
        out.put(act);
        write_f64(out, layer.dropout_rate);
        for (double w : layer.weights.data) write_f64(out, w);
        for (double b : layer.biases) write_f64(out, b);
    }
    if (!out) throw IoError("failed writing parameter set");
}

ParameterSet load_parameter_set(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("bad parameter-set magic");
    const std::uint32_t version = read_u32(in);
    if (version != kVersion)
        throw DataError("unsupported parameter-set version " + std::to_string(version));
    const std::uint32_t count = read_u32(in);

    ParameterSet params;
    params.layers.reserve(count);
    for (std::uint32_t l = 0; l < count; ++l) {
        DenseLayer layer;
        const auto in_dim = static_cast<std::size_t>(read_i64(in));
        const auto out_dim = static_cast<std::size_t>(read_i64(in));
        const int act = in.get();
        if (act < 0 || act > 2) throw DataError("bad activation code in layer record");
        layer.activation = static_cast<Activation>(act);
        layer.dropout_rate = read_f64(in);
        layer.weights = Matrix(out_dim, in_dim);
        layer.biases.assign(out_dim, 0.0);
        for (auto& w : layer.weights.data) w = read_f64(in);
        for (auto& b : layer.biases) b = read_f64(in);
        params.layers.push_back(std::move(layer));
    }
    params.validate_chain();
    return params;
}

void save_parameter_set_file(const ParameterSet& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    save_parameter_set(params, out);
}

ParameterSet load_parameter_set_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return load_parameter_set(in);
}

} // namespace sgal
