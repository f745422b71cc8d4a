#include "sgal/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace sgal {

namespace {
constexpr double kLogVarClamp = 10.0;
}

SgalModel make_model(const ModelConfig& cfg, Rng& rng) {
    SgalModel m;
    m.feature_dim = cfg.feature_dim;
    m.latent_dim = cfg.latent_dim;
    m.attribute_dim = cfg.attribute_dim;

    m.encoder.layers.push_back(make_dense_layer(cfg.feature_dim, cfg.hidden_units,
                                                Activation::Relu, cfg.encoder_dropout, rng));
    m.encoder.layers.push_back(make_dense_layer(cfg.hidden_units, 2 * cfg.latent_dim,
                                                Activation::Identity, 0.0, rng));

    m.decoder.layers.push_back(make_dense_layer(cfg.latent_dim, cfg.hidden_units,
                                                Activation::Relu, cfg.decoder_dropout, rng));
    m.decoder.layers.push_back(make_dense_layer(cfg.hidden_units, cfg.feature_dim,
                                                Activation::Identity, 0.0, rng));

    m.prior.layers.push_back(make_dense_layer(cfg.attribute_dim, cfg.prior_hidden_units,
                                              Activation::Tanh, 0.0, rng));
    m.prior.layers.push_back(make_dense_layer(cfg.prior_hidden_units, cfg.latent_dim,
                                              Activation::Identity, 0.0, rng));
    return m;
}

EncoderOutput encode(const SgalModel& model, std::span<const double> x, ForwardMode mode,
                     Rng& rng) {
    if (x.size() != model.feature_dim)
        throw ShapeError("encode: expected feature of dimension " +
                         std::to_string(model.feature_dim) + ", got " +
                         std::to_string(x.size()));
    const auto res = forward(model.encoder, x, mode, rng);
    const std::size_t m = model.latent_dim;
    EncoderOutput out;
    out.mean.assign(res.output.begin(), res.output.begin() + m);
    out.log_variance.assign(res.output.begin() + m, res.output.end());
    for (auto& lv : out.log_variance) lv = std::clamp(lv, -kLogVarClamp, kLogVarClamp);
    return out;
}

Vec reparameterize(const EncoderOutput& enc, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec z(enc.mean.size());
    for (std::size_t j = 0; j < z.size(); ++j)
        z[j] = enc.mean[j] + std::exp(0.5 * enc.log_variance[j]) * gauss(rng);
    return z;
}

Vec decode(const SgalModel& model, std::span<const double> z, ForwardMode mode, Rng& rng) {
    if (z.size() != model.latent_dim)
        throw ShapeError("decode: expected latent of dimension " +
                         std::to_string(model.latent_dim) + ", got " +
                         std::to_string(z.size()));
    return forward(model.decoder, z, mode, rng).output;
}

Vec prior_mean(const SgalModel& model, std::span<const double> attribute, ForwardMode mode,
               Rng& rng) {
    if (attribute.size() != model.attribute_dim)
        throw ShapeError("prior_mean: expected attribute of dimension " +
                         std::to_string(model.attribute_dim) + ", got " +
                         std::to_string(attribute.size()));
    return forward(model.prior, attribute, mode, rng).output;
}

namespace {

Vec sample_latent(const Vec& mu, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec z(mu.size());
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = mu[j] + gauss(rng);
    return z;
}

void maybe_add_noise(Vec& x, bool add, Rng& rng) {
    if (!add) return;
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& v : x) v += gauss(rng);
}

} // namespace

std::vector<Vec> generate_unseen(const SgalModel& model, std::span<const double> attribute,
                                 std::size_t count, Rng& rng, const GenerateOptions& opts) {
    if (count == 0) throw UsageError("generate_unseen: count must be >= 1");
    const Vec mu = prior_mean(model, attribute, ForwardMode::EvalDeterministic, rng);
    std::vector<Vec> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const Vec z = sample_latent(mu, rng);
        Vec x = decode(model, z, ForwardMode::EvalDeterministic, rng);
        maybe_add_noise(x, opts.add_observation_noise, rng);
        out.push_back(std::move(x));
    }
    return out;
}

std::vector<Vec> generate_unseen_dropout(const SgalModel& model,
                                         std::span<const double> attribute,
                                         std::size_t count, std::size_t samples_per_latent,
                                         Rng& rng, const GenerateOptions& opts) {
    if (count == 0 || samples_per_latent == 0)
        throw UsageError("generate_unseen_dropout: count and samples_per_latent must be >= 1");
    const bool any_dropout = std::any_of(
        model.decoder.layers.begin(), model.decoder.layers.end(),
        [](const DenseLayer& l) { return l.dropout_rate > 0.0; });
    if (!any_dropout && !opts.allow_zero_dropout)
        throw UsageError("generate_unseen_dropout: no decoder layer has dropout_rate > 0; "
                         "this call would equal generate_unseen");

    const Vec mu = prior_mean(model, attribute, ForwardMode::EvalDeterministic, rng);
    std::vector<Vec> out;
    out.reserve(count * samples_per_latent);
    for (std::size_t i = 0; i < count; ++i) {
        const Vec z = sample_latent(mu, rng);
        for (std::size_t s = 0; s < samples_per_latent; ++s) {
            Vec x = decode(model, z, ForwardMode::EvalWithDropout, rng);
            maybe_add_noise(x, opts.add_observation_noise, rng);
            out.push_back(std::move(x));
        }
    }
    return out;
}

// ---- checkpoint ----

namespace {
constexpr char kModelMagic[8] = {'S', 'G', 'A', 'L', 'M', 'O', 'D', 'L'};
constexpr std::uint32_t kModelVersion = 1;

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw IoError("truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}
} // namespace

void save_checkpoint(const SgalModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(kModelMagic, 8);
    write_u64(out, kModelVersion);
    write_u64(out, model.feature_dim);
    write_u64(out, model.latent_dim);
    write_u64(out, model.attribute_dim);
    write_u64(out, model.class_count);
    save_parameter_set(model.encoder, out);
    save_parameter_set(model.decoder, out);
    save_parameter_set(model.prior, out);
    if (!out) throw IoError("failed writing checkpoint " + path);
}

SgalModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kModelMagic, 8) != 0)
        throw DataError("bad checkpoint magic in " + path);
    const std::uint64_t version = read_u64(in);
    if (version != kModelVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    SgalModel m;
    m.feature_dim = static_cast<std::size_t>(read_u64(in));
    m.latent_dim = static_cast<std::size_t>(read_u64(in));
    m.attribute_dim = static_cast<std::size_t>(read_u64(in));
    m.class_count = static_cast<std::size_t>(read_u64(in));
    m.encoder = load_parameter_set(in);
    m.decoder = load_parameter_set(in);
    m.prior = load_parameter_set(in);

    if (m.encoder.input_dim() != m.feature_dim ||
        m.encoder.output_dim() != 2 * m.latent_dim ||
        m.decoder.input_dim() != m.latent_dim || m.decoder.output_dim() != m.feature_dim ||
        m.prior.input_dim() != m.attribute_dim || m.prior.output_dim() != m.latent_dim)
        throw DataError("checkpoint network dimensions disagree with header in " + path);
    return m;
}

} // namespace sgal
