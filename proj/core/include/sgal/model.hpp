#pragma once

#include <string>
#include <vector>

#include "sgal/neuralcore.hpp"

namespace sgal {

/// Diagonal-Gaussian encoder output. log_variance is clamped to [-10, 10].
struct EncoderOutput {
    Vec mean;
    Vec log_variance;
};

/// The three networks: encoder q(z|x), decoder p(x|z) and the prior network
/// mapping class attributes to latent cluster means (cluster covariance is
/// identity by construction and carries no parameters).
struct SgalModel {
    ParameterSet encoder;   // d -> 2m (mean head then log-variance head)
    ParameterSet decoder;   // m -> d
    ParameterSet prior;     // k -> m
    std::size_t feature_dim = 0;
    std::size_t latent_dim = 0;
    std::size_t attribute_dim = 0;
    std::size_t class_count = 0;   // recorded in checkpoints
};

struct ModelConfig {
    std::size_t feature_dim = 32;
    std::size_t latent_dim = 8;
    std::size_t attribute_dim = 12;
    std::size_t hidden_units = 512;        // encoder / decoder hidden layer
    std::size_t prior_hidden_units = 128;
    double decoder_dropout = 0.2;          // hidden-layer dropout used for MC generation
    double encoder_dropout = 0.0;
};

SgalModel make_model(const ModelConfig& cfg, Rng& rng);

EncoderOutput encode(const SgalModel& model, std::span<const double> x, ForwardMode mode,
                     Rng& rng);

/// z = mean + exp(0.5 * log_variance) * eps, eps ~ N(0, I).
Vec reparameterize(const EncoderOutput& enc, Rng& rng);

Vec decode(const SgalModel& model, std::span<const double> z, ForwardMode mode, Rng& rng);

/// mu(a). Prior-network dropout is structurally absent; all generation paths
/// call this deterministically.
Vec prior_mean(const SgalModel& model, std::span<const double> attribute, ForwardMode mode,
               Rng& rng);

struct GenerateOptions {
    bool add_observation_noise = false;   // ablation switch; defaults to decoder mean
    bool allow_zero_dropout = false;      // test hook: skip the dropout-rate guard
};

/// For each sample: z ~ N(prior_mean(a), I), x = decode(z) deterministically.
std::vector<Vec> generate_unseen(const SgalModel& model, std::span<const double> attribute,
                                 std::size_t count, Rng& rng,
                                 const GenerateOptions& opts = {});

/// count latent draws, each decoded samples_per_latent times under
/// independent decoder dropout masks. Returns count * samples_per_latent
/// features. Throws UsageError if no decoder layer has dropout.
std::vector<Vec> generate_unseen_dropout(const SgalModel& model,
                                         std::span<const double> attribute,
                                         std::size_t count, std::size_t samples_per_latent,
                                         Rng& rng, const GenerateOptions& opts = {});

// Checkpoint: header (dims, class count, version) followed by the three
// parameter-set blocks in encoder, decoder, prior order.
void save_checkpoint(const SgalModel& model, const std::string& path);
SgalModel load_checkpoint(const std::string& path);

} // namespace sgal
