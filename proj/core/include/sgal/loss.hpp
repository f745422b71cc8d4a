#pragma once

#include <utility>
#include <vector>

#include "sgal/model.hpp"

namespace sgal {

struct LossBreakdown {
    double kl_term = 0.0;
    double reconstruction_term = 0.0;
    double prior_regularization_term = 0.0;
    double total = 0.0;
};

/// Closed form for KL(N(mu_q, diag sigma_q^2) || N(mu_p, I)).
double kl_to_class_prior(const EncoderOutput& enc, std::span<const double> prior_mean);

/// 0.5 * ||x - reconstruction_mean||^2 (Gaussian constants dropped).
double reconstruction_loss(std::span<const double> x,
                           std::span<const double> reconstruction_mean);

/// Mean over pairs of max(0, margin - ||mu_i - mu_j||)^2. Zero iff every
/// pairwise distance is at least margin.
double prior_regularization(const std::vector<Vec>& prior_means, double margin);

struct ClassEntry {
    int label = 0;
    Vec attribute;
};

struct ElboOptions {
    double margin = 0.0;              // default 2*sqrt(m), filled by callers
    double regularization_weight = 1.0;
    ForwardMode mode = ForwardMode::TrainWithDropout;
};

struct ModelGrad {
    ParamGrad encoder;
    ParamGrad decoder;
    ParamGrad prior;
};

struct ElboResult {
    LossBreakdown loss;
    ModelGrad grad;
};

/// Negative ELBO over a batch of (feature, attribute) pairs: mean KL to the
/// class prior plus mean reconstruction loss, plus the weighted prior
/// regularizer over all class prior means in class_table. The gradient spans
/// encoder, decoder and prior network jointly. One reparameterized latent
/// sample per datapoint. Deterministic given (params, rng state).
ElboResult elbo_loss(const SgalModel& model,
                     const std::vector<std::pair<Vec, Vec>>& batch,
                     const std::vector<ClassEntry>& class_table, const ElboOptions& opts,
                     Rng& rng);

double default_margin(std::size_t latent_dim);

} // namespace sgal
