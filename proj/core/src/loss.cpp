#include "sgal/loss.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace sgal {

namespace {
constexpr double kLogVarClamp = 10.0;
}

double default_margin(std::size_t latent_dim) {
    return 2.0 * std::sqrt(static_cast<double>(latent_dim));
}

double kl_to_class_prior(const EncoderOutput& enc, std::span<const double> prior_mean) {
    if (enc.mean.size() != prior_mean.size() || enc.mean.size() != enc.log_variance.size())
        throw ShapeError("kl_to_class_prior: dimension mismatch");
    double kl = 0.0;
    for (std::size_t j = 0; j < enc.mean.size(); ++j) {
        const double lv = enc.log_variance[j];
        const double diff = enc.mean[j] - prior_mean[j];
        kl += std::exp(lv) + diff * diff - 1.0 - lv;
    }
    return 0.5 * kl;
}

double reconstruction_loss(std::span<const double> x,
                           std::span<const double> reconstruction_mean) {
    if (x.size() != reconstruction_mean.size())
        throw ShapeError("reconstruction_loss: dimension mismatch");
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double diff = x[j] - reconstruction_mean[j];
        acc += diff * diff;
    }
    return 0.5 * acc;
}

double prior_regularization(const std::vector<Vec>& prior_means, double margin) {
    if (prior_means.size() < 2)
        throw UsageError("prior_regularization needs at least two prior means");
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < prior_means.size(); ++i) {
        for (std::size_t j = i + 1; j < prior_means.size(); ++j) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < prior_means[i].size(); ++c) {
                const double diff = prior_means[i][c] - prior_means[j][c];
                d2 += diff * diff;
            }
            const double gap = margin - std::sqrt(d2);
            if (gap > 0.0) acc += gap * gap;
            ++pairs;
        }
    }
    return acc / static_cast<double>(pairs);
}

ElboResult elbo_loss(const SgalModel& model,
                     const std::vector<std::pair<Vec, Vec>>& batch,
                     const std::vector<ClassEntry>& class_table, const ElboOptions& opts,
                     Rng& rng) {
    if (batch.empty()) throw UsageError("elbo_loss: empty batch");

    const std::size_t m = model.latent_dim;
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    ElboResult res;
    res.grad.encoder = ParamGrad::zeros_like(model.encoder);
    res.grad.decoder = ParamGrad::zeros_like(model.decoder);
    res.grad.prior = ParamGrad::zeros_like(model.prior);

    // One prior forward per distinct attribute; output-gradients accumulate
    // across the KL terms and the regularizer, then a single backward per
    // attribute folds them into the prior-network gradient.
    struct PriorEntry {
        Tape tape;
        Vec mean;
        Vec out_grad;
    };
    std::map<Vec, PriorEntry> prior_cache;
    auto prior_for = [&](const Vec& attribute) -> PriorEntry& {
        auto it = prior_cache.find(attribute);
        if (it == prior_cache.end()) {
            auto fwd = forward(model.prior, attribute, ForwardMode::EvalDeterministic, rng);
            PriorEntry entry;
            entry.tape = std::move(fwd.tape);
            entry.mean = std::move(fwd.output);
            entry.out_grad.assign(m, 0.0);
            it = prior_cache.emplace(attribute, std::move(entry)).first;
        }
        return it->second;
    };

    std::normal_distribution<double> gauss(0.0, 1.0);

    double kl_sum = 0.0;
    double recon_sum = 0.0;
    for (const auto& [x, attribute] : batch) {
        auto& prior = prior_for(attribute);

        auto enc_fwd = forward(model.encoder, x, opts.mode, rng);
        Vec mu_q(enc_fwd.output.begin(), enc_fwd.output.begin() + m);
        Vec lv_raw(enc_fwd.output.begin() + m, enc_fwd.output.end());
        Vec lv(m);
        std::vector<bool> clamped(m);
        for (std::size_t j = 0; j < m; ++j) {
            lv[j] = std::clamp(lv_raw[j], -kLogVarClamp, kLogVarClamp);
            clamped[j] = lv[j] != lv_raw[j];
        }

        Vec eps(m), z(m);
        for (std::size_t j = 0; j < m; ++j) {
            eps[j] = gauss(rng);
            z[j] = mu_q[j] + std::exp(0.5 * lv[j]) * eps[j];
        }

        auto dec_fwd = forward(model.decoder, z, opts.mode, rng);

        EncoderOutput enc_out{mu_q, lv};
        kl_sum += kl_to_class_prior(enc_out, prior.mean);
        recon_sum += reconstruction_loss(x, dec_fwd.output);

        // reconstruction backward through the decoder
        Vec d_recon(model.feature_dim);
        for (std::size_t j = 0; j < model.feature_dim; ++j)
            d_recon[j] = (dec_fwd.output[j] - x[j]) * inv_b;
        auto dec_back = backward(model.decoder, dec_fwd.tape, d_recon);
        res.grad.decoder.add_scaled(dec_back.grads, 1.0);

        // chain dz into encoder heads, add KL gradients
        Vec enc_out_grad(2 * m, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            const double dz = dec_back.input_grad[j];
            double d_mu = dz + (mu_q[j] - prior.mean[j]) * inv_b;
            double d_lv = dz * 0.5 * std::exp(0.5 * lv[j]) * eps[j] +
                          0.5 * (std::exp(lv[j]) - 1.0) * inv_b;
            enc_out_grad[j] = d_mu;
            enc_out_grad[m + j] = clamped[j] ? 0.0 : d_lv;
            prior.out_grad[j] += (prior.mean[j] - mu_q[j]) * inv_b;
        }
        auto enc_back = backward(model.encoder, enc_fwd.tape, enc_out_grad);
        res.grad.encoder.add_scaled(enc_back.grads, 1.0);
    }

    // prior regularizer over the full class table
    double reg = 0.0;
    if (class_table.size() >= 2) {
        std::vector<PriorEntry*> table_entries;
        table_entries.reserve(class_table.size());
        for (const auto& entry : class_table) table_entries.push_back(&prior_for(entry.attribute));

        const std::size_t n = table_entries.size();
        const double inv_pairs = 2.0 / static_cast<double>(n * (n - 1));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const Vec& mi = table_entries[i]->mean;
                const Vec& mj = table_entries[j]->mean;
                double d2 = 0.0;
                for (std::size_t c = 0; c < m; ++c) {
                    const double diff = mi[c] - mj[c];
                    d2 += diff * diff;
                }
                const double dist = std::sqrt(d2);
                const double gap = opts.margin - dist;
                if (gap <= 0.0) continue;
                reg += gap * gap * inv_pairs;
                if (dist <= 0.0) continue;   // zero subgradient at coincident means
                const double coeff =
                    -2.0 * opts.regularization_weight * gap * inv_pairs / dist;
                for (std::size_t c = 0; c < m; ++c) {
                    const double diff = mi[c] - mj[c];
                    table_entries[i]->out_grad[c] += coeff * diff;
                    table_entries[j]->out_grad[c] -= coeff * diff;
                }
            }
        }
    }

    for (auto& [attribute, entry] : prior_cache) {
        auto back = backward(model.prior, entry.tape, entry.out_grad);
        res.grad.prior.add_scaled(back.grads, 1.0);
    }

    res.loss.kl_term = kl_sum * inv_b;
    res.loss.reconstruction_term = recon_sum * inv_b;
    res.loss.prior_regularization_term = opts.regularization_weight * reg;
    res.loss.total = res.loss.kl_term + res.loss.reconstruction_term +
                     res.loss.prior_regularization_term;
    return res;
}

} // namespace sgal
