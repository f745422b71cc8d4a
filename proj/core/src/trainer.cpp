#include "sgal/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace sgal {

namespace {

using Clock = std::chrono::steady_clock;

double resolved_margin(const TrainConfig& cfg, const SgalModel& model) {
    return cfg.margin > 0.0 ? cfg.margin : default_margin(model.latent_dim);
}

std::vector<std::pair<Vec, Vec>> sample_seen_batch(const Dataset& train, std::size_t count,
                                                   const std::vector<ClassEntry>& seen,
                                                   Rng& rng) {
    std::map<int, const Vec*> attr_of;
    for (const auto& e : seen) attr_of[e.label] = &e.attribute;
    std::uniform_int_distribution<std::size_t> pick(0, train.n - 1);
    std::vector<std::pair<Vec, Vec>> batch;
    batch.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t row = pick(rng);
        const auto x = train.row(row);
        batch.emplace_back(Vec(x.begin(), x.end()), *attr_of.at(train.labels[row]));
    }
    return batch;
}

void check_finite(const LossBreakdown& loss, std::size_t iteration) {
    if (!std::isfinite(loss.total))
        throw NumericError("training diverged: non-finite loss at iteration " +
                           std::to_string(iteration));
}

struct ValEval {
    double seen = 0.0;
    double unseen = 0.0;
    double h = 0.0;
};

ValEval evaluate_validation(const SgalModel& model, const TrainData& data) {
    ValEval v;
    std::vector<ClassEntry> all = data.seen_classes;
    all.insert(all.end(), data.unseen_classes.begin(), data.unseen_classes.end());
    if (data.val_unseen.n > 0 && data.val_seen.n > 0) {
        const auto report =
            evaluate_gzsl(model, data.val_seen, data.val_unseen, all, data.unseen_labels);
        v.seen = report.seen_top1;
        v.unseen = report.unseen_top1;
        v.h = report.harmonic;
    } else if (data.val_seen.n > 0) {
        // no unseen validation data: select on seen accuracy
        const auto report = evaluate_gzsl(model, data.val_seen, data.val_seen, all,
                                          data.unseen_labels);
        v.seen = report.seen_top1;
        v.unseen = 0.0;
        v.h = report.seen_top1;
    }
    return v;
}

} // namespace

OptimizerStates OptimizerStates::init(const SgalModel& model, const AdamConfig& cfg) {
    return {AdamState::init(model.encoder, cfg), AdamState::init(model.decoder, cfg),
            AdamState::init(model.prior, cfg)};
}

void pretrain_seen(SgalModel& model, const TrainData& data, const TrainConfig& cfg,
                   OptimizerStates& opt, Rng& rng, std::vector<TrainLogRecord>& log) {
    if (data.train.n == 0) throw UsageError("pretrain_seen: empty training set");

    ElboOptions opts;
    opts.margin = resolved_margin(cfg, model);
    opts.regularization_weight = cfg.regularization_weight;
    opts.mode = ForwardMode::TrainWithDropout;

    for (std::size_t it = 1; it <= cfg.pretrain_iterations; ++it) {
        const auto t0 = Clock::now();
        auto batch = sample_seen_batch(data.train, cfg.seen_batch_size, data.seen_classes, rng);
        auto res = elbo_loss(model, batch, data.seen_classes, opts, rng);
        check_finite(res.loss, it);
        adam_step(model.encoder, res.grad.encoder, opt.encoder);
        adam_step(model.decoder, res.grad.decoder, opt.decoder);
        adam_step(model.prior, res.grad.prior, opt.prior);

        TrainLogRecord rec;
        rec.iteration = it;
        rec.phase = TrainPhase::Pretrain;
        rec.loss = res.loss;
        if (cfg.eval_every > 0 && it % cfg.eval_every == 0) {
            const auto v = evaluate_validation(model, data);
            rec.seen_top1 = v.seen;
            rec.unseen_top1 = v.unseen;
            rec.harmonic = v.h;
        }
        rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0)
                          .count();
        log.push_back(std::move(rec));
    }
}

SgalStepResult sgal_step(SgalModel& model, const TrainData& data, const TrainConfig& cfg,
                         OptimizerStates& opt, Rng& rng) {
    if (data.unseen_classes.empty())
        throw UsageError("sgal_step: empty unseen attribute list");

    SgalStepResult result;

    auto batch = sample_seen_batch(data.train, cfg.seen_batch_size, data.seen_classes, rng);

    std::uniform_int_distribution<std::size_t> pick(0, data.unseen_classes.size() - 1);
    for (std::size_t n = 0; n < cfg.unseen_batch_size; ++n) {
        const auto& entry = data.unseen_classes[pick(rng)];
        std::vector<Vec> generated;
        if (cfg.dropout_generation) {
            generated = generate_unseen_dropout(model, entry.attribute, 1,
                                                cfg.samples_per_latent, rng);
        } else {
            generated = generate_unseen(model, entry.attribute, 1, rng);
        }
        for (auto& x : generated) {
            result.pseudo.emplace_back(x, entry.label);
            batch.emplace_back(std::move(x), entry.attribute);
        }
    }

    std::vector<ClassEntry> table = data.seen_classes;
    table.insert(table.end(), data.unseen_classes.begin(), data.unseen_classes.end());

    ElboOptions opts;
    opts.margin = resolved_margin(cfg, model);
    opts.regularization_weight = cfg.regularization_weight;
    opts.mode = ForwardMode::TrainWithDropout;

    auto res = elbo_loss(model, batch, table, opts, rng);
    result.loss = res.loss;
    adam_step(model.encoder, res.grad.encoder, opt.encoder);
    adam_step(model.decoder, res.grad.decoder, opt.decoder);
    adam_step(model.prior, res.grad.prior, opt.prior);
    return result;
}

TrainResult train_sgal(SgalModel model, const TrainData& data, const TrainConfig& cfg) {
    Rng rng(cfg.seed);
    TrainResult out;

    auto opt = OptimizerStates::init(model, cfg.adam);
    pretrain_seen(model, data, cfg, opt, rng, out.log);

    // the pretrained model (mmVAE) is the first checkpoint candidate
    {
        const auto v = evaluate_validation(model, data);
        out.model = model;
        out.best_val_h = v.h;
        out.best_iteration = cfg.pretrain_iterations;
    }

    // fresh optimizer for the fine-tuning phase; the objective's support changed
    AdamConfig sgal_adam = cfg.adam;
    sgal_adam.learning_rate *= cfg.sgal_lr_scale;
    opt = OptimizerStates::init(model, sgal_adam);

    for (std::size_t it = 1; it <= cfg.sgal_iterations; ++it) {
        const std::size_t global = cfg.pretrain_iterations + it;
        const auto t0 = Clock::now();
        auto step = sgal_step(model, data, cfg, opt, rng);
        check_finite(step.loss, global);

        TrainLogRecord rec;
        rec.iteration = global;
        rec.phase = TrainPhase::Sgal;
        rec.loss = step.loss;

        const bool logged_eval = cfg.eval_every > 0 && global % cfg.eval_every == 0;
        if (logged_eval || it == cfg.sgal_iterations) {
            const auto v = evaluate_validation(model, data);
            if (logged_eval) {
                rec.seen_top1 = v.seen;
                rec.unseen_top1 = v.unseen;
                rec.harmonic = v.h;
            }
            if (v.h > out.best_val_h) {
                out.best_val_h = v.h;
                out.best_iteration = global;
                out.model = model;
            }
        }
        rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0)
                          .count();
        out.log.push_back(std::move(rec));
    }

    out.final_model = std::move(model);
    if (cfg.sgal_iterations == 0) out.final_model = out.model;
    return out;
}

void write_train_log(const std::vector<TrainLogRecord>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "iteration,phase,kl,reconstruction,prior_reg,total,seen_top1,unseen_top1,"
           "harmonic,wall_ms\n";
    char buf[40];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        return std::string(buf);
    };
    for (const auto& rec : log) {
        out << rec.iteration << ','
            << (rec.phase == TrainPhase::Pretrain ? "pretrain" : "sgal") << ','
            << fmt(rec.loss.kl_term) << ',' << fmt(rec.loss.reconstruction_term) << ','
            << fmt(rec.loss.prior_regularization_term) << ',' << fmt(rec.loss.total) << ',';
        if (rec.seen_top1) out << fmt(*rec.seen_top1);
        out << ',';
        if (rec.unseen_top1) out << fmt(*rec.unseen_top1);
        out << ',';
        if (rec.harmonic) out << fmt(*rec.harmonic);
        out << ',' << rec.wall_ms << '\n';
    }
}

} // namespace sgal
