#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgal/classify_eval.hpp"
#include "sgal/data.hpp"
#include "sgal/loss.hpp"
#include "sgal/model.hpp"

namespace sgal {

enum class TrainPhase { Pretrain, Sgal };

struct TrainConfig {
    std::size_t pretrain_iterations = 4000;
    std::size_t sgal_iterations = 600;
    std::size_t seen_batch_size = 64;      // M
    std::size_t unseen_batch_size = 16;    // N
    bool dropout_generation = false;
    std::size_t samples_per_latent = 5;    // L
    double margin = 0.0;                   // 0 -> 2*sqrt(latent_dim)
    double regularization_weight = 1.0;
    AdamConfig adam;                       // pretraining optimizer
    double sgal_lr_scale = 0.1;            // SGAL phase fine-tunes with a smaller rate
    std::uint64_t seed = 1;
    std::size_t eval_every = 100;
};

struct TrainLogRecord {
    std::size_t iteration = 0;             // global, 1-based across both phases
    TrainPhase phase = TrainPhase::Pretrain;
    LossBreakdown loss;
    std::optional<double> seen_top1;
    std::optional<double> unseen_top1;
    std::optional<double> harmonic;
    std::int64_t wall_ms = 0;
};

/// Everything the training loop consumes. Features are expected to be
/// standardized already.
struct TrainData {
    Dataset train;                          // seen classes only
    std::vector<ClassEntry> seen_classes;
    std::vector<ClassEntry> unseen_classes;
    std::set<int> unseen_labels;
    Dataset val_seen;                       // checkpoint-selection split
    Dataset val_unseen;                     // may be empty (no synthetic unseen val)
};

struct TrainResult {
    SgalModel model;                        // best validation-H checkpoint
    SgalModel final_model;
    double best_val_h = 0.0;
    std::size_t best_iteration = 0;
    std::vector<TrainLogRecord> log;
};

struct OptimizerStates {
    AdamState encoder;
    AdamState decoder;
    AdamState prior;

    static OptimizerStates init(const SgalModel& model, const AdamConfig& cfg);
};

/// Pretraining on seen minibatches only (the mmVAE ablation model).
/// Throws NumericError carrying the iteration index on divergence.
void pretrain_seen(SgalModel& model, const TrainData& data, const TrainConfig& cfg,
                   OptimizerStates& opt, Rng& rng, std::vector<TrainLogRecord>& log);

struct SgalStepResult {
    LossBreakdown loss;
    std::vector<std::pair<Vec, int>> pseudo;   // generated feature, generating label
};

/// One SGAL iteration: M seen samples, N unseen labels drawn with
/// replacement, pseudo-features generated from the current (pre-step) model,
/// then a single Adam step over the union batch with the regularizer spanning
/// seen and unseen prior means. Pseudo-features are constants in the step.
SgalStepResult sgal_step(SgalModel& model, const TrainData& data, const TrainConfig& cfg,
                         OptimizerStates& opt, Rng& rng);

/// Full Algorithm: pretraining followed by sgal_iterations SGAL steps,
/// validation-H checkpoint selection every eval_every iterations.
TrainResult train_sgal(SgalModel model, const TrainData& data, const TrainConfig& cfg);

/// Append-only CSV, one TrainLogRecord per row, floats with 9 significant digits.
void write_train_log(const std::vector<TrainLogRecord>& log, const std::string& path);

} // namespace sgal
