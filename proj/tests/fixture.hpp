#pragma once

// Shared helpers for tests: standardized TrainData built from the synthetic
// fixture, plus small model factories.

#include <algorithm>

#include "sgal/classify_eval.hpp"
#include "sgal/data.hpp"
#include "sgal/trainer.hpp"

namespace sgal::testfix {

struct Fixture {
    SyntheticBundle bundle;
    Standardizer standardizer;
    TrainData train_data;
    Dataset test_seen;
    Dataset test_unseen;
    std::vector<ClassEntry> all_classes;
};

inline std::vector<std::size_t> rows_of_ids(const Dataset& data,
                                            const std::vector<std::string>& ids) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < data.n; ++i) index[data.ids[i]] = i;
    std::vector<std::size_t> rows;
    for (const auto& id : ids) rows.push_back(index.at(id));
    return rows;
}

inline Fixture make_fixture(const SyntheticConfig& cfg) {
    Fixture f;
    f.bundle = generate_synthetic(cfg);
    const auto& splits = f.bundle.splits;

    f.standardizer =
        Standardizer::fit(f.bundle.dataset, rows_of_ids(f.bundle.dataset, splits.train_ids));
    Dataset standardized = f.bundle.dataset;
    f.standardizer.apply(standardized);

    f.train_data.train = subset_by_ids(standardized, splits.train_ids);
    f.train_data.seen_classes = class_entries(f.bundle.attributes, splits.seen_labels);
    f.train_data.unseen_classes = class_entries(f.bundle.attributes, splits.unseen_labels);
    f.train_data.unseen_labels = splits.unseen_labels;

    Dataset val = subset_by_ids(standardized, splits.val_ids);
    for (std::size_t i = 0; i < val.n; ++i) {
        Dataset& dst = splits.unseen_labels.count(val.labels[i]) ? f.train_data.val_unseen
                                                                 : f.train_data.val_seen;
        if (dst.d == 0) dst.d = val.d;
        const auto row = val.row(i);
        dst.features.insert(dst.features.end(), row.begin(), row.end());
        dst.labels.push_back(val.labels[i]);
        dst.ids.push_back(val.ids[i]);
        ++dst.n;
    }

    f.test_seen = subset_by_ids(standardized, splits.test_seen_ids);
    f.test_unseen = subset_by_ids(standardized, splits.test_unseen_ids);

    f.all_classes = f.train_data.seen_classes;
    f.all_classes.insert(f.all_classes.end(), f.train_data.unseen_classes.begin(),
                         f.train_data.unseen_classes.end());
    return f;
}

inline Fixture make_default_fixture(std::uint64_t seed = 42) {
    SyntheticConfig cfg;
    cfg.seed = seed;
    return make_fixture(cfg);
}

/// Small model for fast unit tests.
inline SgalModel make_small_model(Rng& rng, std::size_t d = 6, std::size_t m = 3,
                                  std::size_t k = 4, std::size_t hidden = 16,
                                  double decoder_dropout = 0.0) {
    ModelConfig cfg;
    cfg.feature_dim = d;
    cfg.latent_dim = m;
    cfg.attribute_dim = k;
    cfg.hidden_units = hidden;
    cfg.prior_hidden_units = hidden;
    cfg.decoder_dropout = decoder_dropout;
    return make_model(cfg, rng);
}

} // namespace sgal::testfix
