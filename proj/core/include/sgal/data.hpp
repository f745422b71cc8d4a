#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sgal/neuralcore.hpp"

namespace sgal {

/// Feature rows with integer labels and stable string ids.
struct Dataset {
    std::size_t n = 0;
    std::size_t d = 0;
    Vec features;                    // n x d, row-major
    std::vector<int> labels;
    std::vector<std::string> ids;

    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * d, d};
    }
    std::span<double> row(std::size_t i) {
        return {features.data() + i * d, d};
    }
};

struct AttributeTable {
    std::size_t dim = 0;
    std::map<int, Vec> entries;
};

struct SplitSpec {
    std::set<int> seen_labels;
    std::set<int> unseen_labels;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_seen_ids;
    std::vector<std::string> test_unseen_ids;
    std::vector<std::string> val_ids;
};

struct SyntheticGroundTruth {
    std::map<int, Vec> class_centroids;
    double noise_std = 0.0;
    std::uint64_t seed = 0;
};

struct SyntheticConfig {
    std::size_t num_seen = 8;
    std::size_t num_unseen = 4;
    std::size_t feature_dim = 32;
    std::size_t attribute_dim = 12;
    std::size_t samples_per_class = 200;
    double noise_std = 0.2;
    double attribute_smoothness = 0.05;   // perturbation std around convex combinations
    std::uint64_t seed = 42;
};

struct SyntheticBundle {
    Dataset dataset;            // all samples, seen and unseen
    AttributeTable attributes;
    SplitSpec splits;
    SyntheticGroundTruth ground_truth;
};

/// Seen attributes are drawn i.i.d.; unseen attributes are convex combinations
/// of seen ones plus an attribute_smoothness perturbation. Attributes map
/// through a fixed seeded affine-tanh-affine function to feature centroids;
/// features are N(centroid, noise_std^2 I). Train covers seen classes only.
SyntheticBundle generate_synthetic(const SyntheticConfig& cfg);

/// Nearest-true-centroid classification, optimal under isotropic noise.
/// Returns per-class-averaged top-1 percentage over candidate_labels.
double bayes_oracle_accuracy(const SyntheticGroundTruth& ground_truth, const Dataset& test,
                             const std::vector<int>& candidate_labels);

struct LoadedDataset {
    Dataset dataset;
    AttributeTable attributes;
    SplitSpec splits;
};

// Directory layout: features.csv, attributes.csv, splits.txt
// (plus ground_truth.csv when the data is synthetic).
LoadedDataset load_dataset(const std::string& directory);
void save_dataset(const std::string& directory, const Dataset& dataset,
                  const AttributeTable& attributes, const SplitSpec& splits);
void save_ground_truth(const std::string& directory, const SyntheticGroundTruth& gt);
SyntheticGroundTruth load_ground_truth(const std::string& directory);

/// Top-2 principal components via power iteration with deflation.
/// Output variance along axis 1 >= axis 2. Requires >= 3 vectors.
std::vector<std::array<double, 2>> project_2d(const std::vector<Vec>& vectors);

/// Per-coordinate affine standardization fitted on training statistics.
struct Standardizer {
    Vec mean;
    Vec inv_std;

    static Standardizer fit(const Dataset& data, const std::vector<std::size_t>& rows);
    void apply(Dataset& data) const;
    Vec apply_vec(std::span<const double> x) const;
    void save(const std::string& path) const;
    static Standardizer load(const std::string& path);
};

/// Rows of `data` whose ids appear in `ids`. Throws DataError on unknown ids.
Dataset subset_by_ids(const Dataset& data, const std::vector<std::string>& ids);

} // namespace sgal
