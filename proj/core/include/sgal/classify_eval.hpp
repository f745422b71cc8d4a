#pragma once

#include <map>
#include <string>
#include <vector>

#include "sgal/data.hpp"
#include "sgal/loss.hpp"
#include "sgal/model.hpp"

namespace sgal {

/// Generalized zero-shot report. u and s are per-class-averaged top-1
/// percentages over the unseen and seen groups; H is their harmonic mean.
struct GzslReport {
    double unseen_top1 = 0.0;
    double seen_top1 = 0.0;
    double harmonic = 0.0;
    std::map<int, double> per_class_accuracies;
};

/// 2us/(u+s), or 0 when u+s = 0. Throws UsageError on negative input.
double harmonic_mean(double u, double s);

/// Nearest prior cluster in latent space: argmin over candidates of
/// ||encode(x).mean - prior_mean(a)||. Ties break to the smallest label.
/// Equivalent to the Gaussian log-density argmax since all cluster
/// covariances are identity.
int classify(const SgalModel& model, std::span<const double> x,
             const std::vector<ClassEntry>& candidate_classes);

/// Top-1 restricted to unseen candidates, per-class averaged percentage.
double evaluate_conventional(const SgalModel& model, const Dataset& test_unseen,
                             const std::vector<ClassEntry>& unseen_classes);

/// Per-sample-averaged variant (secondary reporting).
double evaluate_conventional_per_sample(const SgalModel& model, const Dataset& test_unseen,
                                        const std::vector<ClassEntry>& unseen_classes);

GzslReport evaluate_gzsl(const SgalModel& model, const Dataset& test_seen,
                         const Dataset& test_unseen,
                         const std::vector<ClassEntry>& all_classes,
                         const std::set<int>& unseen_labels);

/// Flat key-value text form of a report (u, s, H and per-class lines).
std::string format_report(const GzslReport& report, const std::set<int>& unseen_labels);
void write_report(const GzslReport& report, const std::set<int>& unseen_labels,
                  const std::string& path);

std::vector<ClassEntry> class_entries(const AttributeTable& table,
                                      const std::set<int>& labels);
std::vector<ClassEntry> class_entries(const AttributeTable& table);

} // namespace sgal
