#include "sgal/classify_eval.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace sgal {

double harmonic_mean(double u, double s) {
    if (u < 0.0 || s < 0.0) throw UsageError("harmonic_mean: negative input");
    if (u + s == 0.0) return 0.0;
    return 2.0 * u * s / (u + s);
}

namespace {

// Shared dummy rng for deterministic evaluation paths; never consumed.
Rng& eval_rng() {
    static Rng rng(0);
    return rng;
}

int classify_from_latent(const Vec& latent, const SgalModel& model,
                         const std::vector<ClassEntry>& candidates) {
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    bool first = true;
    for (const auto& entry : candidates) {
        const Vec mu = prior_mean(model, entry.attribute, ForwardMode::EvalDeterministic,
                                  eval_rng());
        double d2 = 0.0;
        for (std::size_t c = 0; c < latent.size(); ++c) {
            const double diff = latent[c] - mu[c];
            d2 += diff * diff;
        }
        if (first || d2 < best_d2 || (d2 == best_d2 && entry.label < best)) {
            best_d2 = d2;
            best = entry.label;
            first = false;
        }
    }
    return best;
}

struct PerClassTally {
    std::map<int, std::pair<std::size_t, std::size_t>> counts;   // correct, total

    void add(int truth, int predicted) {
        auto& [correct, total] = counts[truth];
        if (predicted == truth) ++correct;
        ++total;
    }
    double per_class_average(const std::set<int>* restrict_to = nullptr) const {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& [label, c] : counts) {
            if (restrict_to && !restrict_to->count(label)) continue;
            sum += 100.0 * static_cast<double>(c.first) / static_cast<double>(c.second);
            ++n;
        }
        return n == 0 ? 0.0 : sum / static_cast<double>(n);
    }
};

PerClassTally run_classifier(const SgalModel& model, const Dataset& test,
                             const std::vector<ClassEntry>& candidates) {
    if (test.n == 0) throw DataError("evaluation on an empty test set");
    PerClassTally tally;
    // prior means are loop-invariant; compute once
    std::vector<std::pair<int, Vec>> clusters;
    clusters.reserve(candidates.size());
    for (const auto& entry : candidates)
        clusters.emplace_back(entry.label,
                              prior_mean(model, entry.attribute,
                                         ForwardMode::EvalDeterministic, eval_rng()));
    for (std::size_t i = 0; i < test.n; ++i) {
        const auto enc = encode(model, test.row(i), ForwardMode::EvalDeterministic,
                                eval_rng());
        int best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        bool first = true;
        for (const auto& [label, mu] : clusters) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < enc.mean.size(); ++c) {
                const double diff = enc.mean[c] - mu[c];
                d2 += diff * diff;
            }
            if (first || d2 < best_d2 || (d2 == best_d2 && label < best)) {
                best_d2 = d2;
                best = label;
                first = false;
            }
        }
        tally.add(test.labels[i], best);
    }
    return tally;
}

} // namespace

int classify(const SgalModel& model, std::span<const double> x,
             const std::vector<ClassEntry>& candidate_classes) {
    if (candidate_classes.empty()) throw UsageError("classify: empty candidate list");
    const auto enc = encode(model, x, ForwardMode::EvalDeterministic, eval_rng());
    return classify_from_latent(enc.mean, model, candidate_classes);
}

double evaluate_conventional(const SgalModel& model, const Dataset& test_unseen,
                             const std::vector<ClassEntry>& unseen_classes) {
    std::set<int> allowed;
    for (const auto& e : unseen_classes) allowed.insert(e.label);
    for (int label : test_unseen.labels)
        if (!allowed.count(label))
            throw DataError("conventional evaluation: test label " + std::to_string(label) +
                            " outside the unseen class set");
    return run_classifier(model, test_unseen, unseen_classes).per_class_average();
}

double evaluate_conventional_per_sample(const SgalModel& model, const Dataset& test_unseen,
                                        const std::vector<ClassEntry>& unseen_classes) {
    if (test_unseen.n == 0) throw DataError("evaluation on an empty test set");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_unseen.n; ++i)
        if (classify(model, test_unseen.row(i), unseen_classes) == test_unseen.labels[i])
            ++correct;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(test_unseen.n);
}

GzslReport evaluate_gzsl(const SgalModel& model, const Dataset& test_seen,
                         const Dataset& test_unseen,
                         const std::vector<ClassEntry>& all_classes,
                         const std::set<int>& unseen_labels) {
    auto seen_tally = run_classifier(model, test_seen, all_classes);
    auto unseen_tally = run_classifier(model, test_unseen, all_classes);

    GzslReport report;
    std::set<int> seen_group;
    for (const auto& [label, c] : seen_tally.counts) {
        seen_group.insert(label);
        report.per_class_accuracies[label] =
            100.0 * static_cast<double>(c.first) / static_cast<double>(c.second);
    }
    for (const auto& [label, c] : unseen_tally.counts)
        report.per_class_accuracies[label] =
            100.0 * static_cast<double>(c.first) / static_cast<double>(c.second);

    report.seen_top1 = seen_tally.per_class_average();
    report.unseen_top1 = unseen_tally.per_class_average(&unseen_labels);
    report.harmonic = harmonic_mean(report.unseen_top1, report.seen_top1);
    return report;
}

std::string format_report(const GzslReport& report, const std::set<int>& unseen_labels) {
    std::ostringstream out;
    out.precision(9);
    out << "unseen_top1 = " << report.unseen_top1 << "\n";
    out << "seen_top1 = " << report.seen_top1 << "\n";
    out << "harmonic = " << report.harmonic << "\n";
    for (const auto& [label, acc] : report.per_class_accuracies)
        out << "class_" << label << (unseen_labels.count(label) ? " (unseen)" : " (seen)")
            << " = " << acc << "\n";
    return out.str();
}

void write_report(const GzslReport& report, const std::set<int>& unseen_labels,
                  const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << format_report(report, unseen_labels);
}

std::vector<ClassEntry> class_entries(const AttributeTable& table,
                                      const std::set<int>& labels) {
    std::vector<ClassEntry> out;
    out.reserve(labels.size());
    for (int label : labels) {
        auto it = table.entries.find(label);
        if (it == table.entries.end())
            throw DataError("label " + std::to_string(label) + " has no attribute vector");
        out.push_back({label, it->second});
    }
    return out;
}

std::vector<ClassEntry> class_entries(const AttributeTable& table) {
    std::vector<ClassEntry> out;
    out.reserve(table.entries.size());
    for (const auto& [label, attr] : table.entries) out.push_back({label, attr});
    return out;
}

} // namespace sgal
