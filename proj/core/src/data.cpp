#include "sgal/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace sgal {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

double parse_double(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        if (!std::isfinite(v)) throw DataError("non-finite value in " + context);
        return v;
    } catch (const DataError&) {
        throw;
    } catch (const std::exception&) {
        throw DataError("cannot parse '" + s + "' as a number in " + context);
    }
}

int parse_label(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("cannot parse '" + s + "' as a label in " + context);
    }
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace

// ---- synthetic fixture ----

SyntheticBundle generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.num_seen < 2 || cfg.num_unseen < 1)
        throw UsageError("generate_synthetic: need at least 2 seen and 1 unseen class");
    if (cfg.noise_std <= 0.0) throw UsageError("generate_synthetic: noise_std must be > 0");
    if (cfg.samples_per_class < 4)
        throw UsageError("generate_synthetic: samples_per_class too small to split");

    Rng rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const std::size_t S = cfg.num_seen;
    const std::size_t U = cfg.num_unseen;
    const std::size_t k = cfg.attribute_dim;
    const std::size_t d = cfg.feature_dim;

    SyntheticBundle out;
    out.attributes.dim = k;

    // seen attributes: i.i.d. standard normal
    std::vector<Vec> seen_attrs(S, Vec(k));
    for (auto& a : seen_attrs)
        for (auto& v : a) v = gauss(rng);

    // unseen attributes: perturbed convex combinations of three seen
    // attributes with one dominant component, so each unseen class resembles
    // a particular seen class without duplicating it
    std::vector<Vec> unseen_attrs(U, Vec(k, 0.0));
    std::uniform_int_distribution<std::size_t> pick(0, S - 1);
    std::uniform_real_distribution<double> dominant(0.55, 0.8);
    std::uniform_real_distribution<double> split(0.2, 0.8);
    for (std::size_t u = 0; u < U; ++u) {
        auto& a = unseen_attrs[u];
        const std::size_t lead = u % S;   // spread dominant classes around
        std::array<std::size_t, 3> idx{lead, pick(rng), pick(rng)};
        const double w0 = dominant(rng);
        const double r = split(rng);
        const std::array<double, 3> w{w0, (1.0 - w0) * r, (1.0 - w0) * (1.0 - r)};
        for (std::size_t t = 0; t < 3; ++t)
            for (std::size_t c = 0; c < k; ++c) a[c] += w[t] * seen_attrs[idx[t]][c];
        for (auto& v : a) v += cfg.attribute_smoothness * gauss(rng);
    }

    // fixed seeded smooth attribute -> centroid map: affine, tanh, affine
    const std::size_t h = 64;
    Matrix w1(h, k);
    Vec b1(h);
    Matrix w2(d, h);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(k));
    const double s2 = 1.0 / std::sqrt(0.6 * static_cast<double>(h));
    for (auto& v : w1.data) v = s1 * gauss(rng);
    for (auto& v : b1) v = 0.3 * gauss(rng);
    for (auto& v : w2.data) v = s2 * gauss(rng);

    auto centroid_of = [&](const Vec& a) {
        Vec hid(h);
        for (std::size_t r = 0; r < h; ++r) {
            double acc = b1[r];
            for (std::size_t c = 0; c < k; ++c) acc += w1.at(r, c) * a[c];
            hid[r] = std::tanh(acc);
        }
        Vec cen(d);
        for (std::size_t r = 0; r < d; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < h; ++c) acc += w2.at(r, c) * hid[c];
            cen[r] = acc;
        }
        return cen;
    };

    out.ground_truth.noise_std = cfg.noise_std;
    out.ground_truth.seed = cfg.seed;

    auto& ds = out.dataset;
    ds.d = d;

    auto emit_class = [&](int label, const Vec& attribute) {
        out.attributes.entries[label] = attribute;
        const Vec centroid = centroid_of(attribute);
        out.ground_truth.class_centroids[label] = centroid;
        for (std::size_t i = 0; i < cfg.samples_per_class; ++i) {
            for (std::size_t c = 0; c < d; ++c)
                ds.features.push_back(centroid[c] + cfg.noise_std * gauss(rng));
            ds.labels.push_back(label);
            ds.ids.push_back("c" + std::to_string(label) + "_" + std::to_string(i));
            ++ds.n;
        }
    };

    for (std::size_t s = 0; s < S; ++s) {
        const int label = static_cast<int>(s) + 1;
        out.splits.seen_labels.insert(label);
        emit_class(label, seen_attrs[s]);
    }
    for (std::size_t u = 0; u < U; ++u) {
        const int label = static_cast<int>(S + u) + 1;
        out.splits.unseen_labels.insert(label);
        emit_class(label, unseen_attrs[u]);
    }

    // splits: seen classes 70% train / 20% test / 10% val;
    // unseen classes 75% test / 25% val (synthetic-unseen validation)
    const std::size_t per = cfg.samples_per_class;
    for (std::size_t row = 0; row < ds.n; ++row) {
        const int label = ds.labels[row];
        const std::size_t within = row % per;
        const std::string& id = ds.ids[row];
        if (out.splits.seen_labels.count(label)) {
            if (within < per * 7 / 10)
                out.splits.train_ids.push_back(id);
            else if (within < per * 9 / 10)
                out.splits.test_seen_ids.push_back(id);
            else
                out.splits.val_ids.push_back(id);
        } else {
            if (within < per * 3 / 4)
                out.splits.test_unseen_ids.push_back(id);
            else
                out.splits.val_ids.push_back(id);
        }
    }
    return out;
}

double bayes_oracle_accuracy(const SyntheticGroundTruth& ground_truth, const Dataset& test,
                             const std::vector<int>& candidate_labels) {
    if (candidate_labels.empty()) throw UsageError("bayes_oracle_accuracy: no candidates");
    for (int label : candidate_labels)
        if (!ground_truth.class_centroids.count(label))
            throw DataError("candidate label " + std::to_string(label) +
                            " has no ground-truth centroid");

    std::map<int, std::pair<std::size_t, std::size_t>> per_class;   // label -> (correct, total)
    for (std::size_t i = 0; i < test.n; ++i) {
        const auto x = test.row(i);
        int best = candidate_labels.front();
        double best_d2 = std::numeric_limits<double>::infinity();
        for (int label : candidate_labels) {
            const Vec& cen = ground_truth.class_centroids.at(label);
            double d2 = 0.0;
            for (std::size_t c = 0; c < test.d; ++c) {
                const double diff = x[c] - cen[c];
                d2 += diff * diff;
            }
            if (d2 < best_d2 || (d2 == best_d2 && label < best)) {
                best_d2 = d2;
                best = label;
            }
        }
        const int truth = test.labels[i];
        if (!ground_truth.class_centroids.count(truth))
            throw DataError("test label " + std::to_string(truth) + " unknown to the oracle");
        auto& [correct, total] = per_class[truth];
        if (best == truth) ++correct;
        ++total;
    }

    double acc_sum = 0.0;
    for (const auto& [label, counts] : per_class)
        acc_sum += 100.0 * static_cast<double>(counts.first) /
                   static_cast<double>(counts.second);
    return acc_sum / static_cast<double>(per_class.size());
}

// ---- file layout ----

void save_dataset(const std::string& directory, const Dataset& dataset,
                  const AttributeTable& attributes, const SplitSpec& splits) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(directory, ec);
    if (ec) throw IoError("cannot create directory " + directory);

    {
        std::ofstream out(directory + "/features.csv");
        if (!out) throw IoError("cannot write " + directory + "/features.csv");
        out << "id,label";
        for (std::size_t c = 0; c < dataset.d; ++c) out << ",f" << c;
        out << "\n";
        for (std::size_t i = 0; i < dataset.n; ++i) {
            out << dataset.ids[i] << "," << dataset.labels[i];
            const auto row = dataset.row(i);
            for (double v : row) out << "," << fmt_double(v);
            out << "\n";
        }
    }
    {
        std::ofstream out(directory + "/attributes.csv");
        if (!out) throw IoError("cannot write " + directory + "/attributes.csv");
        out << "label";
        for (std::size_t c = 0; c < attributes.dim; ++c) out << ",a" << c;
        out << "\n";
        for (const auto& [label, attr] : attributes.entries) {
            out << label;
            for (double v : attr) out << "," << fmt_double(v);
            out << "\n";
        }
    }
    {
        std::ofstream out(directory + "/splits.txt");
        if (!out) throw IoError("cannot write " + directory + "/splits.txt");
        auto section_labels = [&](const char* name, const std::set<int>& labels) {
            out << "[" << name << "]\n";
            for (int l : labels) out << l << "\n";
        };
        auto section_ids = [&](const char* name, const std::vector<std::string>& ids) {
            out << "[" << name << "]\n";
            for (const auto& id : ids) out << id << "\n";
        };
        section_labels("seen", splits.seen_labels);
        section_labels("unseen", splits.unseen_labels);
        section_ids("train", splits.train_ids);
        section_ids("test_seen", splits.test_seen_ids);
        section_ids("test_unseen", splits.test_unseen_ids);
        section_ids("val", splits.val_ids);
    }
}

void save_ground_truth(const std::string& directory, const SyntheticGroundTruth& gt) {
    std::ofstream out(directory + "/ground_truth.csv");
    if (!out) throw IoError("cannot write " + directory + "/ground_truth.csv");
    out << "# seed " << gt.seed << "\n";
    out << "# noise_std " << fmt_double(gt.noise_std) << "\n";
    std::size_t d = gt.class_centroids.empty() ? 0 : gt.class_centroids.begin()->second.size();
    out << "label";
    for (std::size_t c = 0; c < d; ++c) out << ",c" << c;
    out << "\n";
    for (const auto& [label, cen] : gt.class_centroids) {
        out << label;
        for (double v : cen) out << "," << fmt_double(v);
        out << "\n";
    }
}

SyntheticGroundTruth load_ground_truth(const std::string& directory) {
    std::ifstream in(directory + "/ground_truth.csv");
    if (!in) throw DataError("missing file " + directory + "/ground_truth.csv");
    SyntheticGroundTruth gt;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::stringstream ss(line);
            std::string hash, key, value;
            ss >> hash >> key >> value;
            if (key == "seed") gt.seed = std::stoull(value);
            if (key == "noise_std") gt.noise_std = parse_double(value, "ground_truth.csv");
            continue;
        }
        if (line.rfind("label", 0) == 0) continue;   // header
        const auto fields = split_csv(line);
        if (fields.size() < 2)
            throw DataError("ground_truth.csv row " + std::to_string(lineno) + " too short");
        const int label = parse_label(fields[0], "ground_truth.csv");
        Vec cen;
        for (std::size_t i = 1; i < fields.size(); ++i)
            cen.push_back(parse_double(fields[i], "ground_truth.csv"));
        gt.class_centroids[label] = std::move(cen);
    }
    return gt;
}

LoadedDataset load_dataset(const std::string& directory) {
    LoadedDataset out;

    // features.csv
    {
        std::ifstream in(directory + "/features.csv");
        if (!in) throw DataError("missing file " + directory + "/features.csv");
        std::string line;
        if (!std::getline(in, line)) throw DataError("features.csv is empty");
        const auto header = split_csv(line);
        if (header.size() < 3 || header[0] != "id" || header[1] != "label")
            throw DataError("features.csv header must start with id,label,f0,...");
        const std::size_t d = header.size() - 2;
        out.dataset.d = d;
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto fields = split_csv(line);
            if (fields.size() != d + 2)
                throw DataError("features.csv row " + std::to_string(lineno) + " has " +
                                std::to_string(fields.size() - 2) + " values, expected " +
                                std::to_string(d));
            out.dataset.ids.push_back(fields[0]);
            out.dataset.labels.push_back(parse_label(fields[1], "features.csv"));
            for (std::size_t c = 0; c < d; ++c)
                out.dataset.features.push_back(
                    parse_double(fields[2 + c],
                                 "features.csv row " + std::to_string(lineno)));
            ++out.dataset.n;
        }
    }

    // attributes.csv
    {
        std::ifstream in(directory + "/attributes.csv");
        if (!in) throw DataError("missing file " + directory + "/attributes.csv");
        std::string line;
        if (!std::getline(in, line)) throw DataError("attributes.csv is empty");
        const auto header = split_csv(line);
        if (header.size() < 2 || header[0] != "label")
            throw DataError("attributes.csv header must start with label,a0,...");
        const std::size_t k = header.size() - 1;
        out.attributes.dim = k;
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto fields = split_csv(line);
            if (fields.size() != k + 1)
                throw DataError("attributes.csv row " + std::to_string(lineno) +
                                " has the wrong number of values");
            const int label = parse_label(fields[0], "attributes.csv");
            Vec attr;
            for (std::size_t c = 0; c < k; ++c)
                attr.push_back(parse_double(fields[1 + c], "attributes.csv"));
            if (!out.attributes.entries.emplace(label, std::move(attr)).second)
                throw DataError("attributes.csv: duplicate label " + std::to_string(label));
        }
    }

    // splits.txt
    {
        std::ifstream in(directory + "/splits.txt");
        if (!in) throw DataError("missing file " + directory + "/splits.txt");
        std::string line, section;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (line.front() == '[' && line.back() == ']') {
                section = line.substr(1, line.size() - 2);
                continue;
            }
            if (section == "seen")
                out.splits.seen_labels.insert(parse_label(line, "splits.txt [seen]"));
            else if (section == "unseen")
                out.splits.unseen_labels.insert(parse_label(line, "splits.txt [unseen]"));
            else if (section == "train")
                out.splits.train_ids.push_back(line);
            else if (section == "test_seen")
                out.splits.test_seen_ids.push_back(line);
            else if (section == "test_unseen")
                out.splits.test_unseen_ids.push_back(line);
            else if (section == "val")
                out.splits.val_ids.push_back(line);
            else
                throw DataError("splits.txt: entry outside a known section: " + line);
        }
    }

    // invariants
    for (int l : out.splits.seen_labels)
        if (out.splits.unseen_labels.count(l))
            throw DataError("label " + std::to_string(l) +
                            " appears in both [seen] and [unseen]");
    for (double v : out.dataset.features)
        if (!std::isfinite(v)) throw DataError("features.csv contains non-finite values");
    std::unordered_map<std::string, std::size_t> id_to_row;
    for (std::size_t i = 0; i < out.dataset.n; ++i) {
        if (!id_to_row.emplace(out.dataset.ids[i], i).second)
            throw DataError("duplicate datapoint id " + out.dataset.ids[i]);
        const int label = out.dataset.labels[i];
        if (!out.attributes.entries.count(label))
            throw DataError("datapoint " + out.dataset.ids[i] + " has label " +
                            std::to_string(label) + " without an attribute vector");
    }
    for (const auto& [la, va] : out.attributes.entries)
        for (const auto& [lb, vb] : out.attributes.entries)
            if (la < lb && va == vb)
                throw DataError("attribute vectors of labels " + std::to_string(la) +
                                " and " + std::to_string(lb) + " are identical");
    auto check_ids = [&](const std::vector<std::string>& ids, const std::set<int>& allowed,
                         const char* section) {
        for (const auto& id : ids) {
            auto it = id_to_row.find(id);
            if (it == id_to_row.end())
                throw DataError(std::string("splits.txt [") + section + "] references unknown id " + id);
            if (!allowed.empty() && !allowed.count(out.dataset.labels[it->second]))
                throw DataError(std::string("splits.txt [") + section + "] id " + id +
                                " carries a label outside the allowed class set");
        }
    };
    check_ids(out.splits.train_ids, out.splits.seen_labels, "train");
    check_ids(out.splits.test_seen_ids, out.splits.seen_labels, "test_seen");
    check_ids(out.splits.test_unseen_ids, out.splits.unseen_labels, "test_unseen");
    check_ids(out.splits.val_ids, {}, "val");
    return out;
}

// ---- PCA ----

std::vector<std::array<double, 2>> project_2d(const std::vector<Vec>& vectors) {
    if (vectors.size() < 3) throw UsageError("project_2d needs at least 3 vectors");
    const std::size_t n = vectors.size();
    const std::size_t d = vectors.front().size();
    for (const auto& v : vectors)
        if (v.size() != d) throw ShapeError("project_2d: inconsistent vector dimensions");

    Vec mean(d, 0.0);
    for (const auto& v : vectors)
        for (std::size_t c = 0; c < d; ++c) mean[c] += v[c];
    for (auto& m : mean) m /= static_cast<double>(n);

    std::vector<Vec> centered(n, Vec(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) centered[i][c] = vectors[i][c] - mean[c];

    auto cov_mul = [&](const Vec& v, const std::vector<std::pair<Vec, double>>& deflated) {
        Vec out(d, 0.0);
        for (const auto& row : centered) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += row[c] * v[c];
            for (std::size_t c = 0; c < d; ++c) out[c] += dot * row[c];
        }
        for (auto& o : out) o /= static_cast<double>(n);
        for (const auto& [u, lambda] : deflated) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += u[c] * v[c];
            for (std::size_t c = 0; c < d; ++c) out[c] -= lambda * dot * u[c];
        }
        return out;
    };

    Rng rng(0x9e3779b97f4a7c15ull);   // fixed seed: projection is deterministic
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::pair<Vec, double>> components;
    for (int comp = 0; comp < 2; ++comp) {
        Vec v(d);
        for (auto& x : v) x = gauss(rng);
        double lambda = 0.0;
        for (int iter = 0; iter < 1000; ++iter) {
            Vec next = cov_mul(v, components);
            double norm = 0.0;
            for (double x : next) norm += x * x;
            norm = std::sqrt(norm);
            if (norm < 1e-300) break;   // rank-deficient: direction is arbitrary
            for (auto& x : next) x /= norm;
            double delta = 0.0;
            for (std::size_t c = 0; c < d; ++c) delta += (next[c] - v[c]) * (next[c] - v[c]);
            v = std::move(next);
            lambda = norm;
            if (delta < 1e-24) break;
        }
        components.emplace_back(v, lambda);
    }

    std::vector<std::array<double, 2>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (int comp = 0; comp < 2; ++comp) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c)
                dot += centered[i][c] * components[comp].first[c];
            out[i][comp] = dot;
        }
    }
    return out;
}

// ---- standardization ----

Standardizer Standardizer::fit(const Dataset& data, const std::vector<std::size_t>& rows) {
    if (rows.empty()) throw UsageError("Standardizer::fit: no rows");
    Standardizer s;
    s.mean.assign(data.d, 0.0);
    s.inv_std.assign(data.d, 0.0);
    for (std::size_t i : rows) {
        const auto row = data.row(i);
        for (std::size_t c = 0; c < data.d; ++c) s.mean[c] += row[c];
    }
    for (auto& m : s.mean) m /= static_cast<double>(rows.size());
    Vec var(data.d, 0.0);
    for (std::size_t i : rows) {
        const auto row = data.row(i);
        for (std::size_t c = 0; c < data.d; ++c) {
            const double diff = row[c] - s.mean[c];
            var[c] += diff * diff;
        }
    }
    for (std::size_t c = 0; c < data.d; ++c) {
        const double sd = std::sqrt(var[c] / static_cast<double>(rows.size()));
        s.inv_std[c] = 1.0 / std::max(sd, 1e-8);
    }
    return s;
}

void Standardizer::apply(Dataset& data) const {
    if (data.d != mean.size()) throw ShapeError("Standardizer dimension mismatch");
    for (std::size_t i = 0; i < data.n; ++i) {
        auto row = data.row(i);
        for (std::size_t c = 0; c < data.d; ++c)
            row[c] = (row[c] - mean[c]) * inv_std[c];
    }
}

Vec Standardizer::apply_vec(std::span<const double> x) const {
    if (x.size() != mean.size()) throw ShapeError("Standardizer dimension mismatch");
    Vec out(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) out[c] = (x[c] - mean[c]) * inv_std[c];
    return out;
}

void Standardizer::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "mean,inv_std\n";
    for (std::size_t c = 0; c < mean.size(); ++c)
        out << fmt_double(mean[c]) << "," << fmt_double(inv_std[c]) << "\n";
}

Standardizer Standardizer::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    Standardizer s;
    std::string line;
    std::getline(in, line);   // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != 2) throw DataError("malformed standardizer file " + path);
        s.mean.push_back(parse_double(fields[0], path));
        s.inv_std.push_back(parse_double(fields[1], path));
    }
    return s;
}

Dataset subset_by_ids(const Dataset& data, const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> id_to_row;
    for (std::size_t i = 0; i < data.n; ++i) id_to_row.emplace(data.ids[i], i);
    Dataset out;
    out.d = data.d;
    for (const auto& id : ids) {
        auto it = id_to_row.find(id);
        if (it == id_to_row.end()) throw DataError("unknown datapoint id " + id);
        const auto row = data.row(it->second);
        out.features.insert(out.features.end(), row.begin(), row.end());
        out.labels.push_back(data.labels[it->second]);
        out.ids.push_back(id);
        ++out.n;
    }
    return out;
}

} // namespace sgal
