// Command-line front end: dataset generation, training, evaluation,
// conditional sampling and 2-D projection export.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "sgal/classify_eval.hpp"
#include "sgal/data.hpp"
#include "sgal/trainer.hpp"

namespace fs = std::filesystem;
using namespace sgal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "missing";
    std::uint64_t h = 1469598103934665603ull;
    char buf[1 << 14];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!in) break;
    }
    char out[20];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

void write_manifest(const std::string& path,
                    const std::map<std::string, std::string>& config,
                    const std::vector<std::string>& artifacts) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path);
    out << "[config]\n";
    for (const auto& [key, value] : config) out << key << " = " << value << "\n";
    out << "[artifacts]\n";
    for (const auto& artifact : artifacts)
        out << fs::path(artifact).filename().string() << " = " << file_checksum(artifact)
            << "\n";
}

struct CommonTrainFlags {
    std::string dataset_dir;
    std::string out_dir = "run_out";
    std::string mode = "sgal";
    std::uint64_t seed = 1;
    std::size_t pretrain_iters = 4000;
    std::size_t sgal_iters = 600;
    std::size_t batch_seen = 64;
    std::size_t batch_unseen = 16;
    std::size_t samples_per_latent = 5;
    double margin = 0.0;
    double reg_weight = 1.0;
    double lr = 1e-3;
    std::size_t eval_every = 100;
    std::size_t latent_dim = 8;
    std::size_t hidden_units = 512;
    std::size_t prior_hidden_units = 128;
    double decoder_dropout = 0.2;
};

struct PreparedData {
    LoadedDataset loaded;
    Standardizer standardizer;
    TrainData train_data;
    Dataset test_seen;
    Dataset test_unseen;
};

std::vector<std::size_t> rows_of_ids(const Dataset& data,
                                     const std::vector<std::string>& ids) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < data.n; ++i) index[data.ids[i]] = i;
    std::vector<std::size_t> rows;
    rows.reserve(ids.size());
    for (const auto& id : ids) rows.push_back(index.at(id));
    return rows;
}

PreparedData prepare_data(const std::string& dataset_dir, std::uint64_t seed) {
    PreparedData p;
    p.loaded = load_dataset(dataset_dir);
    auto& [dataset, attributes, splits] = p.loaded;

    std::vector<std::string> train_ids = splits.train_ids;
    std::vector<std::string> val_ids = splits.val_ids;
    if (val_ids.empty()) {
        // carve a deterministic 10% of the training ids for validation
        Rng rng(seed ^ 0x5eedf00dull);
        std::shuffle(train_ids.begin(), train_ids.end(), rng);
        const std::size_t cut = std::max<std::size_t>(1, train_ids.size() / 10);
        val_ids.assign(train_ids.end() - cut, train_ids.end());
        train_ids.resize(train_ids.size() - cut);
    }

    p.standardizer = Standardizer::fit(dataset, rows_of_ids(dataset, train_ids));
    Dataset standardized = dataset;
    p.standardizer.apply(standardized);

    p.train_data.train = subset_by_ids(standardized, train_ids);
    p.train_data.seen_classes = class_entries(attributes, splits.seen_labels);
    p.train_data.unseen_classes = class_entries(attributes, splits.unseen_labels);
    p.train_data.unseen_labels = splits.unseen_labels;

    Dataset val = subset_by_ids(standardized, val_ids);
    for (std::size_t i = 0; i < val.n; ++i) {
        Dataset& dst = splits.unseen_labels.count(val.labels[i]) ? p.train_data.val_unseen
                                                                 : p.train_data.val_seen;
        if (dst.d == 0) dst.d = val.d;
        const auto row = val.row(i);
        dst.features.insert(dst.features.end(), row.begin(), row.end());
        dst.labels.push_back(val.labels[i]);
        dst.ids.push_back(val.ids[i]);
        ++dst.n;
    }

    p.test_seen = subset_by_ids(standardized, splits.test_seen_ids);
    p.test_unseen = subset_by_ids(standardized, splits.test_unseen_ids);
    return p;
}

Standardizer standardizer_near_checkpoint(const std::string& checkpoint_path) {
    const auto sidecar = fs::path(checkpoint_path).parent_path() / "standardize.csv";
    if (!fs::exists(sidecar))
        throw DataError("no standardize.csv next to checkpoint " + checkpoint_path);
    return Standardizer::load(sidecar.string());
}

void check_checkpoint_dims(const SgalModel& model, const LoadedDataset& loaded) {
    if (model.feature_dim != loaded.dataset.d)
        throw DataError("checkpoint feature dimension " + std::to_string(model.feature_dim) +
                        " disagrees with dataset dimension " +
                        std::to_string(loaded.dataset.d));
    if (model.attribute_dim != loaded.attributes.dim)
        throw DataError("checkpoint attribute dimension " +
                        std::to_string(model.attribute_dim) +
                        " disagrees with dataset attribute dimension " +
                        std::to_string(loaded.attributes.dim));
}

// ---- gen-data ----

int cmd_gen_data(const SyntheticConfig& cfg, const std::string& out_dir) {
    auto bundle = generate_synthetic(cfg);
    save_dataset(out_dir, bundle.dataset, bundle.attributes, bundle.splits);
    save_ground_truth(out_dir, bundle.ground_truth);

    const auto test_seen = subset_by_ids(bundle.dataset, bundle.splits.test_seen_ids);
    const auto test_unseen = subset_by_ids(bundle.dataset, bundle.splits.test_unseen_ids);
    std::vector<int> seen_labels(bundle.splits.seen_labels.begin(),
                                 bundle.splits.seen_labels.end());
    std::vector<int> unseen_labels(bundle.splits.unseen_labels.begin(),
                                   bundle.splits.unseen_labels.end());
    std::vector<int> all_labels = seen_labels;
    all_labels.insert(all_labels.end(), unseen_labels.begin(), unseen_labels.end());

    const double oracle_seen =
        bayes_oracle_accuracy(bundle.ground_truth, test_seen, all_labels);
    const double oracle_unseen =
        bayes_oracle_accuracy(bundle.ground_truth, test_unseen, all_labels);

    std::map<std::string, std::string> manifest_cfg{
        {"command", "gen-data"},
        {"num_seen", std::to_string(cfg.num_seen)},
        {"num_unseen", std::to_string(cfg.num_unseen)},
        {"feature_dim", std::to_string(cfg.feature_dim)},
        {"attribute_dim", std::to_string(cfg.attribute_dim)},
        {"samples_per_class", std::to_string(cfg.samples_per_class)},
        {"noise_std", fmt(cfg.noise_std)},
        {"attribute_smoothness", fmt(cfg.attribute_smoothness)},
        {"seed", std::to_string(cfg.seed)},
    };
    write_manifest(out_dir + "/manifest.txt", manifest_cfg,
                   {out_dir + "/features.csv", out_dir + "/attributes.csv",
                    out_dir + "/splits.txt", out_dir + "/ground_truth.csv"});

    std::cout << "oracle_seen = " << fmt(oracle_seen) << "\n";
    std::cout << "oracle_unseen = " << fmt(oracle_unseen) << "\n";
    return kExitOk;
}

// ---- train ----

int cmd_train(const CommonTrainFlags& flags) {
    if (flags.mode != "mmvae" && flags.mode != "sgal" && flags.mode != "sgal-dropout")
        throw UsageError("--mode must be one of mmvae, sgal, sgal-dropout");
    if (flags.mode != "mmvae" && flags.sgal_iters == 0)
        throw UsageError("--sgal-iters 0 with mode " + flags.mode +
                         " is the mmvae configuration; use --mode mmvae");

    TrainConfig cfg;
    cfg.pretrain_iterations = flags.pretrain_iters;
    cfg.sgal_iterations = flags.mode == "mmvae" ? 0 : flags.sgal_iters;
    cfg.seen_batch_size = flags.batch_seen;
    cfg.unseen_batch_size = flags.batch_unseen;
    cfg.dropout_generation = flags.mode == "sgal-dropout";
    cfg.samples_per_latent = flags.samples_per_latent;
    cfg.margin = flags.margin;
    cfg.regularization_weight = flags.reg_weight;
    cfg.adam.learning_rate = flags.lr;
    cfg.seed = flags.seed;
    cfg.eval_every = flags.eval_every;

    auto prepared = prepare_data(flags.dataset_dir, flags.seed);

    ModelConfig mcfg;
    mcfg.feature_dim = prepared.loaded.dataset.d;
    mcfg.attribute_dim = prepared.loaded.attributes.dim;
    mcfg.latent_dim = flags.latent_dim;
    mcfg.hidden_units = flags.hidden_units;
    mcfg.prior_hidden_units = flags.prior_hidden_units;
    mcfg.decoder_dropout = flags.decoder_dropout;

    Rng init_rng(flags.seed);
    SgalModel model = make_model(mcfg, init_rng);
    model.class_count = prepared.loaded.attributes.entries.size();

    auto result = train_sgal(std::move(model), prepared.train_data, cfg);

    std::error_code ec;
    fs::create_directories(flags.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + flags.out_dir);

    prepared.standardizer.save(flags.out_dir + "/standardize.csv");
    write_train_log(result.log, flags.out_dir + "/train_log.csv");
    const std::string best_path = flags.out_dir + "/checkpoint_best_iter" +
                                  std::to_string(result.best_iteration) + ".bin";
    const std::size_t final_iter = cfg.pretrain_iterations + cfg.sgal_iterations;
    const std::string final_path =
        flags.out_dir + "/checkpoint_final_iter" + std::to_string(final_iter) + ".bin";
    save_checkpoint(result.model, best_path);
    save_checkpoint(result.final_model, final_path);

    std::vector<ClassEntry> all_classes = prepared.train_data.seen_classes;
    all_classes.insert(all_classes.end(), prepared.train_data.unseen_classes.begin(),
                       prepared.train_data.unseen_classes.end());
    const auto report = evaluate_gzsl(result.model, prepared.test_seen, prepared.test_unseen,
                                      all_classes, prepared.train_data.unseen_labels);
    write_report(report, prepared.train_data.unseen_labels,
                 flags.out_dir + "/gzsl_report.txt");

    std::map<std::string, std::string> manifest_cfg{
        {"command", "train"},
        {"dataset", flags.dataset_dir},
        {"mode", flags.mode},
        {"seed", std::to_string(flags.seed)},
        {"pretrain_iters", std::to_string(cfg.pretrain_iterations)},
        {"sgal_iters", std::to_string(cfg.sgal_iterations)},
        {"batch_seen", std::to_string(cfg.seen_batch_size)},
        {"batch_unseen", std::to_string(cfg.unseen_batch_size)},
        {"samples_per_latent", std::to_string(cfg.samples_per_latent)},
        {"margin", fmt(cfg.margin)},
        {"reg_weight", fmt(cfg.regularization_weight)},
        {"lr", fmt(cfg.adam.learning_rate)},
        {"eval_every", std::to_string(cfg.eval_every)},
        {"latent_dim", std::to_string(mcfg.latent_dim)},
        {"hidden_units", std::to_string(mcfg.hidden_units)},
        {"prior_hidden_units", std::to_string(mcfg.prior_hidden_units)},
        {"decoder_dropout", fmt(mcfg.decoder_dropout)},
        {"feature_dim", std::to_string(mcfg.feature_dim)},
        {"attribute_dim", std::to_string(mcfg.attribute_dim)},
    };
    write_manifest(flags.out_dir + "/manifest.txt", manifest_cfg,
                   {best_path, final_path, flags.out_dir + "/train_log.csv",
                    flags.out_dir + "/gzsl_report.txt"});

    std::cout << "u = " << fmt(report.unseen_top1) << "\n";
    std::cout << "s = " << fmt(report.seen_top1) << "\n";
    std::cout << "H = " << fmt(report.harmonic) << "\n";
    return kExitOk;
}

// ---- eval ----

int cmd_eval(const std::string& checkpoint, const std::string& dataset_dir,
             const std::string& restrict_to, const std::string& out_dir) {
    const SgalModel model = load_checkpoint(checkpoint);
    auto loaded = load_dataset(dataset_dir);
    check_checkpoint_dims(model, loaded);

    const auto standardizer = standardizer_near_checkpoint(checkpoint);
    Dataset standardized = loaded.dataset;
    standardizer.apply(standardized);

    const auto test_seen = subset_by_ids(standardized, loaded.splits.test_seen_ids);
    const auto test_unseen = subset_by_ids(standardized, loaded.splits.test_unseen_ids);
    const auto unseen_classes = class_entries(loaded.attributes, loaded.splits.unseen_labels);

    if (restrict_to == "unseen") {
        const double top1 = evaluate_conventional(model, test_unseen, unseen_classes);
        std::cout << "unseen_top1 = " << fmt(top1) << "\n";
        return kExitOk;
    }

    std::vector<ClassEntry> all_classes =
        class_entries(loaded.attributes, loaded.splits.seen_labels);
    all_classes.insert(all_classes.end(), unseen_classes.begin(), unseen_classes.end());
    const auto report = evaluate_gzsl(model, test_seen, test_unseen, all_classes,
                                      loaded.splits.unseen_labels);
    const double conventional = evaluate_conventional(model, test_unseen, unseen_classes);
    const double conventional_per_sample =
        evaluate_conventional_per_sample(model, test_unseen, unseen_classes);

    std::cout << "u = " << fmt(report.unseen_top1) << "\n";
    std::cout << "s = " << fmt(report.seen_top1) << "\n";
    std::cout << "H = " << fmt(report.harmonic) << "\n";
    std::cout << "conventional_unseen_top1 = " << fmt(conventional) << "\n";
    std::cout << "conventional_unseen_top1_per_sample = " << fmt(conventional_per_sample)
              << "\n";

    if (!out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec) throw IoError("cannot create output directory " + out_dir);
        write_report(report, loaded.splits.unseen_labels, out_dir + "/gzsl_report.txt");
        write_manifest(out_dir + "/manifest.txt",
                       {{"command", "eval"},
                        {"checkpoint", checkpoint},
                        {"dataset", dataset_dir},
                        {"restrict", restrict_to}},
                       {out_dir + "/gzsl_report.txt", checkpoint});
    }
    return kExitOk;
}

// ---- sample ----

int cmd_sample(const std::string& checkpoint, const std::string& dataset_dir, int label,
               std::size_t count, bool dropout, std::size_t samples_per_latent,
               std::uint64_t seed, const std::string& out_file) {
    const SgalModel model = load_checkpoint(checkpoint);
    auto loaded = load_dataset(dataset_dir);
    check_checkpoint_dims(model, loaded);

    auto it = loaded.attributes.entries.find(label);
    if (it == loaded.attributes.entries.end())
        throw UsageError("unknown label " + std::to_string(label));

    Rng rng(seed);
    std::vector<Vec> generated;
    if (dropout) {
        generated = generate_unseen_dropout(model, it->second, count, samples_per_latent, rng);
    } else {
        generated = generate_unseen(model, it->second, count, rng);
    }

    // the model works in standardized space; emit raw feature space
    const auto standardizer = standardizer_near_checkpoint(checkpoint);
    std::ofstream out(out_file);
    if (!out) throw IoError("cannot write " + out_file);
    out << "label";
    for (std::size_t c = 0; c < model.feature_dim; ++c) out << ",f" << c;
    out << "\n";
    for (const auto& x : generated) {
        out << label;
        for (std::size_t c = 0; c < x.size(); ++c)
            out << "," << fmt(x[c] / standardizer.inv_std[c] + standardizer.mean[c]);
        out << "\n";
    }
    out.close();
    write_manifest(out_file + ".manifest",
                   {{"command", "sample"},
                    {"checkpoint", checkpoint},
                    {"dataset", dataset_dir},
                    {"label", std::to_string(label)},
                    {"count", std::to_string(count)},
                    {"dropout", dropout ? "true" : "false"},
                    {"samples_per_latent", std::to_string(samples_per_latent)},
                    {"seed", std::to_string(seed)}},
                   {out_file});
    return kExitOk;
}

// ---- project ----

int cmd_project(const std::string& checkpoint, const std::string& dataset_dir,
                const std::string& split, const std::string& out_file) {
    const SgalModel model = load_checkpoint(checkpoint);
    auto loaded = load_dataset(dataset_dir);
    check_checkpoint_dims(model, loaded);

    const auto standardizer = standardizer_near_checkpoint(checkpoint);
    Dataset standardized = loaded.dataset;
    standardizer.apply(standardized);

    Dataset chosen;
    if (split == "train")
        chosen = subset_by_ids(standardized, loaded.splits.train_ids);
    else if (split == "test_seen")
        chosen = subset_by_ids(standardized, loaded.splits.test_seen_ids);
    else if (split == "test_unseen")
        chosen = subset_by_ids(standardized, loaded.splits.test_unseen_ids);
    else if (split == "val")
        chosen = subset_by_ids(standardized, loaded.splits.val_ids);
    else if (split == "all")
        chosen = standardized;
    else
        throw UsageError("--split must be train, test_seen, test_unseen, val or all");

    Rng rng(0);
    std::vector<Vec> latents;
    latents.reserve(chosen.n);
    for (std::size_t i = 0; i < chosen.n; ++i)
        latents.push_back(encode(model, chosen.row(i), ForwardMode::EvalDeterministic, rng).mean);
    const auto points = project_2d(latents);

    std::ofstream out(out_file);
    if (!out) throw IoError("cannot write " + out_file);
    out << "x,y,label\n";
    for (std::size_t i = 0; i < points.size(); ++i)
        out << fmt(points[i][0]) << "," << fmt(points[i][1]) << "," << chosen.labels[i]
            << "\n";
    out.close();
    write_manifest(out_file + ".manifest",
                   {{"command", "project"},
                    {"checkpoint", checkpoint},
                    {"dataset", dataset_dir},
                    {"split", split}},
                   {out_file});
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SGAL zero-shot learning experiments"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key = value configuration file");

    // gen-data
    SyntheticConfig gen_cfg;
    std::string gen_out = "dataset";
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic fixture dataset")->configurable();
    gen->add_option("--out", gen_out, "output dataset directory");
    gen->add_option("--num-seen", gen_cfg.num_seen);
    gen->add_option("--num-unseen", gen_cfg.num_unseen);
    gen->add_option("--feature-dim", gen_cfg.feature_dim);
    gen->add_option("--attribute-dim", gen_cfg.attribute_dim);
    gen->add_option("--samples-per-class", gen_cfg.samples_per_class);
    gen->add_option("--noise-std", gen_cfg.noise_std);
    gen->add_option("--attribute-smoothness", gen_cfg.attribute_smoothness);
    gen->add_option("--seed", gen_cfg.seed);

    // train
    CommonTrainFlags train_flags;
    auto* train = app.add_subcommand("train", "pretrain and optionally run the SGAL loop")->configurable();
    train->add_option("--dataset", train_flags.dataset_dir)->required();
    train->add_option("--out", train_flags.out_dir);
    train->add_option("--mode", train_flags.mode)
        ->check(CLI::IsMember({"mmvae", "sgal", "sgal-dropout"}));
    train->add_option("--seed", train_flags.seed);
    train->add_option("--pretrain-iters", train_flags.pretrain_iters);
    train->add_option("--sgal-iters", train_flags.sgal_iters);
    train->add_option("--batch-seen", train_flags.batch_seen);
    train->add_option("--batch-unseen", train_flags.batch_unseen);
    train->add_option("--samples-per-latent", train_flags.samples_per_latent);
    train->add_option("--margin", train_flags.margin);
    train->add_option("--reg-weight", train_flags.reg_weight);
    train->add_option("--lr", train_flags.lr);
    train->add_option("--eval-every", train_flags.eval_every);
    train->add_option("--latent-dim", train_flags.latent_dim);
    train->add_option("--hidden-units", train_flags.hidden_units);
    train->add_option("--prior-hidden-units", train_flags.prior_hidden_units);
    train->add_option("--decoder-dropout", train_flags.decoder_dropout);

    // eval
    std::string eval_checkpoint, eval_dataset, eval_restrict = "all", eval_out;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint")->configurable();
    eval->add_option("--checkpoint", eval_checkpoint)->required();
    eval->add_option("--dataset", eval_dataset)->required();
    eval->add_option("--restrict", eval_restrict)->check(CLI::IsMember({"all", "unseen"}));
    eval->add_option("--out", eval_out);

    // sample
    std::string sample_checkpoint, sample_dataset, sample_out = "samples.csv";
    int sample_label = 0;
    std::size_t sample_count = 10, sample_spl = 5;
    std::uint64_t sample_seed = 1;
    bool sample_dropout = false;
    auto* sample = app.add_subcommand("sample", "generate features for a class")->configurable();
    sample->add_option("--checkpoint", sample_checkpoint)->required();
    sample->add_option("--dataset", sample_dataset)->required();
    sample->add_option("--label", sample_label)->required();
    sample->add_option("--count", sample_count);
    sample->add_flag("--dropout", sample_dropout);
    sample->add_option("--samples-per-latent", sample_spl);
    sample->add_option("--seed", sample_seed);
    sample->add_option("--out", sample_out);

    // project
    std::string proj_checkpoint, proj_dataset, proj_split = "test_unseen",
                proj_out = "projection.csv";
    auto* project = app.add_subcommand("project", "2-D latent projection export")->configurable();
    project->add_option("--checkpoint", proj_checkpoint)->required();
    project->add_option("--dataset", proj_dataset)->required();
    project->add_option("--split", proj_split);
    project->add_option("--out", proj_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_cfg, gen_out);
        if (train->parsed()) return cmd_train(train_flags);
        if (eval->parsed()) return cmd_eval(eval_checkpoint, eval_dataset, eval_restrict,
                                            eval_out);
        if (sample->parsed())
            return cmd_sample(sample_checkpoint, sample_dataset, sample_label, sample_count,
                              sample_dropout, sample_spl, sample_seed, sample_out);
        if (project->parsed())
            return cmd_project(proj_checkpoint, proj_dataset, proj_split, proj_out);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitData;
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const StateError& e) {
        std::cerr << "state error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitUsage;
}
