#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

// SGAL_CLI_PATH is injected by the build.
#ifndef SGAL_CLI_PATH
#error "SGAL_CLI_PATH must be defined"
#endif

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(SGAL_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult res;
    char buf[4096];
    while (std::fgets(buf, sizeof(buf), pipe)) res.output += buf;
    const int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string tiny_gen_args(const fs::path& out) {
    return "gen-data --out " + out.string() +
           " --num-seen 4 --num-unseen 2 --feature-dim 16 --attribute-dim 6"
           " --samples-per-class 30 --seed 11";
}

std::string tiny_train_args(const fs::path& data, const fs::path& out,
                            const std::string& mode) {
    return "train --dataset " + data.string() + " --out " + out.string() + " --mode " + mode +
           " --seed 3 --pretrain-iters 40 --sgal-iters 15 --eval-every 20"
           " --latent-dim 4 --hidden-units 32 --prior-hidden-units 16";
}

fs::path find_one(const fs::path& dir, const std::string& prefix) {
    fs::path found;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind(prefix, 0) == 0) {
            REQUIRE(found.empty());
            found = entry.path();
        }
    }
    REQUIRE(!found.empty());
    return found;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("cli: no subcommand or unknown flags exit with the usage code") {
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("train --no-such-flag 1").exit_code == 2);
    CHECK(run_cli("train").exit_code == 2);   // --dataset is required
    CHECK(run_cli("--help").exit_code == 0);
}

TEST_CASE("cli: gen-data writes the dataset layout and reports oracle accuracy") {
    TempDir dir("sgal_cli_gen");
    const auto res = run_cli(tiny_gen_args(dir.path));
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("oracle_seen = ") != std::string::npos);
    CHECK(res.output.find("oracle_unseen = ") != std::string::npos);
    for (const char* f :
         {"features.csv", "attributes.csv", "splits.txt", "ground_truth.csv", "manifest.txt"})
        CHECK(fs::exists(dir.path / f));
}

TEST_CASE("cli: full train / eval / sample / project round-trip") {
    TempDir dir("sgal_cli_roundtrip");
    const auto data = dir.path / "data";
    const auto out = dir.path / "run";
    REQUIRE(run_cli(tiny_gen_args(data)).exit_code == 0);

    const auto train = run_cli(tiny_train_args(data, out, "sgal"));
    CAPTURE(train.output);
    REQUIRE(train.exit_code == 0);
    CHECK(train.output.find("H = ") != std::string::npos);
    CHECK(fs::exists(out / "train_log.csv"));
    CHECK(fs::exists(out / "gzsl_report.txt"));
    CHECK(fs::exists(out / "standardize.csv"));
    CHECK(fs::exists(out / "manifest.txt"));
    const auto best = find_one(out, "checkpoint_best_iter");
    find_one(out, "checkpoint_final_iter");

    // eval reproduces the training-time report for the best checkpoint
    const auto eval = run_cli("eval --checkpoint " + best.string() + " --dataset " +
                              data.string());
    REQUIRE(eval.exit_code == 0);
    CHECK(eval.output.find("u = ") != std::string::npos);
    CHECK(eval.output.find("conventional_unseen_top1 = ") != std::string::npos);

    const auto restricted = run_cli("eval --checkpoint " + best.string() + " --dataset " +
                                    data.string() + " --restrict unseen");
    REQUIRE(restricted.exit_code == 0);
    CHECK(restricted.output.find("unseen_top1 = ") != std::string::npos);
    CHECK(restricted.output.find("H = ") == std::string::npos);

    // sample an unseen class (labels 5, 6 in a 4+2 fixture)
    const auto samples = dir.path / "samples.csv";
    const auto sample = run_cli("sample --checkpoint " + best.string() + " --dataset " +
                                data.string() + " --label 5 --count 7 --seed 2 --out " +
                                samples.string());
    REQUIRE(sample.exit_code == 0);
    std::ifstream in(samples);
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("label,f0,", 0) == 0);
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 7);

    const auto proj = dir.path / "proj.csv";
    const auto project = run_cli("project --checkpoint " + best.string() + " --dataset " +
                                 data.string() + " --split test_unseen --out " +
                                 proj.string());
    REQUIRE(project.exit_code == 0);
    std::ifstream pin(proj);
    std::getline(pin, line);
    CHECK(line == "x,y,label");
}

TEST_CASE("cli: identical seeds give bit-identical checkpoints and logs") {
    TempDir dir("sgal_cli_determinism");
    const auto data = dir.path / "data";
    REQUIRE(run_cli(tiny_gen_args(data)).exit_code == 0);

    const auto out1 = dir.path / "run1";
    const auto out2 = dir.path / "run2";
    REQUIRE(run_cli(tiny_train_args(data, out1, "mmvae")).exit_code == 0);
    REQUIRE(run_cli(tiny_train_args(data, out2, "mmvae")).exit_code == 0);

    const auto ckpt1 = find_one(out1, "checkpoint_final_iter");
    const auto ckpt2 = find_one(out2, "checkpoint_final_iter");
    CHECK(slurp(ckpt1) == slurp(ckpt2));
    CHECK(slurp(out1 / "gzsl_report.txt") == slurp(out2 / "gzsl_report.txt"));
}

TEST_CASE("cli: mode invariants are rejected before any compute") {
    TempDir dir("sgal_cli_modes");
    const auto data = dir.path / "data";
    REQUIRE(run_cli(tiny_gen_args(data)).exit_code == 0);
    CHECK(run_cli("train --dataset " + data.string() + " --mode bogus").exit_code == 2);
    CHECK(run_cli("train --dataset " + data.string() + " --mode sgal --sgal-iters 0")
              .exit_code == 2);
}

TEST_CASE("cli: data and dimension failures use the data exit code") {
    TempDir dir("sgal_cli_data_errors");
    CHECK(run_cli("train --dataset " + (dir.path / "missing").string()).exit_code == 3);

    // checkpoint trained on 16-dim features against an 8-dim dataset
    const auto data = dir.path / "data";
    const auto other = dir.path / "other";
    const auto out = dir.path / "run";
    REQUIRE(run_cli(tiny_gen_args(data)).exit_code == 0);
    REQUIRE(run_cli(tiny_train_args(data, out, "mmvae")).exit_code == 0);
    REQUIRE(run_cli("gen-data --out " + other.string() +
                    " --num-seen 4 --num-unseen 2 --feature-dim 8 --attribute-dim 6"
                    " --samples-per-class 20 --seed 12")
                .exit_code == 0);
    const auto best = find_one(out, "checkpoint_best_iter");
    const auto res = run_cli("eval --checkpoint " + best.string() + " --dataset " +
                             other.string());
    CHECK(res.exit_code == 3);
    CHECK(res.output.find("dimension") != std::string::npos);
}

TEST_CASE("cli: --config file supplies subcommand options") {
    TempDir dir("sgal_cli_config");
    const auto data = dir.path / "data";
    REQUIRE(run_cli(tiny_gen_args(data)).exit_code == 0);

    const auto cfg_path = dir.path / "run.cfg";
    {
        std::ofstream cfg(cfg_path);
        cfg << "[train]\n";
        cfg << "dataset = \"" << data.string() << "\"\n";
        cfg << "out = \"" << (dir.path / "run").string() << "\"\n";
        cfg << "mode = \"mmvae\"\n";
        cfg << "pretrain-iters = 25\n";
        cfg << "sgal-iters = 0\n";
        cfg << "eval-every = 25\n";
        cfg << "latent-dim = 4\n";
        cfg << "hidden-units = 32\n";
        cfg << "prior-hidden-units = 16\n";
    }
    const auto res = run_cli("--config " + cfg_path.string() + " train");
    CAPTURE(res.output);
    CHECK(res.exit_code == 0);
    CHECK(fs::exists(dir.path / "run" / "train_log.csv"));

    // 25 pretrain rows plus the header
    std::ifstream in(dir.path / "run" / "train_log.csv");
    int lines = 0;
    std::string line;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 26);
}
