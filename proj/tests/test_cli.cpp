#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include "mcf/runconfig.hpp"

using namespace mcf;
namespace fs = std::filesystem;

namespace {

// Scratch directory for one test case; removed recursively on destruction.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name)
        : path(fs::temp_directory_path() /
               ("mcf_cli_" + std::to_string(::getpid()) + "_" + name)) {
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

int run_cli(const std::string& args, const std::string& out_file = "/dev/null") {
    const std::string cmd = std::string(MCF_BIN) + " " + args + " >" + out_file + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    REQUIRE(f);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    f << text;
}

}  // namespace

TEST_CASE("empty config yields a valid synth run") {
    RunConfig cfg = load_run_config("", {});
    CHECK(cfg.model.M == 0);
    CHECK(cfg.data.path.empty());
    CHECK(cfg.data.kind == "leader_follower");
    CHECK(cfg.out_dir == "runs/default");
    Dataset ds = resolve_dataset(cfg);
    CHECK(ds.M == 8);
    CHECK(cfg.model.M == 8);  // inferred
}

TEST_CASE("config rejects m >= M at parse time") {
    TempDir td("badm");
    write_file(td / "bad.json", R"({"model":{"m":5,"M":4}})");
    try {
        load_run_config(td / "bad.json", {});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("m must satisfy") != std::string::npos);
    }
}

TEST_CASE("unknown keys are rejected with their full path") {
    TempDir td("unknown");
    write_file(td / "a.json", R"({"model":{"n_headz":4}})");
    try {
        load_run_config(td / "a.json", {});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("model.n_headz") != std::string::npos);
    }

    write_file(td / "b.json", R"({"outt_dir":"x"})");
    CHECK_THROWS_AS(load_run_config(td / "b.json", {}), ConfigError);

    write_file(td / "c.json", R"({"data":{"synth":{"kindd":"x"}}})");
    try {
        load_run_config(td / "c.json", {});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("data.synth.kindd") != std::string::npos);
    }
}

TEST_CASE("overrides take precedence over file values") {
    TempDir td("override");
    write_file(td / "cfg.json", R"({"model":{"m":2,"M":8}})");
    RunConfig cfg = load_run_config(td / "cfg.json", {"model.m=3"});
    CHECK(cfg.model.m == 3);

    // Typed values parse as JSON; strings stay strings.
    RunConfig cfg2 = load_run_config(td / "cfg.json",
                                     {"model.activation=relu", "train.learning_rate=0.01",
                                      "model.pre_norm=true", "out_dir=elsewhere"});
    CHECK(cfg2.model.activation == "relu");
    CHECK(cfg2.train.learning_rate == 0.01);
    CHECK(cfg2.model.pre_norm);
    CHECK(cfg2.out_dir == "elsewhere");

    // A typo in an override path fails closed like any unknown key.
    CHECK_THROWS_AS(load_run_config(td / "cfg.json", {"model.mm=3"}), ConfigError);
    CHECK_THROWS_AS(load_run_config(td / "cfg.json", {"nonsense"}), ConfigError);
}

TEST_CASE("config snapshot round-trips") {
    RunConfig cfg = load_run_config("", {"model.m=2", "model.M=4", "data.synth.T=500"});
    nlohmann::json j = run_config_to_json(cfg);
    RunConfig back = run_config_from_json(j);
    CHECK(back.model.m == cfg.model.m);
    CHECK(back.model.M == cfg.model.M);
    CHECK(back.data.T == 500);
    CHECK(back.split.train_frac == cfg.split.train_frac);
    CHECK(back.out_dir == cfg.out_dir);
}

TEST_CASE("segment length check runs before any training") {
    RunConfig cfg = load_run_config(
        "", {"data.synth.T=100", "model.L=48", "model.h=12", "model.M=8"});
    // val split of 100 rows = 10 rows < 60 needed.
    CHECK_THROWS_AS(resolve_dataset(cfg), ConfigError);
}

TEST_CASE("cli synth is byte-deterministic") {
    TempDir td("synthdet");
    REQUIRE(run_cli("synth --kind leader_follower --m-channels 4 --length 200 --seed 9 --out " +
                    (td / "a.csv")) == 0);
    REQUIRE(run_cli("synth --kind leader_follower --m-channels 4 --length 200 --seed 9 --out " +
                    (td / "b.csv")) == 0);
    CHECK(slurp(td / "a.csv") == slurp(td / "b.csv"));

    // Different seed differs.
    REQUIRE(run_cli("synth --kind leader_follower --m-channels 4 --length 200 --seed 10 --out " +
                    (td / "c.csv")) == 0);
    CHECK(slurp(td / "a.csv") != slurp(td / "c.csv"));
}

TEST_CASE("cli exit codes follow the contract") {
    TempDir td("exits");
    // Unknown command: usage error.
    CHECK(run_cli("frobnicate", td / "out.txt") == 1);
    // Config error: invalid model spec.
    write_file(td / "bad.json", R"({"model":{"m":9,"M":4}})");
    CHECK(run_cli("train --config " + (td / "bad.json"), td / "out2.txt") == 1);
    // Runtime error: missing data file.
    CHECK(run_cli("correlate --data " + (td / "nope.csv") + " --channels 0,1 --window 8 --out " +
                      (td / "c.csv"),
                  td / "out3.txt") == 2);
    // Help exits cleanly.
    CHECK(run_cli("--help", td / "help.txt") == 0);
}

TEST_CASE("cli train writes artifacts and eval reproduces the test metrics") {
    TempDir td("trainflow");
    write_file(td / "run.json", R"({
      "model": {"M": 0, "L": 24, "h": 8, "m": 1, "p": 8, "S": 8, "P": 16, "n_heads": 2,
                 "n_layers": 1, "d_ff": 32},
      "train": {"batch_size": 32, "max_epochs": 2, "seed": 7},
      "data": {"synth": {"kind": "shared_season", "M": 3, "T": 400, "seed": 5, "sigma": 0.05}}
    })");
    const std::string out1 = td / "run1";
    REQUIRE(run_cli("train --config " + (td / "run.json") + " --set out_dir=" + out1,
                    td / "train.log") == 0);
    CHECK(fs::exists(out1 + "/config.json"));
    CHECK(fs::exists(out1 + "/checkpoint.json"));
    CHECK(fs::exists(out1 + "/checkpoint.json.bin"));
    CHECK(fs::exists(out1 + "/report.json"));

    nlohmann::json report;
    {
        std::ifstream f(out1 + "/report.json");
        f >> report;
    }
    REQUIRE(report.contains("test_mse"));
    CHECK(report["train_loss"].size() <= 2);

    const std::string out2 = td / "run1_eval";
    REQUIRE(run_cli("eval --config " + (td / "run.json") + " --set out_dir=" + out2 +
                        " --checkpoint " + out1 + "/checkpoint.json",
                    td / "eval.log") == 0);
    nlohmann::json eval_report;
    {
        std::ifstream f(out2 + "/eval_report.json");
        f >> eval_report;
    }
    CHECK(std::fabs(report["test_mse"].get<double>() - eval_report["test_mse"].get<double>()) <
          1e-12);
    CHECK(std::fabs(report["test_mae"].get<double>() - eval_report["test_mae"].get<double>()) <
          1e-12);

    // The snapshot alone reproduces the run: same artifacts, same metrics.
    const std::string out3 = td / "run_again";
    REQUIRE(run_cli("train --config " + out1 + "/config.json --set out_dir=" + out3,
                    td / "again.log") == 0);
    nlohmann::json report2;
    {
        std::ifstream f(out3 + "/report.json");
        f >> report2;
    }
    CHECK(report2["test_mse"].get<double>() == report["test_mse"].get<double>());
}

TEST_CASE("cli ablate writes the sweep table incrementally") {
    TempDir td("ablate");
    write_file(td / "run.json", R"({
      "model": {"L": 16, "h": 4, "p": 4, "S": 4, "P": 8, "n_heads": 2, "n_layers": 1,
                 "d_ff": 16},
      "train": {"batch_size": 64, "max_epochs": 1},
      "data": {"synth": {"kind": "independent_walks", "M": 3, "T": 300, "seed": 2}}
    })");
    const std::string out = td / "sweep";
    REQUIRE(run_cli("ablate --config " + (td / "run.json") + " --set out_dir=" + out +
                        " --m-values 0,1 --seeds 1,2",
                    td / "ablate.log") == 0);
    const std::string csv = slurp(out + "/ablation.csv");
    CHECK(csv.rfind("dataset,m,horizon,seed,mse,mae,wall_time_s\n", 0) == 0);
    std::size_t rows = 0;
    for (char ch : csv)
        if (ch == '\n') ++rows;
    CHECK(rows == 5);  // header + 4 cells
    CHECK(fs::exists(out + "/ablation.json"));

    // Oversized grid is refused up front.
    CHECK(run_cli("ablate --config " + (td / "run.json") + " --set out_dir=" + out +
                      " --m-values 0,1 --seeds 1,2 --max-runs 3",
                  td / "cap.log") == 1);
}

TEST_CASE("cli correlate output matches the library") {
    TempDir td("corr");
    REQUIRE(run_cli("synth --kind drifting_corr --m-channels 3 --length 300 --seed 4 --out " +
                    (td / "d.csv")) == 0);
    REQUIRE(run_cli("correlate --data " + (td / "d.csv") + " --channels 0,1 --window 24 --out " +
                    (td / "corr.csv")) == 0);
    const std::string text = slurp(td / "corr.csv");
    CHECK(text.rfind("t,corr\n", 0) == 0);
    std::size_t lines = 0;
    for (char ch : text)
        if (ch == '\n') ++lines;
    CHECK(lines == 300 - 24 + 1 + 1);  // windows + header
}
