#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "ftlab/pipeline.hpp"

using namespace ftlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("ftlab_pipe_test_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string tiny_config(const std::string& out_dir) {
    std::ostringstream os;
    os << R"({
  "data": {
    "source": {"kind": "digits", "digit_classes": [0,1,2], "train_per_class": 30,
               "test_per_class": 10, "image_size": 16, "seed": 5},
    "target": {"kind": "digits", "digit_classes": [3,4,5], "train_per_class": 30,
               "test_per_class": 10, "image_size": 16, "seed": 6}
  },
  "pretrain": {"epochs": 2, "lr": 0.05, "batch_size": 15, "seed": 7},
  "adopt": {"init_mode": "zero"},
  "finetune": {"mode": "fast", "alpha": 0.05, "beta": 0.01, "batch_size": 15,
               "max_steps": 8, "seeds": [1,2], "per_step_validation": false},
  "eval": {"val_fraction": 0.1},
  "output": {"dir": ")"
       << out_dir << R"("}
})";
    return os.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("task data is deterministic and split per spec") {
    DatasetSpec spec;
    spec.kind = "digits";
    spec.digit_classes = {0, 1, 2};
    spec.train_per_class = 20;
    spec.test_per_class = 8;
    spec.image_size = 16;
    spec.seed = 3;
    const TaskData a = build_task_data(spec);
    const TaskData b = build_task_data(spec);
    CHECK(a.train.images == b.train.images);
    CHECK(a.test.images == b.test.images);
    CHECK(a.train.size() == 60);
    CHECK(a.test.size() == 24);
    // Train and test are decorrelated draws.
    CHECK_FALSE(a.train.images == b.test.images);
}

TEST_CASE("pretrain, finetune and report produce the full artifact tree") {
    TempDir tmp;
    const std::string out = (tmp.path / "runs").string();
    const ExperimentConfig cfg = ExperimentConfig::parse(tiny_config(out));

    const std::string ckpt = run_pretrain(cfg, out);
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(fs::path(out) / "pretrain.csv"));

    const std::vector<RunResult> runs = run_finetune(cfg, out, std::nullopt, 2);
    REQUIRE(runs.size() == 2);
    for (const RunResult& run : runs) {
        CHECK(fs::exists(fs::path(run.dir) / "steps.csv"));
        CHECK(fs::exists(fs::path(run.dir) / "adp.csv"));
        CHECK(fs::exists(fs::path(run.dir) / "run_meta.json"));
        CHECK(fs::exists(fs::path(run.dir) / "checkpoints" / "best.ckpt"));
        CHECK(fs::exists(fs::path(run.dir) / "checkpoints" / "final.ckpt"));
        // Config echo is verbatim.
        CHECK(slurp(fs::path(run.dir) / "config.json") == cfg.raw_text);
        const RunMeta meta = read_run_meta((fs::path(run.dir) / "run_meta.json").string());
        CHECK(meta.label == cfg.method_label());
        CHECK(meta.version == kVersion);
        CHECK(meta.hflip_note != "");  // digits keep flips off and say why
    }

    std::vector<std::string> dirs;
    for (const RunResult& run : runs) dirs.push_back(run.dir);
    const std::string report_dir = (tmp.path / "report").string();
    run_report(dirs, report_dir);
    CHECK(fs::exists(fs::path(report_dir) / "aggregate.csv"));
    CHECK(fs::exists(fs::path(report_dir) / "convergence.csv"));
    CHECK(fs::exists(fs::path(report_dir) / "adp_curves.svg"));
    const std::string svg = slurp(fs::path(report_dir) / "adp_curves.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("Source task") != std::string::npos);
}

TEST_CASE("reporting never needs model checkpoints") {
    TempDir tmp;
    const std::string out = (tmp.path / "runs").string();
    const ExperimentConfig cfg = ExperimentConfig::parse(tiny_config(out));
    run_pretrain(cfg, out);
    const std::vector<RunResult> runs = run_finetune(cfg, out, std::nullopt, 1);
    std::vector<std::string> dirs;
    for (const RunResult& run : runs) {
        fs::remove_all(fs::path(run.dir) / "checkpoints");
        dirs.push_back(run.dir);
    }
    const std::string report_dir = (tmp.path / "report").string();
    run_report(dirs, report_dir);  // must not touch checkpoints
    CHECK(fs::exists(fs::path(report_dir) / "aggregate.csv"));
}

TEST_CASE("seed sweeps are deterministic regardless of worker count") {
    TempDir tmp;
    const std::string out1 = (tmp.path / "a").string();
    const std::string out2 = (tmp.path / "b").string();
    const ExperimentConfig cfg1 = ExperimentConfig::parse(tiny_config(out1));
    const ExperimentConfig cfg2 = ExperimentConfig::parse(tiny_config(out2));
    run_pretrain(cfg1, out1);
    run_pretrain(cfg2, out2);
    const std::vector<RunResult> runs1 = run_finetune(cfg1, out1, std::nullopt, 1);
    const std::vector<RunResult> runs2 = run_finetune(cfg2, out2, std::nullopt, 2);
    REQUIRE(runs1.size() == runs2.size());
    for (std::size_t i = 0; i < runs1.size(); ++i) {
        CHECK(slurp(fs::path(runs1[i].dir) / "steps.csv") ==
              slurp(fs::path(runs2[i].dir) / "steps.csv"));
        CHECK(slurp(fs::path(runs1[i].dir) / "adp.csv") ==
              slurp(fs::path(runs2[i].dir) / "adp.csv"));
    }
}

TEST_CASE("finetune without a pretrained checkpoint fails with a diagnostic") {
    TempDir tmp;
    const std::string out = (tmp.path / "runs").string();
    const ExperimentConfig cfg = ExperimentConfig::parse(tiny_config(out));
    CHECK_THROWS_WITH_AS(run_finetune(cfg, out, std::nullopt, 1),
                         doctest::Contains("missing pretrained checkpoint"), std::runtime_error);
}

TEST_CASE("seed override replaces the config seed list") {
    TempDir tmp;
    const std::string out = (tmp.path / "runs").string();
    const ExperimentConfig cfg = ExperimentConfig::parse(tiny_config(out));
    run_pretrain(cfg, out);
    const std::vector<RunResult> runs =
        run_finetune(cfg, out, std::vector<std::uint64_t>{9}, 1);
    REQUIRE(runs.size() == 1);
    CHECK(runs[0].seed == 9);
}
