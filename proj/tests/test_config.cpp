#include <doctest.h>

#include "ftlab/config.hpp"

using namespace ftlab;

namespace {

const char* kFullConfig = R"json({
  "data": {
    "source": {"kind": "digits", "digit_classes": [0,1,2,3,4],
               "train_per_class": 200, "test_per_class": 50, "image_size": 28, "seed": 11},
    "target": {"kind": "digits", "digit_classes": [5,6,7,8,9],
               "train_per_class": 200, "test_per_class": 50, "image_size": 28, "seed": 12},
    "hflip": false
  },
  "pretrain": {"arch": "desk_cnn", "epochs": 2, "lr": 0.05, "momentum": 0.9,
               "batch_size": 25, "seed": 7, "checkpoint": "pre.ckpt"},
  "adopt": {"init_mode": "normal", "sigma": 0.01},
  "finetune": {"mode": "traditional", "alpha": 0.01, "beta": 0.01,
               "optimizer": "sgd_momentum", "momentum": 0.9, "batch_size": 25,
               "max_steps": 50, "seeds": [1,2,3]},
  "eval": {"val_saturation": 10, "val_fraction": 0.05, "include_final": true},
  "output": {"dir": "runs/demo"}
})json";

}  // namespace

TEST_CASE("full config parses into the expected fields") {
    const ExperimentConfig cfg = ExperimentConfig::parse(kFullConfig);
    CHECK(cfg.data.source.digit_classes == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(cfg.data.target.seed == 12);
    CHECK(cfg.pretrain.epochs == 2);
    CHECK(cfg.pretrain.checkpoint == "pre.ckpt");
    CHECK(cfg.adopt.init_mode == "normal");
    CHECK(cfg.adopt.sigma == doctest::Approx(0.01));
    CHECK(cfg.finetune.mode == "traditional");
    CHECK(cfg.finetune.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(cfg.eval.val_fraction == doctest::Approx(0.05));
    CHECK(cfg.output.dir == "runs/demo");
    CHECK(cfg.raw_text == kFullConfig);
}

TEST_CASE("unknown keys are rejected with their path") {
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse(R"({"datum": {}})"),
                         doctest::Contains("unknown key '<root>.datum'"), std::runtime_error);
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse(R"({"finetune": {"alfa": 1}})"),
                         doctest::Contains("unknown key 'finetune.alfa'"), std::runtime_error);
    CHECK_THROWS_WITH_AS(
        ExperimentConfig::parse(R"({"data": {"source": {"kind": "digits", "digit_classes": [0,1], "sep": 2}}})"),
        doctest::Contains("unknown key 'data.source.sep'"), std::runtime_error);
}

TEST_CASE("parse errors carry line and column") {
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse("{\n  \"data\": ???\n}"),
                         doctest::Contains("line 2"), std::runtime_error);
}

TEST_CASE("invalid enum values are rejected") {
    CHECK_THROWS(ExperimentConfig::parse(R"({"adopt": {"init_mode": "maximal"}})"));
    CHECK_THROWS(ExperimentConfig::parse(R"({"finetune": {"mode": "yolo"}})"));
    CHECK_THROWS(ExperimentConfig::parse(R"({"finetune": {"optimizer": "lion"}})"));
    CHECK_THROWS(ExperimentConfig::parse(R"({"finetune": {"seeds": []}})"));
    CHECK_THROWS(ExperimentConfig::parse(R"({"eval": {"checkpoints": "primes"}})"));
    CHECK_THROWS(ExperimentConfig::parse(R"({"data": {"source": {"kind": "webcam"}}})"));
}

TEST_CASE("defaults survive an empty config") {
    const ExperimentConfig cfg = ExperimentConfig::parse("{}");
    CHECK(cfg.pretrain.arch == "desk_cnn");
    CHECK(cfg.finetune.seeds.size() == 5);
    CHECK(cfg.eval.val_saturation == 10);
}

TEST_CASE("finetune_config maps sections onto the training loop config") {
    const ExperimentConfig cfg = ExperimentConfig::parse(kFullConfig);
    const FinetuneConfig fc = cfg.finetune_config(9);
    CHECK(fc.mode == FinetuneMode::Traditional);
    CHECK(fc.seed == 9);
    CHECK(fc.init.mode == InitMode::Normal);
    CHECK(fc.init.sigma == doctest::Approx(0.01));
    CHECK(fc.hflip_prob == 0.0);
    CHECK(fc.max_steps == 50);
}

TEST_CASE("method label is explicit or derived") {
    ExperimentConfig cfg = ExperimentConfig::parse(kFullConfig);
    CHECK(cfg.method_label() ==
          "traditional(normal s=0.01,a=0.01,b=0.01,sgd_momentum)");
    cfg.finetune.label = "baseline";
    CHECK(cfg.method_label() == "baseline");
}

TEST_CASE("missing config file reports the path") {
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse_file("/nonexistent/cfg.json"),
                         doctest::Contains("cannot open"), std::runtime_error);
}
