#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftlab/transfer.hpp"

namespace ftlab {

/// Where a task's data comes from: "digits" (built-in glyph renderer),
/// "blobs" (Gaussian bumps), or "idx" (IDX file pairs on disk).
struct DatasetSpec {
    std::string kind = "digits";
    std::vector<int> digit_classes;
    std::size_t n_classes = 5;  // blobs
    std::size_t train_per_class = 400;
    std::size_t test_per_class = 100;
    std::size_t image_size = 28;
    double blob_separation = 3.0;
    std::uint64_t seed = 0;
    std::string train_images, train_labels, test_images, test_labels;  // idx
};

struct DataConfig {
    DatasetSpec source;
    DatasetSpec target;
    bool hflip = false;
};

struct PretrainConfig {
    std::string arch = "desk_cnn";
    std::size_t epochs = 6;
    double lr = 0.05;
    double momentum = 0.9;
    std::size_t batch_size = 25;
    std::uint64_t seed = 7;
    std::string checkpoint = "pretrained.ckpt";
};

struct AdoptConfig {
    std::string init_mode = "zero";
    double epsilon = 0.0;
    double sigma = 0.01;
};

struct FinetuneSection {
    std::string mode = "fast";
    double alpha = 0.05;
    double beta = 0.005;
    std::string optimizer = "sgd_momentum";
    double momentum = 0.9;
    bool accumulating_momentum = false;
    std::size_t batch_size = 25;
    std::size_t max_steps = 55;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    double warmup_improve_pp = 1.0;
    std::size_t warmup_patience = 10;
    bool update_bn_in_warmup = false;
    bool per_step_validation = true;
    std::string label;
};

struct EvalConfig {
    std::string checkpoints = "fibonacci";
    bool include_final = true;
    std::size_t val_saturation = 10;
    double val_fraction = 0.05;
};

struct OutputConfig {
    std::string dir = "runs";
};

/// Declarative experiment description parsed from a JSON file. Unknown keys
/// anywhere in the document are rejected, and the original file bytes are
/// kept so run directories can echo the config verbatim.
struct ExperimentConfig {
    DataConfig data;
    PretrainConfig pretrain;
    AdoptConfig adopt;
    FinetuneSection finetune;
    EvalConfig eval;
    OutputConfig output;
    std::string raw_text;

    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig parse_file(const std::string& path);

    HeadInit head_init() const;
    FinetuneConfig finetune_config(std::uint64_t seed) const;
    /// Auto-derived method label used to group runs in reports, unless the
    /// config names one explicitly.
    std::string method_label() const;
};

}  // namespace ftlab
