#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ftlab/adp.hpp"
#include "ftlab/data.hpp"
#include "ftlab/nn.hpp"
#include "ftlab/optim.hpp"

namespace ftlab {

/// Pretrained backbone with a fresh target head. The source-era parameter
/// vector and the detached source head are retained immutably so forgetting
/// can be measured throughout target training.
struct AdoptedModel {
    FeatureExtractor extractor;
    ClassifierHead target_head;
    ClassifierHead source_head;
    std::vector<double> theta_source;  // backbone parameters at adoption time
    std::uint64_t seed = 0;
};

/// Replaces the checkpoint's head with a freshly initialized one sized for
/// n_target classes; the backbone and the old head are kept as-is.
AdoptedModel adopt(const Checkpoint& pretrained, std::size_t n_target, const HeadInit& init,
                   std::uint64_t seed);

/// Top-1 accuracy of the detached source head on source test data, backbone
/// in inference mode.
double evaluate_source_retention(AdoptedModel& model, const LabeledDataset& source_test);

enum class FinetuneMode {
    FeatureExtraction,  // backbone frozen, head trains
    Traditional,        // joint training, single rate (alpha taken from beta)
    WarmupThenJoint,    // head-only phase until validation stalls, then joint
    Fast,               // zero head init, independent alpha / beta
    FrozenHead,         // head frozen at its init, backbone trains
};

FinetuneMode finetune_mode_from_string(const std::string& s);
std::string to_string(FinetuneMode m);

struct FinetuneConfig {
    FinetuneMode mode = FinetuneMode::Fast;
    double alpha = 0.01;  // head learning rate
    double beta = 0.001;  // backbone learning rate
    HeadInit init;
    OptimizerConfig optimizer;
    std::size_t batch_size = 25;
    std::size_t max_steps = 55;
    std::uint64_t seed = 1;

    double warmup_improve_pp = 1.0;  // percentage points that count as improvement
    std::size_t warmup_patience = 10;
    bool update_bn_in_warmup = false;

    double hflip_prob = 0.0;  // 0 disables augmentation
    std::size_t val_saturation = 10;
    bool include_final_checkpoint = true;
    /// Log validation accuracy on every step (the warmup stop rule forces
    /// this during the warmup phase regardless).
    bool per_step_validation = true;
    std::string label;

    /// Applies the per-mode forcings: FeatureExtraction zeroes beta,
    /// Traditional copies beta into alpha, Fast demands zero init, FrozenHead
    /// zeroes alpha. Throws on negative rates.
    void normalize();
};

/// One row per training iteration, measured at forward time (before the
/// step's update) except v_theta_norm, which is the norm of the update just
/// applied. val_top1 is negative when validation was not evaluated.
struct StepLogRow {
    std::size_t step = 0;  // 0-based iteration index
    double loss = 0.0;
    double w_fro = 0.0;
    double mean_entropy = 0.0;
    double mean_delta_sq = 0.0;
    double theta_dist = 0.0;
    double v_theta_norm = 0.0;
    double val_top1 = -1.0;
};

struct TrainRun {
    std::vector<StepLogRow> steps;
    AdpLog adp;
    std::size_t transition_step = 0;  // 1-based update number; 0 when none occurred
    double best_val_acc = 0.0;
    std::size_t best_val_step = 0;
    Checkpoint best_state;
    Checkpoint final_state;
};

struct TransferData {
    LabeledDataset train;  // target training split (validation already removed)
    LabeledDataset val;
    LabeledDataset test;
    std::optional<LabeledDataset> source_test;
};

/// Runs the configured fine-tuning procedure with best-validation tracking
/// and deployment-checkpoint evaluation. Deterministic: identical config,
/// seed and data reproduce the run bit for bit.
TrainRun finetune(AdoptedModel& model, const FinetuneConfig& cfg, const TransferData& data);

void write_steps_csv(std::ostream& os, const std::vector<StepLogRow>& rows);
std::vector<StepLogRow> read_steps_csv(std::istream& is);
std::vector<StepLogRow> read_steps_csv_file(const std::string& path);

}  // namespace ftlab
