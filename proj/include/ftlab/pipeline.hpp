#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ftlab/config.hpp"

namespace ftlab {

inline constexpr const char* kVersion = "0.1.0";

/// Materializes one task's train/test datasets from its spec. Deterministic
/// per spec contents.
struct TaskData {
    LabeledDataset train;
    LabeledDataset test;
};

TaskData build_task_data(const DatasetSpec& spec);

/// Trains the configured backbone and source head from scratch on the source
/// task and writes `<out_dir>/<checkpoint-name>` plus a per-epoch CSV.
/// Returns the checkpoint path.
std::string run_pretrain(const ExperimentConfig& cfg, const std::string& out_dir);

/// One persisted fine-tuning run (a directory containing config.json,
/// run_meta.json, steps.csv, adp.csv and checkpoints/).
struct RunResult {
    std::string dir;
    std::uint64_t seed = 0;
    std::string label;
};

/// Fans the configured seed list out over `jobs` workers. All runs adopt the
/// same pretrained checkpoint; each run directory is written independently.
std::vector<RunResult> run_finetune(const ExperimentConfig& cfg, const std::string& out_dir,
                                    const std::optional<std::vector<std::uint64_t>>& seed_override,
                                    std::size_t jobs);

/// CSV-only reporting: reads adp.csv and run_meta.json from the given run
/// directories, writes aggregate.csv (median + 2.5/97.5 percentile bands per
/// checkpoint and method), convergence.csv, and adp_curves.svg under out_dir.
void run_report(const std::vector<std::string>& run_dirs, const std::string& out_dir);

/// Metadata persisted next to each run's CSVs.
struct RunMeta {
    std::string label;
    std::uint64_t seed = 0;
    std::string mode;
    double alpha = 0.0, beta = 0.0;
    std::string optimizer;
    std::string init_mode;
    std::size_t transition_step = 0;
    std::size_t best_val_step = 0;
    double best_val_acc = 0.0;
    bool hflip = false;
    std::string hflip_note;
    std::string version;
};

void write_run_meta(const std::string& path, const RunMeta& meta);
RunMeta read_run_meta(const std::string& path);

}  // namespace ftlab
