#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ftlab/data.hpp"
#include "ftlab/nn.hpp"

namespace ftlab {

/// Deduplicated Fibonacci step numbers {1,2,3,5,8,13,21,...} truncated at
/// max_steps.
std::vector<std::size_t> fibonacci_checkpoints(std::size_t max_steps);

/// Deployment checkpoints: the Fibonacci set plus the final step so the last
/// deployable state is always recorded.
std::vector<std::size_t> checkpoint_schedule(std::size_t max_steps, bool include_final);

/// Validation cadence: the k-th validation happens gap_k after the previous
/// one with gap_k = min(k, saturation), i.e. steps 1, 3, 6, 10, 15, 21, 28,
/// 36, 45, 55 and then every `saturation` steps.
bool validation_due(std::size_t step, std::size_t saturation = 10);

struct EvalResult {
    double top1 = 0.0;
    double top5 = 0.0;
};

/// Inference-mode accuracy over a dataset, evaluated in fixed-size chunks.
/// top5 uses k = min(5, N).
EvalResult evaluate_model(FeatureExtractor& fe, const ClassifierHead& head,
                          const LabeledDataset& ds, std::size_t batch_size = 100);

/// Best-validation bookkeeping. `offer` snapshots strictly better states
/// only, so ties keep the earlier snapshot and best_val_acc never decreases.
class ValidationTracker {
public:
    bool offer(double val_acc, std::size_t step, const std::function<Checkpoint()>& snapshot);

    bool has_snapshot() const { return snapshot_.has_value(); }
    double best_val_acc() const { return best_val_acc_; }
    std::size_t best_step() const { return best_step_; }
    const Checkpoint& snapshot() const;

private:
    double best_val_acc_ = -1.0;
    std::size_t best_step_ = 0;
    std::optional<Checkpoint> snapshot_;
};

struct AdpRecord {
    std::size_t step = 0;
    double target_top1 = 0.0;
    double target_top5 = 0.0;
    double source_top1 = 0.0;
    std::size_t best_val_step = 0;
    double w_fro = 0.0;
    double theta_dist = 0.0;
};

/// Time-indexed deployment log; appends enforce strictly increasing steps.
class AdpLog {
public:
    void append(const AdpRecord& record);
    const std::vector<AdpRecord>& records() const { return records_; }

    void write_csv(std::ostream& os) const;
    static AdpLog read_csv(std::istream& is);
    static AdpLog read_csv_file(const std::string& path);

private:
    std::vector<AdpRecord> records_;
};

/// Evaluates the tracker's best snapshot against the test splits. The result
/// is cached by best-validation step, so checkpoints between validation
/// improvements repeat identical metrics without re-evaluating, and the live
/// training state is never touched.
class CheckpointEvaluator {
public:
    CheckpointEvaluator(LabeledDataset target_test, std::optional<LabeledDataset> source_test,
                        std::vector<double> theta_source);

    AdpRecord record(const ValidationTracker& tracker, std::size_t step);

private:
    LabeledDataset target_test_;
    std::optional<LabeledDataset> source_test_;
    std::vector<double> theta_source_;
    std::optional<std::size_t> cached_best_step_;
    AdpRecord cached_;
};

struct RunFinal {
    std::string method;
    double top1_error = 0.0;
    double top5_error = 0.0;
    double theta_dist = 0.0;
};

struct ConvergenceRow {
    std::string method;
    std::size_t seeds = 0;
    bool std_defined = false;  // false when fewer than 2 seeds
    double top1_error_mean = 0.0, top1_error_std = 0.0;
    double top5_error_mean = 0.0, top5_error_std = 0.0;
    double dist_mean = 0.0, dist_std = 0.0;
};

/// Mean and sample standard deviation per method over seeds, in first-seen
/// method order.
std::vector<ConvergenceRow> convergence_report(const std::vector<RunFinal>& finals);

void write_convergence_csv(std::ostream& os, const std::vector<ConvergenceRow>& rows);

/// Linear-interpolation percentile, p in [0, 100]. Input need not be sorted.
double percentile(std::vector<double> values, double p);

}  // namespace ftlab
