#include "ftlab/adp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ftlab/csv.hpp"

namespace ftlab {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

}  // namespace

std::vector<std::size_t> fibonacci_checkpoints(std::size_t max_steps) {
    if (max_steps == 0) fail("fibonacci_checkpoints: max_steps must be at least 1");
    std::vector<std::size_t> out;
    std::size_t a = 1, b = 1;
    while (a <= max_steps) {
        if (out.empty() || out.back() != a) out.push_back(a);
        const std::size_t next = a + b;
        a = b;
        b = next;
    }
    return out;
}

std::vector<std::size_t> checkpoint_schedule(std::size_t max_steps, bool include_final) {
    std::vector<std::size_t> out = fibonacci_checkpoints(max_steps);
    if (include_final && out.back() != max_steps) out.push_back(max_steps);
    return out;
}

bool validation_due(std::size_t step, std::size_t saturation) {
    if (step == 0) fail("validation_due: steps are 1-based");
    if (saturation == 0) fail("validation_due: saturation must be positive");
    // Validation step numbers are the partial sums 1, 3, 6, ... of the gap
    // sequence min(k, saturation).
    const std::size_t ramp_end = saturation * (saturation + 1) / 2;
    if (step >= ramp_end) return (step - ramp_end) % saturation == 0;
    std::size_t s = 0;
    for (std::size_t k = 1; s < step; ++k) {
        s += std::min(k, saturation);
        if (s == step) return true;
    }
    return false;
}

EvalResult evaluate_model(FeatureExtractor& fe, const ClassifierHead& head,
                          const LabeledDataset& ds, std::size_t batch_size) {
    const std::size_t n = ds.size();
    if (n == 0) fail("evaluate_model: empty dataset");
    const std::size_t k5 = std::min<std::size_t>(5, head.n_classes());
    double hit1 = 0.0, hit5 = 0.0;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(n, start + batch_size);
        std::vector<std::size_t> indices(stop - start);
        for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = start + i;
        Batch batch = make_batch(ds, indices);
        const Tensor features = fe.forward(batch.images, false);
        const Tensor logits = head.forward(features);
        const double m = static_cast<double>(indices.size());
        hit1 += topk_accuracy(logits, batch.labels, 1) * m;
        hit5 += topk_accuracy(logits, batch.labels, k5) * m;
    }
    return {hit1 / static_cast<double>(n), hit5 / static_cast<double>(n)};
}

bool ValidationTracker::offer(double val_acc, std::size_t step,
                              const std::function<Checkpoint()>& snapshot) {
    if (snapshot_ && val_acc <= best_val_acc_) return false;
    best_val_acc_ = val_acc;
    best_step_ = step;
    snapshot_ = snapshot();
    return true;
}

const Checkpoint& ValidationTracker::snapshot() const {
    if (!snapshot_) fail("validation tracker: no snapshot recorded yet");
    return *snapshot_;
}

void AdpLog::append(const AdpRecord& record) {
    if (!records_.empty() && record.step <= records_.back().step)
        fail("adp log: checkpoint steps must be strictly increasing");
    if (!records_.empty() && record.best_val_step > record.step)
        fail("adp log: best_val_step exceeds checkpoint step");
    records_.push_back(record);
}

void AdpLog::write_csv(std::ostream& os) const {
    os << "step,target_top1,target_top5,source_top1,best_val_step,w_fro,theta_dist\n";
    for (const AdpRecord& r : records_) {
        os << r.step << ',' << csv_num(r.target_top1) << ',' << csv_num(r.target_top5) << ','
           << csv_num(r.source_top1) << ',' << r.best_val_step << ',' << csv_num(r.w_fro) << ','
           << csv_num(r.theta_dist) << '\n';
    }
}

AdpLog AdpLog::read_csv(std::istream& is) {
    AdpLog log;
    std::string line;
    if (!std::getline(is, line)) fail("adp csv: empty file");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        AdpRecord r;
        char comma;
        ls >> r.step >> comma >> r.target_top1 >> comma >> r.target_top5 >> comma >>
            r.source_top1 >> comma >> r.best_val_step >> comma >> r.w_fro >> comma >>
            r.theta_dist;
        if (ls.fail()) fail("adp csv: malformed row '" + line + "'");
        log.append(r);
    }
    return log;
}

AdpLog AdpLog::read_csv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("adp csv: cannot open '" + path + "'");
    return read_csv(is);
}

CheckpointEvaluator::CheckpointEvaluator(LabeledDataset target_test,
                                         std::optional<LabeledDataset> source_test,
                                         std::vector<double> theta_source)
    : target_test_(std::move(target_test)),
      source_test_(std::move(source_test)),
      theta_source_(std::move(theta_source)) {}

AdpRecord CheckpointEvaluator::record(const ValidationTracker& tracker, std::size_t step) {
    if (!tracker.has_snapshot()) fail("record_checkpoint: tracker holds no snapshot");
    if (tracker.best_step() > step) fail("record_checkpoint: snapshot is newer than checkpoint");
    if (!cached_best_step_ || *cached_best_step_ != tracker.best_step()) {
        RestoredModel model = restore_model(tracker.snapshot());
        AdpRecord r;
        const EvalResult target = evaluate_model(model.extractor, model.head, target_test_);
        r.target_top1 = target.top1;
        r.target_top5 = target.top5;
        if (source_test_) {
            if (!model.source_head) fail("record_checkpoint: snapshot lacks a source head");
            r.source_top1 =
                evaluate_model(model.extractor, *model.source_head, *source_test_).top1;
        }
        r.best_val_step = tracker.best_step();
        r.w_fro = frobenius_norm(model.head.w());
        if (!theta_source_.empty()) r.theta_dist = l2_distance(model.extractor.theta(), theta_source_);
        cached_ = r;
        cached_best_step_ = tracker.best_step();
    }
    AdpRecord out = cached_;
    out.step = step;
    return out;
}

std::vector<ConvergenceRow> convergence_report(const std::vector<RunFinal>& finals) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<RunFinal>> grouped;
    for (const RunFinal& f : finals) {
        if (!grouped.count(f.method)) order.push_back(f.method);
        grouped[f.method].push_back(f);
    }
    auto mean_std = [](const std::vector<double>& v) {
        const double n = static_cast<double>(v.size());
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= n;
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double sd = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        return std::pair<double, double>(mean, sd);
    };
    std::vector<ConvergenceRow> rows;
    for (const std::string& method : order) {
        const auto& group = grouped[method];
        std::vector<double> e1, e5, dist;
        for (const RunFinal& f : group) {
            e1.push_back(f.top1_error);
            e5.push_back(f.top5_error);
            dist.push_back(f.theta_dist);
        }
        ConvergenceRow row;
        row.method = method;
        row.seeds = group.size();
        row.std_defined = group.size() >= 2;
        std::tie(row.top1_error_mean, row.top1_error_std) = mean_std(e1);
        std::tie(row.top5_error_mean, row.top5_error_std) = mean_std(e5);
        std::tie(row.dist_mean, row.dist_std) = mean_std(dist);
        rows.push_back(row);
    }
    return rows;
}

void write_convergence_csv(std::ostream& os, const std::vector<ConvergenceRow>& rows) {
    os << "method,seeds,std_defined,top1_err_mean,top1_err_std,top5_err_mean,top5_err_std,"
          "theta_dist_mean,theta_dist_std\n";
    for (const ConvergenceRow& r : rows) {
        os << r.method << ',' << r.seeds << ',' << (r.std_defined ? 1 : 0) << ','
           << csv_num(r.top1_error_mean) << ',' << csv_num(r.top1_error_std) << ','
           << csv_num(r.top5_error_mean) << ',' << csv_num(r.top5_error_std) << ','
           << csv_num(r.dist_mean) << ',' << csv_num(r.dist_std) << '\n';
    }
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) fail("percentile: empty input");
    std::sort(values.begin(), values.end());
    const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace ftlab
