#include "ftlab/transfer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ftlab/csv.hpp"

namespace ftlab {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

double mean_row_entropy(const Tensor& probs) {
    const Tensor h = entropy_rows(probs);
    double acc = 0.0;
    for (double v : h.vec()) acc += v;
    return acc / static_cast<double>(h.numel());
}

double mean_delta_sq(const Tensor& delta) {
    double acc = 0.0;
    for (double v : delta.vec()) acc += v * v;
    return acc / static_cast<double>(delta.rows());
}

}  // namespace

AdoptedModel adopt(const Checkpoint& pretrained, std::size_t n_target, const HeadInit& init,
                   std::uint64_t seed) {
    if (n_target < 2) fail("adopt: need at least 2 target classes");
    RestoredModel restored = restore_model(pretrained);
    AdoptedModel model;
    model.extractor = std::move(restored.extractor);
    model.source_head = std::move(restored.head);
    const std::size_t d = model.source_head.dim();
    if (d == 0) fail("adopt: checkpoint head is empty");
    model.target_head = ClassifierHead(n_target, d);
    model.target_head.init(init, seed);
    model.theta_source = model.extractor.theta();
    model.seed = seed;
    return model;
}

double evaluate_source_retention(AdoptedModel& model, const LabeledDataset& source_test) {
    if (source_test.n_classes != model.source_head.n_classes())
        fail("source retention: label range does not match the source head");
    return evaluate_model(model.extractor, model.source_head, source_test).top1;
}

FinetuneMode finetune_mode_from_string(const std::string& s) {
    if (s == "feature_extraction") return FinetuneMode::FeatureExtraction;
    if (s == "traditional") return FinetuneMode::Traditional;
    if (s == "warmup_then_joint") return FinetuneMode::WarmupThenJoint;
    if (s == "fast") return FinetuneMode::Fast;
    if (s == "frozen_head") return FinetuneMode::FrozenHead;
    fail("unknown finetune mode '" + s + "'");
}

std::string to_string(FinetuneMode m) {
    switch (m) {
        case FinetuneMode::FeatureExtraction: return "feature_extraction";
        case FinetuneMode::Traditional: return "traditional";
        case FinetuneMode::WarmupThenJoint: return "warmup_then_joint";
        case FinetuneMode::Fast: return "fast";
        case FinetuneMode::FrozenHead: return "frozen_head";
    }
    fail("bad finetune mode");
}

void FinetuneConfig::normalize() {
    switch (mode) {
        case FinetuneMode::FeatureExtraction:
            beta = 0.0;
            break;
        case FinetuneMode::Traditional:
            alpha = beta;
            break;
        case FinetuneMode::Fast:
            if (init.mode != InitMode::Zero)
                fail("finetune: fast mode requires zero head initialization");
            break;
        case FinetuneMode::FrozenHead:
            alpha = 0.0;
            break;
        case FinetuneMode::WarmupThenJoint:
            break;
    }
    if (alpha < 0.0 || beta < 0.0) fail("finetune: learning rates must be non-negative");
    if (batch_size == 0) fail("finetune: batch size must be positive");
    if (max_steps == 0) fail("finetune: max_steps must be positive");
}

TrainRun finetune(AdoptedModel& model, const FinetuneConfig& config, const TransferData& data) {
    FinetuneConfig cfg = config;
    cfg.normalize();
    if (data.train.size() == 0) fail("finetune: empty training set");
    if (cfg.batch_size > data.train.size())
        fail("finetune: batch size exceeds training set size");

    const SamplerMode sampler_mode = cfg.batch_size % data.train.n_classes == 0
                                         ? SamplerMode::Balanced
                                         : SamplerMode::Shuffled;
    BatchSampler sampler(data.train, cfg.batch_size, sampler_mode, Rng::derive(cfg.seed, 1));

    bool warmup_active = cfg.mode == FinetuneMode::WarmupThenJoint;
    const double beta_target = cfg.beta;
    std::vector<ParamGroup> groups;
    groups.push_back({"head", cfg.alpha, model.target_head.parameters()});
    groups.push_back({"extractor", warmup_active ? 0.0 : cfg.beta,
                      model.extractor.parameters()});
    Optimizer optimizer(cfg.optimizer, std::move(groups));

    ValidationTracker tracker;
    CheckpointEvaluator evaluator(data.test, data.source_test, model.theta_source);
    const std::vector<std::size_t> checkpoints =
        checkpoint_schedule(cfg.max_steps, cfg.include_final_checkpoint);

    TrainRun run;
    auto snapshot = [&]() {
        return make_checkpoint(model.extractor, model.target_head, &model.source_head, cfg.seed);
    };

    double warmup_best = -1.0;
    std::size_t warmup_streak = 0;
    std::size_t next_checkpoint = 0;

    for (std::size_t i = 0; i < cfg.max_steps; ++i) {
        const std::size_t s = i + 1;  // update number about to be applied

        // Pre-update bookkeeping: the state after s-1 updates is what a
        // deployment at step s would ship.
        const bool val_due = validation_due(s, cfg.val_saturation);
        double val_acc = -1.0;
        if (cfg.per_step_validation || warmup_active || val_due)
            val_acc = evaluate_model(model.extractor, model.target_head, data.val).top1;

        if (warmup_active) {
            if (val_acc >= warmup_best + cfg.warmup_improve_pp / 100.0) {
                warmup_best = val_acc;
                warmup_streak = 0;
            } else if (++warmup_streak >= cfg.warmup_patience) {
                warmup_active = false;
                run.transition_step = s;  // this step's update is the first joint one
                for (ParamGroup& group : optimizer.groups())
                    if (group.name == "extractor") group.lr = beta_target;
            }
        }
        if (val_due) tracker.offer(val_acc, s, snapshot);
        while (next_checkpoint < checkpoints.size() && checkpoints[next_checkpoint] == s) {
            run.adp.append(evaluator.record(tracker, s));
            ++next_checkpoint;
        }

        // Training step.
        Batch batch = sampler.next();
        if (cfg.hflip_prob > 0.0)
            batch.images = hflip_augment(batch.images, cfg.hflip_prob, Rng::derive(cfg.seed, 1000 + i));

        const bool backbone_trains =
            cfg.mode != FinetuneMode::FeatureExtraction && !warmup_active;
        const bool extractor_training_mode =
            backbone_trains || (warmup_active && cfg.update_bn_in_warmup);

        const Tensor features = model.extractor.forward(batch.images, extractor_training_mode);
        const Tensor logits = model.target_head.forward(features);
        const Tensor probs = softmax_rows(logits);
        const double loss = nll_loss(probs, batch.one_hot);
        const Tensor delta = prediction_error(batch.one_hot, probs);

        StepLogRow row;
        row.step = i;
        row.loss = loss;
        row.w_fro = frobenius_norm(model.target_head.w());
        row.mean_entropy = mean_row_entropy(probs);
        row.mean_delta_sq = mean_delta_sq(delta);
        row.theta_dist = l2_distance(model.extractor.theta(), model.theta_source);
        row.val_top1 = val_acc;

        const Tensor grad_features = model.target_head.backward(features, delta);
        const std::vector<double> theta_before = model.extractor.theta();
        if (backbone_trains && cfg.beta > 0.0) model.extractor.backward(grad_features);
        optimizer.step();
        optimizer.zero_grad();
        row.v_theta_norm = l2_distance(model.extractor.theta(), theta_before);
        run.steps.push_back(row);
    }

    run.best_val_acc = tracker.best_val_acc();
    run.best_val_step = tracker.best_step();
    run.best_state = tracker.snapshot();
    run.final_state = snapshot();
    return run;
}

void write_steps_csv(std::ostream& os, const std::vector<StepLogRow>& rows) {
    os << "step,loss,w_fro,mean_entropy,mean_delta_sq,theta_dist,v_theta_norm,val_top1\n";
    for (const StepLogRow& r : rows) {
        os << r.step << ',' << csv_num(r.loss) << ',' << csv_num(r.w_fro) << ','
           << csv_num(r.mean_entropy) << ',' << csv_num(r.mean_delta_sq) << ','
           << csv_num(r.theta_dist) << ',' << csv_num(r.v_theta_norm) << ',';
        if (r.val_top1 >= 0.0) os << csv_num(r.val_top1);
        os << '\n';
    }
}

std::vector<StepLogRow> read_steps_csv(std::istream& is) {
    std::vector<StepLogRow> rows;
    std::string line;
    if (!std::getline(is, line)) fail("steps csv: empty file");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        StepLogRow r;
        std::string field;
        auto next = [&]() {
            if (!std::getline(ls, field, ',')) fail("steps csv: malformed row '" + line + "'");
            return field;
        };
        r.step = std::stoul(next());
        r.loss = std::stod(next());
        r.w_fro = std::stod(next());
        r.mean_entropy = std::stod(next());
        r.mean_delta_sq = std::stod(next());
        r.theta_dist = std::stod(next());
        r.v_theta_norm = std::stod(next());
        if (std::getline(ls, field, ',') && !field.empty()) r.val_top1 = std::stod(field);
        rows.push_back(r);
    }
    return rows;
}

std::vector<StepLogRow> read_steps_csv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("steps csv: cannot open '" + path + "'");
    return read_steps_csv(is);
}

}  // namespace ftlab
