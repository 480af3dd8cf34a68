#include "ftlab/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "ftlab/csv.hpp"
#include "ftlab/svg.hpp"

namespace ftlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("cannot open '" + path + "' for writing");
    os << text;
}

LabeledDataset build_split(const DatasetSpec& spec, bool train) {
    // Train and test draws come from decorrelated streams of the task seed.
    const std::uint64_t seed = Rng::derive(spec.seed, train ? 0 : 1);
    const std::size_t per_class = train ? spec.train_per_class : spec.test_per_class;
    if (spec.kind == "digits") return synth_digits(spec.digit_classes, per_class, spec.image_size, seed);
    if (spec.kind == "blobs")
        return synth_blobs(spec.n_classes, per_class, spec.image_size, seed, spec.blob_separation);
    if (spec.kind == "idx")
        return train ? load_idx(spec.train_images, spec.train_labels)
                     : load_idx(spec.test_images, spec.test_labels);
    fail("unknown dataset kind '" + spec.kind + "'");
}

}  // namespace

TaskData build_task_data(const DatasetSpec& spec) {
    return {build_split(spec, true), build_split(spec, false)};
}

std::string run_pretrain(const ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    TaskData source = build_task_data(cfg.data.source);
    const auto cshape = source.train.image_shape();

    FeatureExtractor extractor =
        build_extractor(arch_preset(cfg.pretrain.arch, cshape[0], cshape[1]));
    init_extractor(extractor, Rng::derive(cfg.pretrain.seed, 2));
    const std::size_t dim = extractor.output_dim(cshape);
    ClassifierHead head(source.train.n_classes, dim);
    head.init({InitMode::KaimingFanIn}, Rng::derive(cfg.pretrain.seed, 3));

    const SamplerMode mode = cfg.pretrain.batch_size % source.train.n_classes == 0
                                 ? SamplerMode::Balanced
                                 : SamplerMode::Shuffled;
    BatchSampler sampler(source.train, cfg.pretrain.batch_size, mode,
                         Rng::derive(cfg.pretrain.seed, 4));

    OptimizerConfig opt_cfg;
    opt_cfg.algo = OptAlgo::SgdMomentum;
    opt_cfg.momentum = cfg.pretrain.momentum;
    std::vector<ParamGroup> groups;
    groups.push_back({"head", cfg.pretrain.lr, head.parameters()});
    groups.push_back({"extractor", cfg.pretrain.lr, extractor.parameters()});
    Optimizer optimizer(opt_cfg, std::move(groups));

    std::ostringstream csv;
    csv << "epoch,mean_loss,train_top1,test_top1\n";
    const std::size_t steps_per_epoch = sampler.batches_per_epoch();
    for (std::size_t epoch = 0; epoch < cfg.pretrain.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            Batch batch = sampler.next();
            if (cfg.data.hflip)
                batch.images = hflip_augment(
                    batch.images, 0.5, Rng::derive(cfg.pretrain.seed, 100 + epoch * steps_per_epoch + b));
            const Tensor features = extractor.forward(batch.images, true);
            const Tensor logits = head.forward(features);
            const Tensor probs = softmax_rows(logits);
            loss_sum += nll_loss(probs, batch.one_hot);
            const Tensor delta = prediction_error(batch.one_hot, probs);
            const Tensor grad_features = head.backward(features, delta);
            extractor.backward(grad_features);
            optimizer.step();
            optimizer.zero_grad();
        }
        const double train_acc = evaluate_model(extractor, head, source.train).top1;
        const double test_acc = evaluate_model(extractor, head, source.test).top1;
        csv << epoch << ',' << csv_num(loss_sum / static_cast<double>(steps_per_epoch)) << ','
            << csv_num(train_acc) << ',' << csv_num(test_acc) << '\n';
    }

    const std::string ckpt_path = (fs::path(out_dir) / cfg.pretrain.checkpoint).string();
    make_checkpoint(extractor, head, nullptr, cfg.pretrain.seed).save_file(ckpt_path);
    write_text_file((fs::path(out_dir) / "pretrain.csv").string(), csv.str());
    return ckpt_path;
}

void write_run_meta(const std::string& path, const RunMeta& meta) {
    json j;
    j["label"] = meta.label;
    j["seed"] = meta.seed;
    j["mode"] = meta.mode;
    j["alpha"] = meta.alpha;
    j["beta"] = meta.beta;
    j["optimizer"] = meta.optimizer;
    j["init_mode"] = meta.init_mode;
    j["transition_step"] = meta.transition_step;
    j["best_val_step"] = meta.best_val_step;
    j["best_val_acc"] = meta.best_val_acc;
    j["hflip"] = meta.hflip;
    j["hflip_note"] = meta.hflip_note;
    j["version"] = meta.version;
    write_text_file(path, j.dump(2) + "\n");
}

RunMeta read_run_meta(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("cannot open '" + path + "'");
    json j = json::parse(is);
    RunMeta meta;
    meta.label = j.value("label", "");
    meta.seed = j.value("seed", std::uint64_t{0});
    meta.mode = j.value("mode", "");
    meta.alpha = j.value("alpha", 0.0);
    meta.beta = j.value("beta", 0.0);
    meta.optimizer = j.value("optimizer", "");
    meta.init_mode = j.value("init_mode", "");
    meta.transition_step = j.value("transition_step", std::size_t{0});
    meta.best_val_step = j.value("best_val_step", std::size_t{0});
    meta.best_val_acc = j.value("best_val_acc", 0.0);
    meta.hflip = j.value("hflip", false);
    meta.hflip_note = j.value("hflip_note", "");
    meta.version = j.value("version", "");
    return meta;
}

std::vector<RunResult> run_finetune(const ExperimentConfig& cfg, const std::string& out_dir,
                                    const std::optional<std::vector<std::uint64_t>>& seed_override,
                                    std::size_t jobs) {
    const std::vector<std::uint64_t> seeds =
        seed_override && !seed_override->empty() ? *seed_override : cfg.finetune.seeds;
    if (seeds.empty()) fail("finetune: seed list is empty");

    const std::string ckpt_path = (fs::path(out_dir) / cfg.pretrain.checkpoint).string();
    if (!fs::exists(ckpt_path))
        fail("finetune: missing pretrained checkpoint '" + ckpt_path + "' (run pretrain first)");
    const Checkpoint pretrained = Checkpoint::load_file(ckpt_path);

    // Shared immutable inputs for all seeds. The validation split is fixed
    // per task, independent of the run seed.
    TaskData target = build_task_data(cfg.data.target);
    TaskData source = build_task_data(cfg.data.source);
    const Split split =
        stratified_split(target.train, cfg.eval.val_fraction, Rng::derive(cfg.data.target.seed, 7));

    TransferData transfer_data;
    transfer_data.train = std::move(split.train);
    transfer_data.val = std::move(split.holdout);
    transfer_data.test = std::move(target.test);
    transfer_data.source_test = std::move(source.test);

    const std::string label = cfg.method_label();
    std::string label_dir = label;
    for (char& c : label_dir)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';

    std::vector<RunResult> results(seeds.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::string first_error;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= seeds.size()) return;
            try {
                const std::uint64_t seed = seeds[i];
                AdoptedModel model = adopt(pretrained, transfer_data.train.n_classes,
                                           cfg.head_init(), seed);
                FinetuneConfig run_cfg = cfg.finetune_config(seed);
                run_cfg.normalize();
                TrainRun run = finetune(model, run_cfg, transfer_data);

                const fs::path dir =
                    fs::path(out_dir) / label_dir / ("seed" + std::to_string(seed));
                fs::create_directories(dir / "checkpoints");
                write_text_file((dir / "config.json").string(), cfg.raw_text);

                std::ostringstream steps;
                write_steps_csv(steps, run.steps);
                write_text_file((dir / "steps.csv").string(), steps.str());
                std::ostringstream adp;
                run.adp.write_csv(adp);
                write_text_file((dir / "adp.csv").string(), adp.str());

                run.best_state.save_file((dir / "checkpoints" / "best.ckpt").string());
                run.final_state.save_file((dir / "checkpoints" / "final.ckpt").string());

                RunMeta meta;
                meta.label = label;
                meta.seed = seed;
                meta.mode = to_string(run_cfg.mode);
                meta.alpha = run_cfg.alpha;
                meta.beta = run_cfg.beta;
                meta.optimizer = to_string(run_cfg.optimizer.algo);
                meta.init_mode = to_string(run_cfg.init.mode);
                meta.transition_step = run.transition_step;
                meta.best_val_step = run.best_val_step;
                meta.best_val_acc = run.best_val_acc;
                meta.hflip = run_cfg.hflip_prob > 0.0;
                if (cfg.data.target.kind == "digits" && !cfg.data.hflip)
                    meta.hflip_note = "horizontal flip disabled: mirrored digits change identity";
                meta.version = kVersion;
                write_run_meta((dir / "run_meta.json").string(), meta);

                results[i] = {dir.string(), seed, label};
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (first_error.empty()) first_error = e.what();
            }
        }
    };

    const std::size_t n_workers = std::max<std::size_t>(
        1, std::min(jobs ? jobs : std::thread::hardware_concurrency(), seeds.size()));
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
    if (!first_error.empty()) fail(first_error);
    return results;
}

void run_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    if (run_dirs.empty()) fail("report: need at least one run directory");
    fs::create_directories(out_dir);

    struct RunData {
        RunMeta meta;
        AdpLog adp;
    };
    std::vector<std::string> label_order;
    std::map<std::string, std::vector<RunData>> by_label;
    for (const std::string& dir : run_dirs) {
        RunData rd;
        rd.meta = read_run_meta((fs::path(dir) / "run_meta.json").string());
        rd.adp = AdpLog::read_csv_file((fs::path(dir) / "adp.csv").string());
        if (!by_label.count(rd.meta.label)) label_order.push_back(rd.meta.label);
        by_label[rd.meta.label].push_back(std::move(rd));
    }

    std::ostringstream agg;
    agg << "method,step,seeds,target_top1_med,target_top1_lo,target_top1_hi,"
           "source_top1_med,source_top1_lo,source_top1_hi\n";
    std::vector<ChartSeries> target_series, source_series;
    for (const std::string& label : label_order) {
        const auto& runs = by_label[label];
        // Collect per-step values across seeds.
        std::vector<std::size_t> steps;
        for (const AdpRecord& r : runs.front().adp.records()) steps.push_back(r.step);
        ChartSeries ts{label, {}, {}, {}, {}};
        ChartSeries ss{label, {}, {}, {}, {}};
        for (std::size_t step : steps) {
            std::vector<double> target_vals, source_vals;
            for (const RunData& rd : runs)
                for (const AdpRecord& r : rd.adp.records())
                    if (r.step == step) {
                        target_vals.push_back(r.target_top1);
                        source_vals.push_back(r.source_top1);
                    }
            if (target_vals.empty()) continue;
            const double tmed = percentile(target_vals, 50), tlo = percentile(target_vals, 2.5),
                         thi = percentile(target_vals, 97.5);
            const double smed = percentile(source_vals, 50), slo = percentile(source_vals, 2.5),
                         shi = percentile(source_vals, 97.5);
            agg << label << ',' << step << ',' << target_vals.size() << ',' << csv_num(tmed)
                << ',' << csv_num(tlo) << ',' << csv_num(thi) << ',' << csv_num(smed) << ','
                << csv_num(slo) << ',' << csv_num(shi) << '\n';
            ts.x.push_back(static_cast<double>(step));
            ts.median.push_back(tmed);
            ts.lo.push_back(tlo);
            ts.hi.push_back(thi);
            ss.x.push_back(static_cast<double>(step));
            ss.median.push_back(smed);
            ss.lo.push_back(slo);
            ss.hi.push_back(shi);
        }
        target_series.push_back(std::move(ts));
        source_series.push_back(std::move(ss));
    }
    write_text_file((fs::path(out_dir) / "aggregate.csv").string(), agg.str());

    std::vector<RunFinal> finals;
    for (const std::string& label : label_order)
        for (const RunData& rd : by_label[label]) {
            if (rd.adp.records().empty()) continue;
            const AdpRecord& last = rd.adp.records().back();
            finals.push_back(
                {label, 1.0 - last.target_top1, 1.0 - last.target_top5, last.theta_dist});
        }
    std::ostringstream conv;
    write_convergence_csv(conv, convergence_report(finals));
    write_text_file((fs::path(out_dir) / "convergence.csv").string(), conv.str());

    ChartPanel target_panel{"Target task (anytime deployment accuracy)", "training step",
                            "top-1 accuracy", target_series, true, 0.0, 1.0};
    ChartPanel source_panel{"Source task (retention via detached head)", "training step",
                            "top-1 accuracy", source_series, true, 0.0, 1.0};
    write_text_file((fs::path(out_dir) / "adp_curves.svg").string(),
                    render_chart({target_panel, source_panel}));
}

}  // namespace ftlab
