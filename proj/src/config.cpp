#include "ftlab/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ftlab {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

/// Fail-fast on keys the schema does not know about.
void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key)) fail("config: unknown key '" + where + "." + key + "'");
}

template <typename T>
void get_to(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) obj.at(key).get_to(out);
}

DatasetSpec parse_dataset(const json& obj, const std::string& where) {
    check_keys(obj, where,
               {"kind", "digit_classes", "n_classes", "train_per_class", "test_per_class",
                "image_size", "blob_separation", "seed", "train_images", "train_labels",
                "test_images", "test_labels"});
    DatasetSpec spec;
    get_to(obj, "kind", spec.kind);
    get_to(obj, "digit_classes", spec.digit_classes);
    get_to(obj, "n_classes", spec.n_classes);
    get_to(obj, "train_per_class", spec.train_per_class);
    get_to(obj, "test_per_class", spec.test_per_class);
    get_to(obj, "image_size", spec.image_size);
    get_to(obj, "blob_separation", spec.blob_separation);
    get_to(obj, "seed", spec.seed);
    get_to(obj, "train_images", spec.train_images);
    get_to(obj, "train_labels", spec.train_labels);
    get_to(obj, "test_images", spec.test_images);
    get_to(obj, "test_labels", spec.test_labels);
    if (spec.kind != "digits" && spec.kind != "blobs" && spec.kind != "idx")
        fail("config: " + where + ".kind must be digits, blobs or idx");
    if (spec.kind == "digits" && spec.digit_classes.empty())
        fail("config: " + where + " needs digit_classes");
    return spec;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        // nlohmann reports "parse error at line L, column C: ..."
        fail(std::string("config: ") + e.what());
    }
    check_keys(root, "<root>", {"data", "pretrain", "adopt", "finetune", "eval", "output"});

    ExperimentConfig cfg;
    cfg.raw_text = text;

    if (root.contains("data")) {
        const json& data = root.at("data");
        check_keys(data, "data", {"source", "target", "hflip"});
        if (data.contains("source")) cfg.data.source = parse_dataset(data.at("source"), "data.source");
        if (data.contains("target")) cfg.data.target = parse_dataset(data.at("target"), "data.target");
        get_to(data, "hflip", cfg.data.hflip);
    }
    if (root.contains("pretrain")) {
        const json& pre = root.at("pretrain");
        check_keys(pre, "pretrain",
                   {"arch", "epochs", "lr", "momentum", "batch_size", "seed", "checkpoint"});
        get_to(pre, "arch", cfg.pretrain.arch);
        get_to(pre, "epochs", cfg.pretrain.epochs);
        get_to(pre, "lr", cfg.pretrain.lr);
        get_to(pre, "momentum", cfg.pretrain.momentum);
        get_to(pre, "batch_size", cfg.pretrain.batch_size);
        get_to(pre, "seed", cfg.pretrain.seed);
        get_to(pre, "checkpoint", cfg.pretrain.checkpoint);
    }
    if (root.contains("adopt")) {
        const json& adopt = root.at("adopt");
        check_keys(adopt, "adopt", {"init_mode", "epsilon", "sigma"});
        get_to(adopt, "init_mode", cfg.adopt.init_mode);
        get_to(adopt, "epsilon", cfg.adopt.epsilon);
        get_to(adopt, "sigma", cfg.adopt.sigma);
        init_mode_from_string(cfg.adopt.init_mode);  // validates
    }
    if (root.contains("finetune")) {
        const json& ft = root.at("finetune");
        check_keys(ft, "finetune",
                   {"mode", "alpha", "beta", "optimizer", "momentum", "accumulating_momentum",
                    "batch_size", "max_steps", "seeds", "warmup_improve_pp", "warmup_patience",
                    "update_bn_in_warmup", "per_step_validation", "label"});
        get_to(ft, "mode", cfg.finetune.mode);
        get_to(ft, "alpha", cfg.finetune.alpha);
        get_to(ft, "beta", cfg.finetune.beta);
        get_to(ft, "optimizer", cfg.finetune.optimizer);
        get_to(ft, "momentum", cfg.finetune.momentum);
        get_to(ft, "accumulating_momentum", cfg.finetune.accumulating_momentum);
        get_to(ft, "batch_size", cfg.finetune.batch_size);
        get_to(ft, "max_steps", cfg.finetune.max_steps);
        get_to(ft, "seeds", cfg.finetune.seeds);
        get_to(ft, "warmup_improve_pp", cfg.finetune.warmup_improve_pp);
        get_to(ft, "warmup_patience", cfg.finetune.warmup_patience);
        get_to(ft, "update_bn_in_warmup", cfg.finetune.update_bn_in_warmup);
        get_to(ft, "per_step_validation", cfg.finetune.per_step_validation);
        get_to(ft, "label", cfg.finetune.label);
        finetune_mode_from_string(cfg.finetune.mode);  // validates
        opt_algo_from_string(cfg.finetune.optimizer);
        if (cfg.finetune.seeds.empty()) fail("config: finetune.seeds must not be empty");
    }
    if (root.contains("eval")) {
        const json& ev = root.at("eval");
        check_keys(ev, "eval", {"checkpoints", "include_final", "val_saturation", "val_fraction"});
        get_to(ev, "checkpoints", cfg.eval.checkpoints);
        get_to(ev, "include_final", cfg.eval.include_final);
        get_to(ev, "val_saturation", cfg.eval.val_saturation);
        get_to(ev, "val_fraction", cfg.eval.val_fraction);
        if (cfg.eval.checkpoints != "fibonacci")
            fail("config: eval.checkpoints only supports 'fibonacci'");
    }
    if (root.contains("output")) {
        const json& out = root.at("output");
        check_keys(out, "output", {"dir"});
        get_to(out, "dir", cfg.output.dir);
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse(buf.str());
}

HeadInit ExperimentConfig::head_init() const {
    HeadInit init;
    init.mode = init_mode_from_string(adopt.init_mode);
    init.epsilon = adopt.epsilon;
    init.sigma = adopt.sigma;
    return init;
}

FinetuneConfig ExperimentConfig::finetune_config(std::uint64_t seed) const {
    FinetuneConfig fc;
    fc.mode = finetune_mode_from_string(finetune.mode);
    fc.alpha = finetune.alpha;
    fc.beta = finetune.beta;
    fc.init = head_init();
    fc.optimizer.algo = opt_algo_from_string(finetune.optimizer);
    fc.optimizer.momentum = finetune.momentum;
    fc.optimizer.accumulating_momentum = finetune.accumulating_momentum;
    fc.batch_size = finetune.batch_size;
    fc.max_steps = finetune.max_steps;
    fc.seed = seed;
    fc.warmup_improve_pp = finetune.warmup_improve_pp;
    fc.warmup_patience = finetune.warmup_patience;
    fc.update_bn_in_warmup = finetune.update_bn_in_warmup;
    fc.hflip_prob = data.hflip ? 0.5 : 0.0;
    fc.val_saturation = eval.val_saturation;
    fc.include_final_checkpoint = eval.include_final;
    fc.per_step_validation = finetune.per_step_validation;
    fc.label = method_label();
    return fc;
}

std::string ExperimentConfig::method_label() const {
    if (!finetune.label.empty()) return finetune.label;
    std::ostringstream os;
    os << finetune.mode << "(" << adopt.init_mode;
    if (adopt.init_mode == "normal") os << " s=" << adopt.sigma;
    os << ",a=" << finetune.alpha << ",b=" << finetune.beta << "," << finetune.optimizer << ")";
    return os.str();
}

}  // namespace ftlab
