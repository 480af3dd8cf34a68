#include "ftlab/verify.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <sstream>

#include "ftlab/adp.hpp"
#include "ftlab/data.hpp"
#include "ftlab/nn.hpp"
#include "ftlab/optim.hpp"
#include "ftlab/tensor.hpp"
#include "ftlab/transfer.hpp"

namespace ftlab::verify {

namespace {

struct Harness {
    std::vector<PropertyResult> results;

    void check(const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
        PropertyResult r;
        r.name = name;
        try {
            auto [pass, detail] = fn();
            r.pass = pass;
            r.detail = detail;
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        results.push_back(std::move(r));
    }
};

std::string num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.vec()) v = rng.normal(0.0, scale);
    return t;
}

Tensor random_one_hot(std::size_t m, std::size_t n, Rng& rng) {
    std::vector<int> labels(m);
    for (auto& l : labels) l = static_cast<int>(rng.below(n));
    return one_hot(labels, n);
}

/// Balanced one-hot labels: m must be a multiple of n.
Tensor balanced_one_hot(std::size_t m, std::size_t n) {
    std::vector<int> labels(m);
    for (std::size_t i = 0; i < m; ++i) labels[i] = static_cast<int>(i % n);
    return one_hot(labels, n);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double mx = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) mx = std::max(mx, std::abs(a[i] - b[i]));
    return mx;
}

// --------------------------------------------------------------------------
// tensor-math properties

std::pair<bool, std::string> softmax_norm_bound() {
    // For rows summing to 1, ||v||^2 >= 1/N; equality only near constant rows.
    const std::size_t rows = 100000;
    for (std::size_t n : {2ul, 5ul, 100ul}) {
        Rng rng(0xBEEF0 + n);
        const double floor_val = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
            Tensor z({1, n});
            const double scale = rng.uniform(0.1, 3.0);
            for (double& v : z.vec()) v = rng.normal(0.0, scale);
            const Tensor p = softmax_rows(z);
            double norm_sq = 0.0;
            for (double v : p.vec()) norm_sq += v * v;
            if (norm_sq < floor_val - 1e-12)
                return {false, "norm^2 " + num(norm_sq) + " below 1/N for N=" + num(double(n))};
            if (norm_sq <= floor_val + 1e-9) {
                double spread = 0.0;
                for (double v : z.vec()) spread = std::max(spread, std::abs(v - z[0]));
                if (spread > 1e-3)
                    return {false, "near-equality on a non-constant row, spread " + num(spread)};
            }
        }
        // Constant rows must reach the bound.
        const Tensor p = softmax_rows(Tensor::full({1, n}, 4.2));
        double norm_sq = 0.0;
        for (double v : p.vec()) norm_sq += v * v;
        if (std::abs(norm_sq - floor_val) > 1e-9)
            return {false, "constant row misses 1/N by " + num(norm_sq - floor_val)};
    }
    return {true, "3e5 rows, N in {2,5,100}"};
}

std::pair<bool, std::string> softmax_shift_invariance() {
    Rng rng(0xC0FFEE);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const Tensor z = random_tensor({4, 7}, rng, 2.0);
        const double c = rng.uniform(-30.0, 30.0);
        Tensor shifted = z;
        for (double& v : shifted.vec()) v += c;
        worst = std::max(worst, max_abs_diff(softmax_rows(z), softmax_rows(shifted)));
    }
    return {worst <= 1e-12, "max row deviation " + num(worst)};
}

std::pair<bool, std::string> softmax_taylor_regime() {
    Rng rng(0x7A71);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const double z = rng.uniform(-1e-4, 1e-4);
        worst = std::max(worst, std::abs(std::exp(z) - (z + 1.0)));
    }
    return {worst <= 1e-8, "max |e^z - (z+1)| = " + num(worst)};
}

std::pair<bool, std::string> softmax_temperature_limit() {
    Rng rng(0x7E49);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(20);
        Tensor z = random_tensor({1, n}, rng, 50.0);
        const Tensor p = softmax_rows(z, 1e8);
        for (double v : p.vec()) worst = std::max(worst, std::abs(v - 1.0 / double(n)));
    }
    return {worst <= 1e-6, "max deviation from uniform " + num(worst)};
}

std::pair<bool, std::string> loss_gradient_matches_fd() {
    Rng rng(0x10ad);
    const std::size_t m = 4, n = 6;
    Tensor z = random_tensor({m, n}, rng, 1.5);
    const Tensor y = random_one_hot(m, n, rng);
    const Tensor probs = softmax_rows(z);
    const Tensor delta = prediction_error(y, probs);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < z.numel(); ++i) {
        const double keep = z[i];
        z[i] = keep + h;
        const double up = nll_loss(softmax_rows(z), y);
        z[i] = keep - h;
        const double down = nll_loss(softmax_rows(z), y);
        z[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double analytic = -delta[i] / static_cast<double>(m);
        worst = std::max(worst, std::abs(fd - analytic));
    }
    return {worst <= 1e-6, "max |analytic - fd| = " + num(worst)};
}

// --------------------------------------------------------------------------
// nn-core properties

FeatureExtractor make_random_extractor(const std::string& preset, std::size_t channels,
                                       std::size_t image, std::uint64_t seed) {
    FeatureExtractor fe = build_extractor(arch_preset(preset, channels, image));
    init_extractor(fe, seed);
    return fe;
}

std::pair<bool, std::string> zero_init_uniform_predictions() {
    double worst_prob = 0.0, worst_entropy = 0.0;
    for (std::uint64_t seed : {11ull, 22ull, 33ull}) {
        Rng rng(seed);
        FeatureExtractor fe = make_random_extractor("tiny_mlp", 1, 8, seed);
        const std::size_t d = fe.output_dim({1, 8, 8});
        for (std::size_t n : {2ul, 5ul, 10ul}) {
            ClassifierHead head(n, d);
            head.init({InitMode::Zero, 0.0}, seed);
            const Tensor x = random_tensor({6, 1, 8, 8}, rng, 1.0);
            const Tensor probs = softmax_rows(head.forward(fe.forward(x, false)));
            for (std::size_t i = 0; i < probs.numel(); ++i)
                worst_prob = std::max(worst_prob, std::abs(probs[i] - 1.0 / double(n)));
            const Tensor h = entropy_rows(probs);
            double mean_h = 0.0;
            for (double v : h.vec()) mean_h += v;
            mean_h /= static_cast<double>(h.numel());
            worst_entropy = std::max(worst_entropy, std::abs(mean_h - std::log(double(n))));
        }
    }
    const bool pass = worst_prob <= 1e-6 && worst_entropy <= 1e-6;
    return {pass, "max |p-1/N| = " + num(worst_prob) + ", max |H-lnN| = " + num(worst_entropy)};
}

std::pair<bool, std::string> balanced_error_variance() {
    double worst = 0.0;
    for (std::size_t n : {2ul, 5ul, 10ul, 100ul}) {
        Rng rng(0x5eed + n);
        const std::size_t m = 2 * n;
        const Tensor y = balanced_one_hot(m, n);
        // Zero-init head over any features gives exactly uniform predictions.
        const Tensor probs = softmax_rows(Tensor::zeros({m, n}));
        const Tensor delta = prediction_error(y, probs);
        double acc = 0.0;
        for (double v : delta.vec()) acc += v * v;
        acc /= static_cast<double>(m);
        worst = std::max(worst, std::abs(acc - (1.0 - 1.0 / double(n))));
    }
    return {worst <= 1e-6, "max |var - (1-1/N)| = " + num(worst)};
}

struct GradcheckCase {
    std::string arch;
    std::vector<std::size_t> input;  // C,H,W
    std::size_t n_classes;
};

std::pair<bool, std::string> full_model_gradcheck() {
    const std::vector<GradcheckCase> cases = {
        {"conv2d 1 4 3 1 1\nbatchnorm 4\nrelu\nmaxpool 2\nflatten\ndense 64 8\nrelu\n",
         {1, 8, 8}, 3},
        {"flatten\ndense 36 12\nrelu\ndense 12 10\nrelu\n", {1, 6, 6}, 4},
        {"conv2d 2 3 3 1 0\nrelu\navgpool_global\n", {2, 7, 7}, 2},
    };
    double worst_rel = 0.0;
    std::size_t case_id = 0;
    for (const GradcheckCase& c : cases) {
        ++case_id;
        Rng rng(0xD00D + case_id);
        FeatureExtractor fe = build_extractor(c.arch);
        init_extractor(fe, 0x9A9A + case_id);
        const std::size_t d = fe.output_dim(c.input);
        ClassifierHead head(c.n_classes, d);
        head.init({InitMode::Normal, 0.0, 0.5}, 0x3B3B + case_id);

        const std::size_t m = 3;
        const Tensor x =
            random_tensor({m, c.input[0], c.input[1], c.input[2]}, rng, 1.0);
        const Tensor y = random_one_hot(m, c.n_classes, rng);

        auto loss_fn = [&]() {
            const Tensor features = fe.forward(x, true);
            const Tensor probs = softmax_rows(head.forward(features));
            return nll_loss(probs, y);
        };

        // Analytic gradients.
        fe.zero_grad();
        head.zero_grad();
        {
            const Tensor features = fe.forward(x, true);
            const Tensor probs = softmax_rows(head.forward(features));
            const Tensor delta = prediction_error(y, probs);
            const Tensor grad_features = head.backward(features, delta);
            fe.backward(grad_features);
        }

        std::vector<TensorRef> refs = fe.parameters();
        for (TensorRef ref : head.parameters()) refs.push_back(ref);

        const double h = 1e-5;
        double num_acc = 0.0, den_acc = 0.0;
        for (TensorRef ref : refs) {
            for (std::size_t i = 0; i < ref.value->numel(); ++i) {
                const double keep = (*ref.value)[i];
                (*ref.value)[i] = keep + h;
                const double up = loss_fn();
                (*ref.value)[i] = keep - h;
                const double down = loss_fn();
                (*ref.value)[i] = keep;
                const double fd = (up - down) / (2.0 * h);
                const double analytic = (*ref.grad)[i];
                const double rel =
                    std::abs(analytic - fd) / std::max(1e-3, std::abs(analytic) + std::abs(fd));
                worst_rel = std::max(worst_rel, rel);
                num_acc += (analytic - fd) * (analytic - fd);
                den_acc += fd * fd;
            }
        }
        const double vec_rel = std::sqrt(num_acc) / std::max(1e-12, std::sqrt(den_acc));
        worst_rel = std::max(worst_rel, vec_rel);
    }
    return {worst_rel < 1e-4, "worst relative error " + num(worst_rel)};
}

std::pair<bool, std::string> inference_is_referentially_transparent() {
    FeatureExtractor fe = make_random_extractor("desk_cnn", 1, 28, 0xAB);
    Rng rng(0xCD);
    const Tensor x = random_tensor({2, 1, 28, 28}, rng, 1.0);
    // Prime the running stats with one training pass, then compare state.
    fe.forward(x, true);
    ClassifierHead head(3, fe.output_dim({1, 28, 28}));
    head.init({InitMode::Normal, 0.0, 0.1}, 0xEF);
    std::ostringstream before;
    make_checkpoint(fe, head, nullptr, 0).save(before);
    const Tensor out1 = fe.forward(x, false);
    const Tensor out2 = fe.forward(x, false);
    std::ostringstream after;
    make_checkpoint(fe, head, nullptr, 0).save(after);
    const bool same_out = out1 == out2;
    const bool same_state = before.str() == after.str();
    return {same_out && same_state,
            same_out ? (same_state ? "outputs and state identical" : "state mutated")
                     : "outputs differ"};
}

// --------------------------------------------------------------------------
// optim properties

struct TinyModel {
    FeatureExtractor fe;
    ClassifierHead head;
    Tensor x;
    Tensor y;
};

TinyModel make_tiny_model(std::uint64_t seed, const HeadInit& init) {
    TinyModel tm;
    tm.fe = make_random_extractor("tiny_mlp", 1, 6, seed);
    const std::size_t d = tm.fe.output_dim({1, 6, 6});
    tm.head = ClassifierHead(4, d);
    tm.head.init(init, seed + 1);
    Rng rng(seed + 2);
    tm.x = random_tensor({8, 1, 6, 6}, rng, 1.0);
    tm.y = balanced_one_hot(8, 4);
    return tm;
}

double theta_step_norm(double alpha, double beta) {
    TinyModel tm = make_tiny_model(0xF00, {InitMode::Zero, 0.0});
    OptimizerConfig cfg;
    cfg.momentum = 0.0;  // plain SGD
    std::vector<ParamGroup> groups;
    groups.push_back({"head", alpha, tm.head.parameters()});
    groups.push_back({"extractor", beta, tm.fe.parameters()});
    Optimizer opt(cfg, std::move(groups));
    std::vector<double> theta_after_first;
    for (int step = 0; step < 2; ++step) {
        const Tensor features = tm.fe.forward(tm.x, true);
        const Tensor probs = softmax_rows(tm.head.forward(features));
        const Tensor delta = prediction_error(tm.y, probs);
        const Tensor grad_features = tm.head.backward(features, delta);
        tm.fe.backward(grad_features);
        if (step == 1) theta_after_first = tm.fe.theta();
        opt.step();
        opt.zero_grad();
    }
    return l2_distance(tm.fe.theta(), theta_after_first);
}

std::pair<bool, std::string> velocity_proportional_to_rate_product() {
    // At step 1 under zero init, W^(1) is linear in alpha, so halving alpha
    // and doubling beta must leave ||V_theta|| nearly unchanged.
    const double base = theta_step_norm(1e-3, 1e-3);
    const double swapped = theta_step_norm(5e-4, 2e-3);
    const double rel = std::abs(base - swapped) / std::max(base, 1e-300);
    return {rel < 0.05, "relative difference " + num(rel)};
}

std::pair<bool, std::string> zero_lr_freezes_exactly() {
    for (OptAlgo algo : {OptAlgo::SgdMomentum, OptAlgo::Nesterov, OptAlgo::Adam, OptAlgo::RAdam}) {
        TinyModel tm = make_tiny_model(0xF11, {InitMode::Normal, 0.0, 0.3});
        const std::vector<double> theta0 = tm.fe.theta();
        OptimizerConfig cfg;
        cfg.algo = algo;
        std::vector<ParamGroup> groups;
        groups.push_back({"head", 0.05, tm.head.parameters()});
        groups.push_back({"extractor", 0.0, tm.fe.parameters()});
        Optimizer opt(cfg, std::move(groups));
        for (int step = 0; step < 3; ++step) {
            const Tensor features = tm.fe.forward(tm.x, true);
            const Tensor probs = softmax_rows(tm.head.forward(features));
            const Tensor delta = prediction_error(tm.y, probs);
            tm.fe.backward(tm.head.backward(features, delta));
            opt.step();
            opt.zero_grad();
        }
        const std::vector<double> theta1 = tm.fe.theta();
        if (theta0 != theta1) return {false, "theta drifted under " + to_string(algo)};
    }
    return {true, "all four algorithms"};
}

std::pair<bool, std::string> optimizer_state_roundtrip() {
    TinyModel tm = make_tiny_model(0xF22, {InitMode::Normal, 0.0, 0.2});
    OptimizerConfig cfg;
    cfg.algo = OptAlgo::Adam;
    std::vector<ParamGroup> groups;
    groups.push_back({"head", 0.01, tm.head.parameters()});
    groups.push_back({"extractor", 0.001, tm.fe.parameters()});
    Optimizer opt(cfg, std::move(groups));
    for (int step = 0; step < 4; ++step) {
        const Tensor features = tm.fe.forward(tm.x, true);
        const Tensor probs = softmax_rows(tm.head.forward(features));
        tm.fe.backward(tm.head.backward(features, prediction_error(tm.y, probs)));
        opt.step();
        opt.zero_grad();
    }
    std::ostringstream first;
    opt.save(first);
    std::istringstream in(first.str());
    TinyModel tm2 = make_tiny_model(0xF22, {InitMode::Normal, 0.0, 0.2});
    std::vector<ParamGroup> groups2;
    groups2.push_back({"head", 0.01, tm2.head.parameters()});
    groups2.push_back({"extractor", 0.001, tm2.fe.parameters()});
    Optimizer opt2(cfg, std::move(groups2));
    opt2.load(in);
    std::ostringstream second;
    opt2.save(second);
    return {first.str() == second.str(), "serialized " + num(double(first.str().size())) + " bytes"};
}

std::pair<bool, std::string> two_groups_match_single_group() {
    TinyModel a = make_tiny_model(0xF33, {InitMode::KaimingFanIn}),
              b = make_tiny_model(0xF33, {InitMode::KaimingFanIn});
    OptimizerConfig cfg;  // sgd momentum 0.9
    const double lr = 0.02;
    std::vector<ParamGroup> two;
    two.push_back({"head", lr, a.head.parameters()});
    two.push_back({"extractor", lr, a.fe.parameters()});
    Optimizer opt_two(cfg, std::move(two));
    std::vector<ParamGroup> one;
    ParamGroup merged{"all", lr, b.head.parameters()};
    for (TensorRef ref : b.fe.parameters()) merged.params.push_back(ref);
    one.push_back(std::move(merged));
    Optimizer opt_one(cfg, std::move(one));

    for (int step = 0; step < 4; ++step) {
        for (TinyModel* tm : {&a, &b}) {
            const Tensor features = tm->fe.forward(tm->x, true);
            const Tensor probs = softmax_rows(tm->head.forward(features));
            tm->fe.backward(tm->head.backward(features, prediction_error(tm->y, probs)));
        }
        opt_two.step();
        opt_two.zero_grad();
        opt_one.step();
        opt_one.zero_grad();
    }
    const bool same = a.fe.theta() == b.fe.theta() && a.head.w() == b.head.w();
    return {same, same ? "bit-identical after 4 steps" : "parameter mismatch"};
}

// --------------------------------------------------------------------------
// transfer properties

struct DeskSetup {
    Checkpoint pretrained;
    TransferData data;
};

/// Small digit-transfer setup shared by the training-loop properties.
DeskSetup make_desk_setup() {
    static const DeskSetup setup = [] {
        DeskSetup s;
        const LabeledDataset source_train = synth_digits({0, 1, 2}, 60, 16, 101);
        const LabeledDataset source_test = synth_digits({0, 1, 2}, 20, 16, 102);
        const LabeledDataset target_full = synth_digits({3, 4, 5}, 60, 16, 103);
        const LabeledDataset target_test = synth_digits({3, 4, 5}, 20, 16, 104);

        FeatureExtractor fe = build_extractor(arch_preset("desk_cnn", 1, 16));
        init_extractor(fe, 7);
        ClassifierHead head(3, fe.output_dim({1, 16, 16}));
        head.init({InitMode::KaimingFanIn}, 8);
        OptimizerConfig ocfg;
        std::vector<ParamGroup> groups;
        groups.push_back({"head", 0.05, head.parameters()});
        groups.push_back({"extractor", 0.05, fe.parameters()});
        Optimizer opt(ocfg, std::move(groups));
        BatchSampler sampler(source_train, 15, SamplerMode::Balanced, 9);
        for (int step = 0; step < 60; ++step) {
            Batch batch = sampler.next();
            const Tensor features = fe.forward(batch.images, true);
            const Tensor probs = softmax_rows(head.forward(features));
            fe.backward(head.backward(features, prediction_error(batch.one_hot, probs)));
            opt.step();
            opt.zero_grad();
        }
        s.pretrained = make_checkpoint(fe, head, nullptr, 7);

        const Split split = stratified_split(target_full, 0.1, 55);
        s.data.train = split.train;
        s.data.val = split.holdout;
        s.data.test = target_test;
        s.data.source_test = source_test;
        return s;
    }();
    return setup;
}

FinetuneConfig desk_cfg(FinetuneMode mode, std::uint64_t seed) {
    FinetuneConfig cfg;
    cfg.mode = mode;
    cfg.alpha = 0.05;
    cfg.beta = 0.02;
    cfg.batch_size = 15;
    cfg.max_steps = 21;
    cfg.seed = seed;
    return cfg;
}

std::pair<bool, std::string> auto_warmup_stall() {
    DeskSetup setup = make_desk_setup();
    // epsilon = 0: the gradient reaching the extractor is exactly zero and
    // theta stays put through the first update.
    AdoptedModel model = adopt(setup.pretrained, 3, {InitMode::Zero, 0.0}, 42);
    BatchSampler sampler(setup.data.train, 15, SamplerMode::Balanced, 42);
    Batch batch = sampler.next();
    Tensor features = model.extractor.forward(batch.images, true);
    Tensor probs = softmax_rows(model.target_head.forward(features));
    Tensor grad_features =
        model.target_head.backward(features, prediction_error(batch.one_hot, probs));
    if (frobenius_norm(grad_features) != 0.0)
        return {false, "grad into extractor not exactly zero at epsilon=0"};
    model.extractor.backward(grad_features);
    OptimizerConfig ocfg;
    std::vector<ParamGroup> groups;
    groups.push_back({"head", 0.05, model.target_head.parameters()});
    groups.push_back({"extractor", 0.02, model.extractor.parameters()});
    Optimizer opt(ocfg, std::move(groups));
    opt.step();
    if (l2_distance(model.extractor.theta(), model.theta_source) != 0.0)
        return {false, "theta moved during the stalled first update"};

    // epsilon = 1e-8 keeps the gradient below 1e-6.
    AdoptedModel tiny = adopt(setup.pretrained, 3, {InitMode::Zero, 1e-8}, 43);
    features = tiny.extractor.forward(batch.images, true);
    probs = softmax_rows(tiny.target_head.forward(features));
    grad_features = tiny.target_head.backward(features, prediction_error(batch.one_hot, probs));
    const double norm = frobenius_norm(grad_features);
    return {norm <= 1e-6, "epsilon=1e-8 grad norm " + num(norm)};
}

std::pair<bool, std::string> first_update_matches_prototype_decomposition() {
    DeskSetup setup = make_desk_setup();
    AdoptedModel model = adopt(setup.pretrained, 3, {InitMode::Zero, 0.0}, 77);
    const double alpha = 0.3;
    FinetuneConfig cfg = desk_cfg(FinetuneMode::Fast, 77);
    cfg.alpha = alpha;
    cfg.beta = 0.0;
    cfg.optimizer.momentum = 0.0;  // vanilla SGD so W^(1) = (alpha/M) Delta^T A
    cfg.max_steps = 1;
    cfg.per_step_validation = false;

    // Reproduce the batch the loop will draw and the features it will see.
    AdoptedModel shadow = adopt(setup.pretrained, 3, {InitMode::Zero, 0.0}, 77);
    BatchSampler sampler(setup.data.train, cfg.batch_size, SamplerMode::Balanced,
                         Rng::derive(cfg.seed, 1));
    Batch batch = sampler.next();
    const Tensor features = shadow.extractor.forward(batch.images, true);

    TrainRun run = finetune(model, cfg, setup.data);
    const Tensor& w1 = model.target_head.w();

    const std::size_t m = features.rows(), n = 3, d = features.cols();
    Tensor expected({n, d});
    for (std::size_t c = 0; c < n; ++c)
        for (std::size_t j = 0; j < d; ++j) {
            double class_term = 0.0, mean_term = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                class_term += batch.one_hot.at(i, c) * features.at(i, j);
                mean_term += features.at(i, j);
            }
            expected.at(c, j) = alpha / double(m) * class_term -
                                alpha / (double(m) * double(n)) * mean_term;
        }
    const double diff = max_abs_diff(w1, expected);
    return {diff <= 1e-10, "max |W1 - decomposition| = " + num(diff)};
}

std::pair<bool, std::string> fast_w_norm_grows_monotonically() {
    DeskSetup setup = make_desk_setup();
    AdoptedModel model = adopt(setup.pretrained, 3, {InitMode::Zero, 0.0}, 5);
    FinetuneConfig cfg = desk_cfg(FinetuneMode::Fast, 5);
    cfg.per_step_validation = false;
    TrainRun run = finetune(model, cfg, setup.data);
    const std::size_t k = std::min<std::size_t>(10, run.steps.size());
    // Over the prefix where training loss decreases monotonically, ||W||_F
    // must not shrink.
    for (std::size_t i = 1; i < k; ++i) {
        if (run.steps[i].loss > run.steps[i - 1].loss) break;
        if (run.steps[i].w_fro + 1e-12 < run.steps[i - 1].w_fro)
            return {false, "||W||_F shrank at step " + num(double(i))};
    }
    return {true, "first " + num(double(k)) + " steps"};
}

std::pair<bool, std::string> warmup_transition_theta_identity() {
    DeskSetup setup = make_desk_setup();
    AdoptedModel model = adopt(setup.pretrained, 3, {InitMode::KaimingFanIn}, 6);
    FinetuneConfig cfg = desk_cfg(FinetuneMode::WarmupThenJoint, 6);
    cfg.max_steps = 34;
    cfg.warmup_patience = 5;
    TrainRun run = finetune(model, cfg, setup.data);
    if (run.transition_step == 0) return {false, "warmup never ended within the step budget"};
    for (const StepLogRow& row : run.steps) {
        const std::size_t updates_applied = row.step;  // rows log pre-update state
        if (updates_applied < run.transition_step && row.theta_dist != 0.0)
            return {false, "theta moved before the transition"};
        if (updates_applied >= run.transition_step && row.theta_dist == 0.0)
            return {false, "theta still pinned after the transition"};
    }
    return {true, "transition at update " + num(double(run.transition_step))};
}

std::pair<bool, std::string> train_run_determinism() {
    DeskSetup setup = make_desk_setup();
    std::string csvs[2];
    for (int rep = 0; rep < 2; ++rep) {
        AdoptedModel model = adopt(setup.pretrained, 3, {InitMode::Zero, 0.0}, 31);
        TrainRun run = finetune(model, desk_cfg(FinetuneMode::Fast, 31), setup.data);
        std::ostringstream os;
        write_steps_csv(os, run.steps);
        run.adp.write_csv(os);
        csvs[rep] = os.str();
    }
    return {csvs[0] == csvs[1], "two identical runs, " + num(double(csvs[0].size())) + " bytes"};
}

std::pair<bool, std::string> class_scaling_delta_exact() {
    for (std::size_t n : {2ul, 4ul, 10ul}) {
        const std::size_t m = n;
        const Tensor y = balanced_one_hot(m, n);
        const Tensor probs = softmax_rows(Tensor::zeros({m, n}));
        const Tensor delta = prediction_error(y, probs);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t c = 0; c < n; ++c) {
                const double expected =
                    y.at(i, c) == 1.0 ? 1.0 - 1.0 / double(n) : -1.0 / double(n);
                if (delta.at(i, c) != expected) return {false, "delta not exact at N=" + num(double(n))};
            }
    }
    return {true, "exact for N in {2,4,10}"};
}

// --------------------------------------------------------------------------
// eval-adp properties

std::pair<bool, std::string> fibonacci_checkpoint_values() {
    const std::vector<std::size_t> twenty_one = {1, 2, 3, 5, 8, 13, 21};
    if (fibonacci_checkpoints(21) != twenty_one) return {false, "max_steps=21 mismatch"};
    if (fibonacci_checkpoints(1) != std::vector<std::size_t>{1}) return {false, "max_steps=1 mismatch"};
    const std::vector<std::size_t> hundred = {1, 2, 3, 5, 8, 13, 21, 34, 55, 89};
    if (fibonacci_checkpoints(100) != hundred) return {false, "max_steps=100 mismatch"};
    return {true, "1, 21, 100 step budgets"};
}

std::pair<bool, std::string> validation_ramp_schedule() {
    const std::vector<std::size_t> expected = {1, 3, 6, 10, 15, 21, 28, 36, 45, 55, 65, 75, 85, 95};
    std::vector<std::size_t> got;
    for (std::size_t s = 1; s <= 100; ++s)
        if (validation_due(s)) got.push_back(s);
    if (got != expected) return {false, "ramp schedule mismatch"};
    if (validation_due(56)) return {false, "step 56 should not validate"};
    return {true, "steps 1..100"};
}

std::pair<bool, std::string> tracker_best_is_argmax_so_far() {
    ValidationTracker tracker;
    DeskSetup setup = make_desk_setup();
    AdoptedModel model = adopt(setup.pretrained, 3, {InitMode::Zero, 0.0}, 3);
    auto snap = [&]() {
        return make_checkpoint(model.extractor, model.target_head, &model.source_head, 3);
    };
    const double accs[] = {0.3, 0.5, 0.5, 0.2, 0.7, 0.7};
    double best = -1.0;
    std::size_t best_step = 0;
    for (std::size_t i = 0; i < 6; ++i) {
        tracker.offer(accs[i], i + 1, snap);
        if (accs[i] > best) {
            best = accs[i];
            best_step = i + 1;
        }
        if (tracker.best_val_acc() != best) return {false, "best_val_acc not argmax-so-far"};
        if (tracker.best_step() != best_step) return {false, "tie did not keep the earlier step"};
    }
    return {true, "ties keep the earlier snapshot"};
}

std::pair<bool, std::string> record_checkpoint_is_side_effect_free() {
    DeskSetup setup = make_desk_setup();
    AdoptedModel model = adopt(setup.pretrained, 3, {InitMode::Zero, 0.0}, 13);
    OptimizerConfig ocfg;
    std::vector<ParamGroup> groups;
    groups.push_back({"head", 0.05, model.target_head.parameters()});
    groups.push_back({"extractor", 0.02, model.extractor.parameters()});
    Optimizer opt(ocfg, std::move(groups));
    BatchSampler sampler(setup.data.train, 15, SamplerMode::Balanced, 13);
    for (int step = 0; step < 3; ++step) {
        Batch batch = sampler.next();
        const Tensor features = model.extractor.forward(batch.images, true);
        const Tensor probs = softmax_rows(model.target_head.forward(features));
        model.extractor.backward(
            model.target_head.backward(features, prediction_error(batch.one_hot, probs)));
        opt.step();
        opt.zero_grad();
    }
    ValidationTracker tracker;
    tracker.offer(0.5, 3, [&]() {
        return make_checkpoint(model.extractor, model.target_head, &model.source_head, 13);
    });
    std::ostringstream before_model, before_opt;
    make_checkpoint(model.extractor, model.target_head, &model.source_head, 13).save(before_model);
    opt.save(before_opt);
    CheckpointEvaluator evaluator(setup.data.test, setup.data.source_test, model.theta_source);
    const AdpRecord r1 = evaluator.record(tracker, 5);
    const AdpRecord r2 = evaluator.record(tracker, 8);
    std::ostringstream after_model, after_opt;
    make_checkpoint(model.extractor, model.target_head, &model.source_head, 13).save(after_model);
    opt.save(after_opt);
    if (before_model.str() != after_model.str()) return {false, "model state mutated"};
    if (before_opt.str() != after_opt.str()) return {false, "optimizer state mutated"};
    if (r1.target_top1 != r2.target_top1 || r1.best_val_step != r2.best_val_step)
        return {false, "repeat checkpoint changed metrics without a new validation"};
    return {true, "state bytes identical; repeated metrics identical"};
}

std::pair<bool, std::string> top5_at_least_top1() {
    DeskSetup setup = make_desk_setup();
    AdoptedModel model = adopt(setup.pretrained, 3, {InitMode::Zero, 0.0}, 19);
    TrainRun run = finetune(model, desk_cfg(FinetuneMode::Fast, 19), setup.data);
    for (const AdpRecord& r : run.adp.records())
        if (r.target_top5 < r.target_top1) return {false, "top5 below top1"};
    return {true, num(double(run.adp.records().size())) + " records"};
}

// --------------------------------------------------------------------------
// data-io properties

std::pair<bool, std::string> split_is_a_partition() {
    const LabeledDataset ds = synth_digits({0, 1, 2, 3, 4}, 40, 16, 90);
    const Split split = stratified_split(ds, 0.05, 17);
    if (split.train.size() + split.holdout.size() != ds.size())
        return {false, "sizes do not add up"};
    // Indices are preserved through image bytes: count multiset membership.
    std::vector<std::size_t> holdout_per_class(ds.n_classes, 0);
    for (int label : split.holdout.labels) ++holdout_per_class[std::size_t(label)];
    for (std::size_t c = 0; c < ds.n_classes; ++c)
        if (holdout_per_class[c] != 2)  // round(0.05 * 40)
            return {false, "per-class holdout is " + num(double(holdout_per_class[c]))};
    return {true, "40 per class, 5% -> 2 held out per class"};
}

std::pair<bool, std::string> balanced_batches_cover_epoch_once() {
    const LabeledDataset ds = synth_digits({0, 1, 2, 3, 4}, 20, 16, 91);
    BatchSampler sampler(ds, 10, SamplerMode::Balanced, 4);
    const std::size_t batches = sampler.batches_per_epoch();
    std::vector<int> histogram(ds.n_classes, 0);
    std::vector<double> signatures;
    for (std::size_t b = 0; b < batches; ++b) {
        Batch batch = sampler.next();
        std::vector<int> counts(ds.n_classes, 0);
        for (int label : batch.labels) ++counts[std::size_t(label)];
        for (std::size_t c = 0; c < ds.n_classes; ++c)
            if (counts[c] != 2) return {false, "batch class histogram uneven"};
        for (std::size_t i = 0; i < batch.images.extent(0); ++i) {
            double sig = 0.0;
            const double* img = batch.images.data() + i * 16 * 16;
            for (std::size_t p = 0; p < 16 * 16; ++p) sig += img[p] * double(p + 1);
            signatures.push_back(sig);
        }
    }
    std::sort(signatures.begin(), signatures.end());
    for (std::size_t i = 1; i < signatures.size(); ++i)
        if (signatures[i] == signatures[i - 1])
            return {false, "an example repeated within one epoch"};
    return {true, num(double(batches)) + " balanced batches"};
}

std::pair<bool, std::string> loaders_are_deterministic() {
    const LabeledDataset a = synth_digits({5, 6, 7}, 12, 20, 44);
    const LabeledDataset b = synth_digits({5, 6, 7}, 12, 20, 44);
    if (!(a.images == b.images) || a.labels != b.labels) return {false, "digit corpus differs"};
    const LabeledDataset c = synth_blobs(4, 9, 14, 45);
    const LabeledDataset d = synth_blobs(4, 9, 14, 45);
    if (!(c.images == d.images) || c.labels != d.labels) return {false, "blob corpus differs"};
    return {true, "digits and blobs reproduce"};
}

std::pair<bool, std::string> hflip_is_an_involution() {
    Rng rng(0x41);
    Tensor images({5, 1, 9, 9});
    for (double& v : images.vec()) v = rng.uniform();
    const Tensor once = hflip_augment(images, 0.5, 97);
    const Tensor twice = hflip_augment(once, 0.5, 97);
    return {twice == images, "same mask applied twice restores the input"};
}

std::pair<bool, std::string> blobs_admit_a_linear_probe() {
    const LabeledDataset ds = synth_blobs(4, 30, 14, 46);
    const std::size_t d = 14 * 14;
    ClassifierHead probe(4, d);
    probe.init({InitMode::Zero, 0.0}, 1);
    const Tensor flat = ds.images.reshaped({ds.size(), d});
    const Tensor y = one_hot(ds.labels, 4);
    OptimizerConfig cfg;
    cfg.momentum = 0.0;
    std::vector<ParamGroup> groups;
    groups.push_back({"head", 0.5, probe.parameters()});
    Optimizer opt(cfg, std::move(groups));
    for (int step = 0; step < 300; ++step) {
        const Tensor probs = softmax_rows(probe.forward(flat));
        probe.backward(flat, prediction_error(y, probs));
        opt.step();
        opt.zero_grad();
    }
    const double acc = topk_accuracy(probe.forward(flat), ds.labels, 1);
    return {acc >= 0.99, "train accuracy " + num(acc)};
}

std::pair<bool, std::string> checkpoint_resave_is_byte_identical() {
    DeskSetup setup = make_desk_setup();
    std::ostringstream first;
    setup.pretrained.save(first);
    std::istringstream in(first.str());
    const Checkpoint loaded = Checkpoint::load(in);
    std::ostringstream second;
    loaded.save(second);
    return {first.str() == second.str(),
            num(double(first.str().size())) + " bytes round-tripped"};
}

}  // namespace

std::vector<PropertyResult> run_all() {
    Harness h;
    h.check("tensor.softmax_norm_bound", softmax_norm_bound);
    h.check("tensor.softmax_shift_invariance", softmax_shift_invariance);
    h.check("tensor.taylor_regime", softmax_taylor_regime);
    h.check("tensor.softmax_temperature_limit", softmax_temperature_limit);
    h.check("tensor.loss_gradient_fd", loss_gradient_matches_fd);
    h.check("nn.zero_init_uniform_predictions", zero_init_uniform_predictions);
    h.check("nn.balanced_error_variance", balanced_error_variance);
    h.check("nn.full_model_gradcheck", full_model_gradcheck);
    h.check("nn.inference_referential_transparency", inference_is_referentially_transparent);
    h.check("optim.velocity_rate_product", velocity_proportional_to_rate_product);
    h.check("optim.zero_lr_freeze", zero_lr_freezes_exactly);
    h.check("optim.state_roundtrip", optimizer_state_roundtrip);
    h.check("optim.two_groups_equal_single", two_groups_match_single_group);
    h.check("transfer.auto_warmup_stall", auto_warmup_stall);
    h.check("transfer.first_update_prototype", first_update_matches_prototype_decomposition);
    h.check("transfer.class_scaling_delta", class_scaling_delta_exact);
    h.check("transfer.fast_w_norm_monotone", fast_w_norm_grows_monotonically);
    h.check("transfer.warmup_transition_theta", warmup_transition_theta_identity);
    h.check("transfer.run_determinism", train_run_determinism);
    h.check("adp.fibonacci_checkpoints", fibonacci_checkpoint_values);
    h.check("adp.validation_ramp", validation_ramp_schedule);
    h.check("adp.tracker_argmax", tracker_best_is_argmax_so_far);
    h.check("adp.record_side_effect_free", record_checkpoint_is_side_effect_free);
    h.check("adp.top5_ge_top1", top5_at_least_top1);
    h.check("data.split_partition", split_is_a_partition);
    h.check("data.balanced_epoch_coverage", balanced_batches_cover_epoch_once);
    h.check("data.loader_determinism", loaders_are_deterministic);
    h.check("data.hflip_involution", hflip_is_an_involution);
    h.check("data.blob_linear_probe", blobs_admit_a_linear_probe);
    h.check("nn.checkpoint_resave_identical", checkpoint_resave_is_byte_identical);
    return h.results;
}

}  // namespace ftlab::verify
