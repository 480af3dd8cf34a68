#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ftlab/nn.hpp"
#include "ftlab/rng.hpp"

using namespace ftlab;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.vec()) v = rng.normal(0.0, scale);
    return t;
}

}  // namespace

TEST_CASE("flatten preserves row-major values") {
    FlattenLayer flatten;
    Tensor x({2, 1, 3, 3});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>(i);
    const Tensor y = flatten.forward(x, true);
    REQUIRE(y.shape() == std::vector<std::size_t>{2, 9});
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == static_cast<double>(i));
    const Tensor back = flatten.backward(y);
    CHECK(back == x);
}

TEST_CASE("relu clamps negatives") {
    ReluLayer relu;
    const Tensor y = relu.forward(Tensor{{-1.0, 2.0}}, true);
    CHECK(y.at(0, 0) == 0.0);
    CHECK(y.at(0, 1) == 2.0);
    const Tensor g = relu.backward(Tensor{{5.0, 7.0}});
    CHECK(g.at(0, 0) == 0.0);
    CHECK(g.at(0, 1) == 7.0);
}

TEST_CASE("dense identity maps zero to zero") {
    DenseLayer dense(2, 2);
    dense.weight = {{1.0, 0.0}, {0.0, 1.0}};
    const Tensor y = dense.forward(Tensor::zeros({3, 2}), false);
    CHECK(frobenius_norm(y) == 0.0);
}

TEST_CASE("dense backward is the scalar chain rule per example") {
    DenseLayer dense(1, 1);
    dense.weight = {{2.0}};
    const Tensor x = {{3.0}, {5.0}};
    dense.forward(x, true);
    // Upstream already carries the 1/M batch mean, as the loss gradient does.
    const double m = 2.0;
    const Tensor upstream = {{4.0 / m}, {6.0 / m}};
    const Tensor gx = dense.backward(upstream);
    CHECK(dense.grad_weight.at(0, 0) == doctest::Approx((4.0 * 3.0 + 6.0 * 5.0) / m));
    CHECK(gx.at(0, 0) == doctest::Approx(2.0 * 4.0 / m));
}

TEST_CASE("backward without training forward is an error") {
    DenseLayer dense(2, 2);
    CHECK_THROWS(dense.backward(Tensor::zeros({1, 2})));
    dense.forward(Tensor::zeros({1, 2}), false);  // inference does not arm it
    CHECK_THROWS(dense.backward(Tensor::zeros({1, 2})));
}

TEST_CASE("zero upstream gradient zeroes all parameter grads") {
    FeatureExtractor fe = build_extractor(arch_preset("desk_cnn", 1, 28));
    init_extractor(fe, 5);
    Rng rng(6);
    const Tensor x = random_tensor({2, 1, 28, 28}, rng);
    const Tensor features = fe.forward(x, true);
    fe.backward(Tensor::zeros(features.shape()));
    for (TensorRef ref : fe.parameters()) CHECK(frobenius_norm(*ref.grad) == 0.0);
}

TEST_CASE("maxpool picks window maxima and routes gradients to them") {
    MaxPoolLayer pool(2);
    Tensor x({1, 1, 2, 2});
    x.vec() = {1.0, 4.0, 2.0, 3.0};
    const Tensor y = pool.forward(x, true);
    CHECK(y.numel() == 1);
    CHECK(y[0] == 4.0);
    const Tensor g = pool.backward(Tensor::full({1, 1, 1, 1}, 9.0));
    CHECK(g.vec() == std::vector<double>{0.0, 9.0, 0.0, 0.0});
}

TEST_CASE("batchnorm normalizes training batches and freezes in inference") {
    BatchNormLayer bn(1);
    Tensor x({4, 1, 1, 1});
    x.vec() = {1.0, 2.0, 3.0, 4.0};
    const Tensor y = bn.forward(x, true);
    double mean = 0.0;
    for (double v : y.vec()) mean += v;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(bn.running_var[0] > 0.0);
    // Inference twice: identical outputs, no state change.
    const Tensor a = bn.forward(x, false);
    const Tensor b = bn.forward(x, false);
    CHECK(a == b);
}

TEST_CASE("head forward is A W^T") {
    ClassifierHead head(2, 2);
    head.w() = {{3.0, 4.0}, {5.0, 6.0}};
    const Tensor z = head.forward(Tensor{{1.0, 2.0}});
    CHECK(z.at(0, 0) == doctest::Approx(11.0));
    CHECK(z.at(0, 1) == doctest::Approx(17.0));

    ClassifierHead eye(2, 2);
    eye.w() = {{1.0, 0.0}, {0.0, 1.0}};
    const Tensor zk = eye.forward(Tensor{{0.0, 1.0}});
    CHECK(zk.at(0, 0) == 0.0);
    CHECK(zk.at(0, 1) == 1.0);
}

TEST_CASE("zero head gives uniform predictions") {
    ClassifierHead head(5, 8);
    head.init({InitMode::Zero, 0.0}, 1);
    Rng rng(2);
    const Tensor features = random_tensor({3, 8}, rng, 2.0);
    const Tensor probs = softmax_rows(head.forward(features));
    for (double v : probs.vec()) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("head backward formulas and the stall at W=0") {
    Rng rng(3);
    const Tensor features = random_tensor({4, 6}, rng);
    const Tensor delta = random_tensor({4, 3}, rng);
    const Tensor w = Tensor::zeros({3, 6});
    const HeadGrads grads = head_gradients(w, features, delta);
    CHECK(frobenius_norm(grads.grad_a) == 0.0);  // -(1/M) Delta W with W = 0
    CHECK(frobenius_norm(grads.grad_w) > 0.0);

    const HeadGrads none = head_gradients(w, features, Tensor::zeros({4, 3}));
    CHECK(frobenius_norm(none.grad_w) == 0.0);
    CHECK(frobenius_norm(none.grad_a) == 0.0);
}

TEST_CASE("worked two-example update matches the prototype decomposition") {
    // M=2, N=D=2, A=I, Y=I, W=0, alpha=1, plain SGD.
    const Tensor features = {{1.0, 0.0}, {0.0, 1.0}};
    const Tensor y = {{1.0, 0.0}, {0.0, 1.0}};
    ClassifierHead head(2, 2);
    head.init({InitMode::Zero, 0.0}, 0);
    const Tensor probs = softmax_rows(head.forward(features));
    const Tensor delta = prediction_error(y, probs);
    head.backward(features, delta);
    // W1 = W0 - alpha * grad_W = (alpha/M) Delta^T A.
    for (std::size_t i = 0; i < 4; ++i) head.w()[i] -= 1.0 * head.grad_w()[i];
    CHECK(head.w().at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(head.w().at(0, 1) == doctest::Approx(-0.25).epsilon(1e-12));
    CHECK(head.w().at(1, 0) == doctest::Approx(-0.25).epsilon(1e-12));
    CHECK(head.w().at(1, 1) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("init modes hit their stated statistics") {
    SUBCASE("zero init gives zero norm") {
        ClassifierHead head(4, 16);
        head.init({InitMode::Zero, 0.0}, 9);
        CHECK(frobenius_norm(head.w()) == 0.0);
    }
    SUBCASE("zero init with epsilon bounds the norm") {
        ClassifierHead head(4, 16);
        head.init({InitMode::Zero, 1e-3}, 9);
        CHECK(frobenius_norm(head.w()) <= 1e-3 * std::sqrt(4.0 * 16.0) + 1e-15);
    }
    SUBCASE("kaiming fan-in sample variance is near 2/D") {
        const std::size_t d = 512, n = 20;
        ClassifierHead head(n, d);
        head.init({InitMode::KaimingFanIn}, 10);
        double mean = 0.0;
        for (double v : head.w().vec()) mean += v;
        mean /= static_cast<double>(n * d);
        double var = 0.0;
        for (double v : head.w().vec()) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n * d - 1);
        const double expected = 2.0 / 512.0;
        CHECK(std::abs(var - expected) < 0.1 * expected);
    }
    SUBCASE("kaiming fan-out variance is near 2/N") {
        const std::size_t d = 64, n = 200;
        ClassifierHead head(n, d);
        head.init({InitMode::KaimingFanOut}, 11);
        double var = 0.0;
        for (double v : head.w().vec()) var += v * v;
        var /= static_cast<double>(n * d - 1);
        const double expected = 2.0 / 200.0;
        CHECK(std::abs(var - expected) < 0.1 * expected);
    }
    SUBCASE("xavier uniform variance is 1/(6D)") {
        const std::size_t d = 128, n = 100;
        ClassifierHead head(n, d);
        head.init({InitMode::XavierUniform}, 12);
        double var = 0.0;
        double bound = 0.0;
        for (double v : head.w().vec()) {
            var += v * v;
            bound = std::max(bound, std::abs(v));
        }
        var /= static_cast<double>(n * d - 1);
        const double expected = 1.0 / (6.0 * 128.0);
        CHECK(std::abs(var - expected) < 0.1 * expected);
        CHECK(bound <= std::sqrt(1.0 / (2.0 * 128.0)));
    }
    SUBCASE("near-zero normal init stays uniform after softmax") {
        ClassifierHead head(10, 64);
        head.init({InitMode::Normal, 0.0, 1e-8}, 13);
        Rng rng(14);
        const Tensor features = random_tensor({5, 64}, rng, 1.0);
        const Tensor probs = softmax_rows(head.forward(features));
        for (double v : probs.vec()) CHECK(std::abs(v - 0.1) < 1e-6);
    }
    SUBCASE("same seed reproduces bit-identically") {
        ClassifierHead a(6, 32), b(6, 32);
        a.init({InitMode::Normal, 0.0, 0.3}, 77);
        b.init({InitMode::Normal, 0.0, 0.3}, 77);
        CHECK(a.w() == b.w());
    }
}

TEST_CASE("checkpoint save/load/save is byte-identical and restores the model") {
    FeatureExtractor fe = build_extractor(arch_preset("desk_cnn", 1, 28));
    init_extractor(fe, 21);
    Rng rng(22);
    fe.forward(random_tensor({3, 1, 28, 28}, rng), true);  // move the BN stats
    ClassifierHead head(5, fe.output_dim({1, 28, 28}));
    head.init({InitMode::KaimingFanIn}, 23);
    ClassifierHead source(7, head.dim());
    source.init({InitMode::Normal, 0.0, 0.2}, 24);

    const Checkpoint ckpt = make_checkpoint(fe, head, &source, 42);
    std::ostringstream first;
    ckpt.save(first);
    std::istringstream in(first.str());
    const Checkpoint loaded = Checkpoint::load(in);
    std::ostringstream second;
    loaded.save(second);
    CHECK(first.str() == second.str());

    RestoredModel model = restore_model(loaded);
    CHECK(model.seed == 42);
    CHECK(model.head.w() == head.w());
    REQUIRE(model.source_head.has_value());
    CHECK(model.source_head->w() == source.w());
    const Tensor x = random_tensor({2, 1, 28, 28}, rng);
    CHECK(model.extractor.forward(x, false) == fe.forward(x, false));
}

TEST_CASE("checkpoint rejects corrupt input") {
    std::istringstream bad_magic("NOTACKPT");
    CHECK_THROWS(Checkpoint::load(bad_magic));
    FeatureExtractor fe = build_extractor("flatten\ndense 4 2\n");
    ClassifierHead head(2, 2);
    const Checkpoint ckpt = make_checkpoint(fe, head, nullptr, 0);
    std::ostringstream os;
    ckpt.save(os);
    const std::string bytes = os.str();
    std::istringstream truncated(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS(Checkpoint::load(truncated));
}

TEST_CASE("topk accuracy breaks ties by index") {
    const Tensor uniform = Tensor::full({4, 5}, 0.2);
    // Uniform scores rank label 0 first; only rows labeled 0 count as top-1.
    CHECK(topk_accuracy(uniform, {0, 1, 2, 3}, 1) == doctest::Approx(0.25));
    CHECK(topk_accuracy(uniform, {0, 1, 2, 3}, 5) == doctest::Approx(1.0));
    const Tensor scores = {{0.1, 0.9}, {0.9, 0.1}};
    CHECK(topk_accuracy(scores, {1, 0}, 1) == doctest::Approx(1.0));
    CHECK_THROWS(topk_accuracy(scores, {1}, 1));
}

TEST_CASE("extractor descriptor round-trips through build_extractor") {
    FeatureExtractor fe = build_extractor(arch_preset("desk_cnn", 1, 28));
    const std::string descriptor = fe.descriptor();
    FeatureExtractor rebuilt = build_extractor(descriptor);
    CHECK(rebuilt.descriptor() == descriptor);
    CHECK(rebuilt.theta_size() == fe.theta_size());
    CHECK_THROWS(build_extractor("warp_drive 4\n"));
    CHECK_THROWS(build_extractor(""));
}

TEST_CASE("theta round-trips through set_theta") {
    FeatureExtractor fe = build_extractor("flatten\ndense 9 4\nrelu\ndense 4 3\n");
    init_extractor(fe, 31);
    std::vector<double> theta = fe.theta();
    for (double& v : theta) v *= 2.0;
    fe.set_theta(theta);
    CHECK(fe.theta() == theta);
    theta.push_back(1.0);
    CHECK_THROWS(fe.set_theta(theta));
}
