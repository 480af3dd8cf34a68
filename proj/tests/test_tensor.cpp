#include <doctest.h>

#include <cmath>

#include "ftlab/rng.hpp"
#include "ftlab/tensor.hpp"

using namespace ftlab;

TEST_CASE("matmul identity and zero cases") {
    const Tensor identity = {{1.0, 0.0}, {0.0, 1.0}};
    const Tensor a = {{1.0, 2.0}, {3.0, 4.0}};
    CHECK(matmul(identity, a) == a);
    const Tensor z = Tensor::zeros({2, 3});
    CHECK(matmul(identity, z) == z);
}

TEST_CASE("matmul hand-expanded dot products") {
    const Tensor a = {{1.0, 2.0}, {3.0, 4.0}};
    const Tensor b = {{5.0}, {6.0}};
    const Tensor out = matmul(a, b);
    CHECK(out.at(0, 0) == doctest::Approx(17.0));
    CHECK(out.at(1, 0) == doctest::Approx(39.0));
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({2, 3});
    CHECK_THROWS(matmul(a, b));
}

TEST_CASE("matmul rejects non-finite results") {
    Tensor a = Tensor::full({1, 1}, 1e308);
    Tensor b = Tensor::full({1, 1}, 1e308);
    CHECK_THROWS(matmul(a, b));
}

TEST_CASE("softmax of a constant row is uniform") {
    const Tensor z = Tensor::zeros({1, 3});
    const Tensor p = softmax_rows(z);
    for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax of [ln 2, 0] is [2/3, 1/3]") {
    const Tensor z = {{std::log(2.0), 0.0}};
    const Tensor p = softmax_rows(z);
    CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("rows sum to one within 1e-12 under extreme logits") {
    const Tensor z = {{700.0, -700.0, 3.0, 1e-9}};
    const Tensor p = softmax_rows(z);
    double sum = 0.0;
    for (double v : p.vec()) {
        CHECK(v >= 0.0);
        sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
}

TEST_CASE("huge temperature flattens any finite row") {
    const Tensor z = {{-50.0, 12.0, 3.0, 99.0, 0.5}};
    const Tensor p = softmax_rows(z, 1e8);
    for (double v : p.vec()) CHECK(std::abs(v - 0.2) < 1e-6);
}

TEST_CASE("temperature must be positive") {
    const Tensor z = Tensor::zeros({1, 2});
    CHECK_THROWS(softmax_rows(z, 0.0));
    CHECK_THROWS(softmax_rows(z, -1.0));
}

TEST_CASE("softmax rejects non-finite input") {
    Tensor z = Tensor::zeros({1, 2});
    z[0] = std::nan("");
    CHECK_THROWS(softmax_rows(z));
}

TEST_CASE("nll of a uniform prediction is ln N") {
    const Tensor y_hat = Tensor::full({2, 3}, 1.0 / 3.0);
    const Tensor y = {{1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}};
    CHECK(nll_loss(y_hat, y) == doctest::Approx(std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("nll of a perfect prediction is ~0") {
    const Tensor y = {{0.0, 1.0}};
    CHECK(nll_loss(y, y) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("nll direct evaluation") {
    const Tensor y_hat = {{0.7, 0.3}};
    const Tensor y = {{1.0, 0.0}};
    CHECK(nll_loss(y_hat, y) == doctest::Approx(0.356675).epsilon(1e-5));
}

TEST_CASE("nll rejects a non-one-hot label row") {
    const Tensor y_hat = Tensor::full({1, 2}, 0.5);
    CHECK_THROWS(nll_loss(y_hat, Tensor{{0.5, 0.5}}));
    CHECK_THROWS(nll_loss(y_hat, Tensor{{1.0, 1.0}}));
    CHECK_THROWS(nll_loss(y_hat, Tensor{{0.0, 0.0}}));
}

TEST_CASE("prediction error is Y minus Y_hat") {
    const Tensor y = {{1.0, 0.0}};
    const Tensor y_hat = {{0.5, 0.5}};
    const Tensor delta = prediction_error(y, y_hat);
    CHECK(delta.at(0, 0) == doctest::Approx(0.5));
    CHECK(delta.at(0, 1) == doctest::Approx(-0.5));
    CHECK(frobenius_norm(prediction_error(y, y)) == 0.0);
}

TEST_CASE("zero-init error pattern for N=4") {
    const Tensor y = {{0.0, 0.0, 1.0, 0.0}};
    const Tensor y_hat = Tensor::full({1, 4}, 0.25);
    const Tensor delta = prediction_error(y, y_hat);
    CHECK(delta.at(0, 2) == doctest::Approx(0.75));
    CHECK(delta.at(0, 0) == doctest::Approx(-0.25));
    CHECK(delta.at(0, 1) == doctest::Approx(-0.25));
    CHECK(delta.at(0, 3) == doctest::Approx(-0.25));
}

TEST_CASE("norms, entropy and distances") {
    CHECK(frobenius_norm(Tensor::zeros({3, 4})) == 0.0);
    const Tensor uniform = Tensor::full({1, 5}, 0.2);
    CHECK(entropy_rows(uniform)[0] == doctest::Approx(std::log(5.0)).epsilon(1e-9));
    CHECK(l2_distance(Tensor{{3.0, 0.0}}, Tensor{{0.0, 4.0}}) == doctest::Approx(5.0));
    CHECK_THROWS(l2_distance(Tensor::zeros({2}), Tensor::zeros({3})));
}

TEST_CASE("softmax norm is at least 1/N with equality on constant rows") {
    Rng rng(321);
    for (int trial = 0; trial < 500; ++trial) {
        Tensor z({1, 5});
        for (double& v : z.vec()) v = rng.normal(0.0, 2.0);
        const Tensor p = softmax_rows(z);
        double norm_sq = 0.0;
        for (double v : p.vec()) norm_sq += v * v;
        CHECK(norm_sq >= 0.2 - 1e-12);
    }
    const Tensor p = softmax_rows(Tensor::full({1, 5}, -3.0));
    double norm_sq = 0.0;
    for (double v : p.vec()) norm_sq += v * v;
    CHECK(norm_sq == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("tensor shape bookkeeping") {
    const Tensor t({2, 3, 4});
    CHECK(t.numel() == 24);
    CHECK(t.ndim() == 3);
    CHECK_THROWS(Tensor({2, 2}, {1.0, 2.0, 3.0}));
    CHECK_THROWS(t.reshaped({5, 5}));
    CHECK(t.reshaped({4, 6}).numel() == 24);
}
