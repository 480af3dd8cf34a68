#include "ftlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ftlab {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void require_2d(const Tensor& t, const char* what) {
    if (t.ndim() != 2) fail(std::string(what) + ": expected a 2-d tensor, got " + shape_str(t));
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
        fail("tensor: data length " + std::to_string(data_.size()) +
             " does not match shape " + shape_str(*this));
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    shape_ = {r, c};
    data_.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) fail("tensor: ragged initializer rows");
        data_.insert(data_.end(), row.begin(), row.end());
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) fail("tensor: axis out of range");
    return shape_[axis];
}

double& Tensor::at(std::size_t r, std::size_t c) {
    return data_[r * shape_[1] + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    if (shape_numel(shape) != data_.size())
        fail("reshape: element count mismatch for " + shape_str(*this));
    return Tensor(std::move(shape), data_);
}

std::string shape_str(const Tensor& t) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < t.shape().size(); ++i) {
        if (i) os << 'x';
        os << t.shape()[i];
    }
    os << ']';
    return os.str();
}

void require_finite(const Tensor& t, const char* what) {
    for (double v : t.vec())
        if (!std::isfinite(v)) fail(std::string(what) + ": non-finite element");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.cols() != b.rows())
        fail("matmul: inner dimensions disagree, " + shape_str(a) + " x " + shape_str(b));
    const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
    Tensor out({m, p});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            double acc = 0.0;
            for (std::size_t q = 0; q < k; ++q) acc += pa[i * k + q] * pb[q * p + j];
            po[i * p + j] = acc;
        }
    }
    require_finite(out, "matmul");
    return out;
}

Tensor softmax_rows(const Tensor& z, double temperature) {
    require_2d(z, "softmax_rows");
    require_finite(z, "softmax_rows input");
    if (!(temperature > 0.0)) fail("softmax_rows: temperature must be positive");
    const std::size_t m = z.rows(), n = z.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double mx = z.at(i, 0);
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, z.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double e = std::exp((z.at(i, j) - mx) / temperature);
            out.at(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= sum;
    }
    require_finite(out, "softmax_rows");
    return out;
}

double nll_loss(const Tensor& y_hat, const Tensor& y) {
    require_2d(y_hat, "nll_loss");
    if (!y_hat.same_shape(y))
        fail("nll_loss: shape mismatch " + shape_str(y_hat) + " vs " + shape_str(y));
    const std::size_t m = y.rows(), n = y.cols();
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t ones = 0;
        double row_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double t = y.at(i, j);
            if (t == 1.0)
                ++ones;
            else if (t != 0.0)
                fail("nll_loss: label row " + std::to_string(i) + " is not one-hot");
            row_sum += y_hat.at(i, j);
            if (t != 0.0) total -= t * std::log(y_hat.at(i, j) + kLogFloor);
        }
        if (ones != 1) fail("nll_loss: label row " + std::to_string(i) + " is not one-hot");
        if (std::abs(row_sum - 1.0) > 1e-6)
            fail("nll_loss: prediction row " + std::to_string(i) + " does not sum to 1");
    }
    return total / static_cast<double>(m);
}

Tensor prediction_error(const Tensor& y, const Tensor& y_hat) {
    if (!y.same_shape(y_hat))
        fail("prediction_error: shape mismatch " + shape_str(y) + " vs " + shape_str(y_hat));
    Tensor out(y.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) out[i] = y[i] - y_hat[i];
    require_finite(out, "prediction_error");
    return out;
}

double frobenius_norm(const Tensor& t) {
    double acc = 0.0;
    for (double v : t.vec()) acc += v * v;
    return std::sqrt(acc);
}

Tensor entropy_rows(const Tensor& p) {
    require_2d(p, "entropy_rows");
    const std::size_t m = p.rows(), n = p.cols();
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
        double h = 0.0, row_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = p.at(i, j);
            row_sum += v;
            h -= v * std::log(v + kLogFloor);
        }
        if (std::abs(row_sum - 1.0) > 1e-6)
            fail("entropy_rows: row " + std::to_string(i) + " does not sum to 1");
        out[i] = h;
    }
    return out;
}

double l2_distance(const Tensor& u, const Tensor& v) {
    if (!u.same_shape(v))
        fail("l2_distance: shape mismatch " + shape_str(u) + " vs " + shape_str(v));
    return l2_distance(u.vec(), v.vec());
}

double l2_distance(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size()) fail("l2_distance: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - v[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace ftlab
