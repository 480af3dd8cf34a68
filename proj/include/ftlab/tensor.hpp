#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace ftlab {

/// Dense row-major n-dimensional array of 64-bit floats. The only numeric
/// carrier in the library; every kernel below validates shapes and keeps
/// results finite.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);
    Tensor(std::initializer_list<std::initializer_list<double>> rows);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    // Row/column accessors for 2-d tensors.
    std::size_t rows() const { return extent(0); }
    std::size_t cols() const { return extent(1); }
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    void fill(double value);
    Tensor reshaped(std::vector<std::size_t> shape) const;

    bool operator==(const Tensor& other) const = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_str(const Tensor& t);

/// Throws if any element is NaN or infinite. `what` names the offending
/// operation in the error message.
void require_finite(const Tensor& t, const char* what);

/// Standard matrix product with a fixed left-to-right summation order over
/// the inner dimension, so repeated runs are bit-identical.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Row-wise softmax with max-subtraction for stability. `temperature`
/// divides the logits before exponentiation and must be positive.
Tensor softmax_rows(const Tensor& z, double temperature = 1.0);

/// Mean negative log-likelihood over the batch; rows of `y` must be one-hot
/// and rows of `y_hat` must sum to 1. The logarithm gets an additive 1e-12
/// floor so zero probabilities stay finite.
double nll_loss(const Tensor& y_hat, const Tensor& y);

/// Delta = Y - Y_hat. The batch-mean loss gradient w.r.t. the logits is
/// -Delta / M.
Tensor prediction_error(const Tensor& y, const Tensor& y_hat);

double frobenius_norm(const Tensor& t);

/// Per-row entropy in nats, with the same 1e-12 log floor as nll_loss.
/// Rows are expected to be probability vectors.
Tensor entropy_rows(const Tensor& p);

double l2_distance(const Tensor& u, const Tensor& v);
double l2_distance(const std::vector<double>& u, const std::vector<double>& v);

inline constexpr double kLogFloor = 1e-12;

}  // namespace ftlab
