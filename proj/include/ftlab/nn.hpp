#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ftlab/rng.hpp"
#include "ftlab/tensor.hpp"

namespace ftlab {

/// Non-owning handle to one trainable tensor and its gradient buffer.
struct TensorRef {
    Tensor* value = nullptr;
    Tensor* grad = nullptr;
};

struct NamedTensor {
    std::string name;
    Tensor* tensor = nullptr;
};

/// One stage of the feature extractor with a hand-written backward pass.
///
/// Convention: `backward` receives dLoss/dOutput and returns dLoss/dInput,
/// accumulating dLoss/dParam into the layer's grad buffers. The 1/M batch
/// mean enters exactly once, through the loss gradient, so layers do plain
/// chain-rule sums.
class Layer {
public:
    virtual ~Layer() = default;

    virtual Tensor forward(const Tensor& x, bool training) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;

    /// Trainable tensors paired with their grad buffers. Running statistics
    /// are deliberately absent.
    virtual std::vector<TensorRef> parameters() { return {}; }

    /// Everything a checkpoint must persist: parameters plus buffers such as
    /// BatchNorm running statistics.
    virtual std::vector<NamedTensor> state() { return {}; }

    virtual std::string descriptor() const = 0;
    virtual void init_params(Rng&) {}

    void zero_grad();

protected:
    void require_cache(const char* who) const;
    bool has_cache_ = false;
};

class DenseLayer final : public Layer {
public:
    DenseLayer(std::size_t in, std::size_t out);
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<TensorRef> parameters() override;
    std::vector<NamedTensor> state() override;
    std::string descriptor() const override;
    void init_params(Rng& rng) override;

    Tensor weight;  // [out, in]
    Tensor bias;    // [out]
    Tensor grad_weight, grad_bias;

private:
    std::size_t in_, out_;
    Tensor cached_input_;
};

class Conv2dLayer final : public Layer {
public:
    Conv2dLayer(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
                std::size_t pad);
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<TensorRef> parameters() override;
    std::vector<NamedTensor> state() override;
    std::string descriptor() const override;
    void init_params(Rng& rng) override;

    Tensor weight;  // [cout, cin, k, k]
    Tensor bias;    // [cout]
    Tensor grad_weight, grad_bias;

private:
    std::size_t cin_, cout_, k_, stride_, pad_;
    Tensor cached_input_;
};

class ReluLayer final : public Layer {
public:
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string descriptor() const override { return "relu"; }

private:
    Tensor cached_input_;
};

/// Non-overlapping max pooling with stride equal to the kernel; trailing
/// rows/columns that do not fill a window are dropped.
class MaxPoolLayer final : public Layer {
public:
    explicit MaxPoolLayer(std::size_t k) : k_(k) {}
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string descriptor() const override;

private:
    std::size_t k_;
    std::vector<std::size_t> argmax_;
    std::vector<std::size_t> in_shape_;
};

class GlobalAvgPoolLayer final : public Layer {
public:
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string descriptor() const override { return "avgpool_global"; }

private:
    std::vector<std::size_t> in_shape_;
};

class FlattenLayer final : public Layer {
public:
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string descriptor() const override { return "flatten"; }

private:
    std::vector<std::size_t> in_shape_;
};

/// Batch normalization over the channel axis (dim 1) of 2-d or 4-d input.
/// Training mode normalizes with batch statistics and updates the running
/// estimates with momentum 0.9; inference mode uses the running estimates
/// and mutates nothing.
class BatchNormLayer final : public Layer {
public:
    explicit BatchNormLayer(std::size_t channels);
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<TensorRef> parameters() override;
    std::vector<NamedTensor> state() override;
    std::string descriptor() const override;

    Tensor gamma, beta;
    Tensor grad_gamma, grad_beta;
    Tensor running_mean, running_var;

    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.9;

private:
    std::size_t channels_;
    Tensor cached_input_, cached_xhat_;
    std::vector<double> cached_mean_, cached_ivar_;
};

/// Ordered layer stack phi(x; theta). The architecture is fixed after
/// construction; theta is the flat concatenation of all layer parameters in
/// declaration order.
class FeatureExtractor {
public:
    FeatureExtractor() = default;
    explicit FeatureExtractor(std::vector<std::unique_ptr<Layer>> layers);

    Tensor forward(const Tensor& x, bool training);
    /// Propagates dLoss/dFeatures back through the stack, filling every
    /// layer's grad buffers; returns dLoss/dInput.
    Tensor backward(const Tensor& grad_features);

    std::vector<TensorRef> parameters();
    void zero_grad();

    std::vector<double> theta() const;
    void set_theta(const std::vector<double>& flat);
    std::size_t theta_size() const;

    std::vector<NamedTensor> state();
    std::string descriptor() const;
    std::size_t output_dim(const std::vector<std::size_t>& input_shape);

    FeatureExtractor clone() const;

    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

/// Parses the one-line-per-layer descriptor used by checkpoints and builds
/// the stack with zeroed parameters.
FeatureExtractor build_extractor(const std::string& descriptor);

/// Named presets. "desk_cnn" is the small conv backbone used throughout the
/// experiments; "tiny_mlp" is a fast stand-in for tests.
std::string arch_preset(const std::string& name, std::size_t in_channels,
                        std::size_t image_size);

/// Kaiming fan-in init for every conv/dense weight, zero biases, identity
/// BatchNorm scale.
void init_extractor(FeatureExtractor& fe, std::uint64_t seed);

enum class InitMode { Zero, Normal, KaimingFanIn, KaimingFanOut, XavierUniform };

InitMode init_mode_from_string(const std::string& s);
std::string to_string(InitMode m);

struct HeadInit {
    InitMode mode = InitMode::Zero;
    double epsilon = 0.0;  // Zero mode: constant value for every element
    double sigma = 1.0;    // Normal mode: standard deviation
};

/// Bias-free linear map Z = A W^T followed (externally) by softmax. W has
/// one row per class.
class ClassifierHead {
public:
    ClassifierHead() = default;
    ClassifierHead(std::size_t n_classes, std::size_t dim);

    void init(const HeadInit& init, std::uint64_t seed);

    Tensor forward(const Tensor& features) const;
    /// Accumulates grad_w and returns dLoss/dFeatures.
    Tensor backward(const Tensor& features, const Tensor& delta);

    std::size_t n_classes() const { return w_.ndim() == 2 ? w_.rows() : 0; }
    std::size_t dim() const { return w_.ndim() == 2 ? w_.cols() : 0; }

    Tensor& w() { return w_; }
    const Tensor& w() const { return w_; }
    Tensor& grad_w() { return grad_w_; }
    void zero_grad() { grad_w_.fill(0.0); }
    std::vector<TensorRef> parameters() { return {{&w_, &grad_w_}}; }

private:
    Tensor w_;       // [N, D]
    Tensor grad_w_;  // [N, D]
};

struct HeadGrads {
    Tensor grad_w;  // dLoss/dW = -(1/M) Delta^T A
    Tensor grad_a;  // dLoss/dA = -(1/M) Delta W
};

/// Pure form of the head backward pass, convenient for tests and for the
/// per-step velocity diagnostics.
HeadGrads head_gradients(const Tensor& w, const Tensor& features, const Tensor& delta);

/// Versioned binary container: architecture descriptor, every state tensor
/// in a fixed order, and the RNG seed. Loading and re-saving reproduces the
/// file byte for byte.
struct Checkpoint {
    std::uint32_t version = 1;
    std::uint64_t seed = 0;
    std::string arch;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void save(std::ostream& os) const;
    static Checkpoint load(std::istream& is);
    void save_file(const std::string& path) const;
    static Checkpoint load_file(const std::string& path);

    const Tensor* find(const std::string& name) const;
};

Checkpoint make_checkpoint(FeatureExtractor& fe, const ClassifierHead& head,
                           const ClassifierHead* source_head, std::uint64_t seed);

struct RestoredModel {
    FeatureExtractor extractor;
    ClassifierHead head;
    std::optional<ClassifierHead> source_head;
    std::uint64_t seed = 0;
};

RestoredModel restore_model(const Checkpoint& ckpt);

/// Top-k accuracy with deterministic index-order tie-breaking: the label
/// counts as hit when fewer than k scores rank strictly above it (earlier
/// index wins ties).
double topk_accuracy(const Tensor& scores, const std::vector<int>& labels, std::size_t k);

}  // namespace ftlab
