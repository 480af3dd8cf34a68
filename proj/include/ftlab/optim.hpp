#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ftlab/nn.hpp"
#include "ftlab/tensor.hpp"

namespace ftlab {

enum class OptAlgo { SgdMomentum, Nesterov, Adam, RAdam };

OptAlgo opt_algo_from_string(const std::string& s);
std::string to_string(OptAlgo a);

/// Named set of tensors updated with one learning rate. "head" and
/// "extractor" are the two groups used by the training loops; lr = 0 freezes
/// the group bit-exactly.
struct ParamGroup {
    std::string name;
    double lr = 0.0;
    std::vector<TensorRef> params;
};

struct OptimizerConfig {
    OptAlgo algo = OptAlgo::SgdMomentum;
    double momentum = 0.9;  // M in the SGD variants
    /// SGD velocity form. The default scales the fresh term by (1 - M):
    ///   V <- M V + (1 - M)(-lr g),  p += V.
    /// The accumulating alternative drops the (1 - M) factor.
    bool accumulating_momentum = false;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

/// Per-parameter buffers plus the step counter for one model's parameter
/// groups. Buffers mirror parameter shapes; `step` visits every group.
class Optimizer {
public:
    Optimizer(OptimizerConfig config, std::vector<ParamGroup> groups);

    void step();
    void zero_grad();

    std::uint64_t step_count() const { return step_count_; }
    const OptimizerConfig& config() const { return config_; }
    std::vector<ParamGroup>& groups() { return groups_; }

    /// Bit-exact round trip: save writes every buffer and counter, load
    /// restores them into an optimizer with identical group structure.
    void save(std::ostream& os) const;
    void load(std::istream& is);

private:
    OptimizerConfig config_;
    std::vector<ParamGroup> groups_;
    // One entry per parameter tensor, flattened over groups.
    std::vector<std::vector<double>> velocity_;  // SGD family
    std::vector<std::vector<double>> moment1_;   // Adam family
    std::vector<std::vector<double>> moment2_;
    std::uint64_t step_count_ = 0;
};

/// (alpha / M) Delta^T A: the additive step applied to W under vanilla SGD,
/// logged per step as a diagnostic. Equal to -alpha * grad_W.
Tensor velocity_of_w(const Tensor& delta, const Tensor& features, double alpha);

}  // namespace ftlab
