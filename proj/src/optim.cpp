#include "ftlab/optim.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace ftlab {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) fail("optimizer state: truncated stream");
    return v;
}

}  // namespace

OptAlgo opt_algo_from_string(const std::string& s) {
    if (s == "sgd_momentum") return OptAlgo::SgdMomentum;
    if (s == "nesterov") return OptAlgo::Nesterov;
    if (s == "adam") return OptAlgo::Adam;
    if (s == "radam") return OptAlgo::RAdam;
    fail("unknown optimizer '" + s + "'");
}

std::string to_string(OptAlgo a) {
    switch (a) {
        case OptAlgo::SgdMomentum: return "sgd_momentum";
        case OptAlgo::Nesterov: return "nesterov";
        case OptAlgo::Adam: return "adam";
        case OptAlgo::RAdam: return "radam";
    }
    fail("bad optimizer algo");
}

Optimizer::Optimizer(OptimizerConfig config, std::vector<ParamGroup> groups)
    : config_(config), groups_(std::move(groups)) {
    if (config_.momentum < 0.0 || config_.momentum >= 1.0)
        fail("optimizer: momentum must lie in [0, 1)");
    for (const ParamGroup& group : groups_) {
        if (group.lr < 0.0) fail("optimizer: negative learning rate for group " + group.name);
        for (TensorRef ref : group.params) {
            const std::size_t n = ref.value->numel();
            if (ref.grad->numel() != n) fail("optimizer: grad shape mismatch");
            velocity_.emplace_back(n, 0.0);
            moment1_.emplace_back(n, 0.0);
            moment2_.emplace_back(n, 0.0);
        }
    }
}

void Optimizer::step() {
    ++step_count_;
    const double t = static_cast<double>(step_count_);
    std::size_t slot = 0;
    for (ParamGroup& group : groups_) {
        const double lr = group.lr;
        for (TensorRef ref : group.params) {
            double* p = ref.value->data();
            const double* g = ref.grad->data();
            const std::size_t n = ref.value->numel();
            switch (config_.algo) {
                case OptAlgo::SgdMomentum: {
                    std::vector<double>& v = velocity_[slot];
                    const double mix = config_.accumulating_momentum ? 1.0 : 1.0 - config_.momentum;
                    for (std::size_t i = 0; i < n; ++i) {
                        v[i] = config_.momentum * v[i] + mix * (-lr * g[i]);
                        p[i] += v[i];
                    }
                    break;
                }
                case OptAlgo::Nesterov: {
                    std::vector<double>& v = velocity_[slot];
                    const double mix = config_.accumulating_momentum ? 1.0 : 1.0 - config_.momentum;
                    for (std::size_t i = 0; i < n; ++i) {
                        const double d = mix * (-lr * g[i]);
                        v[i] = config_.momentum * v[i] + d;
                        p[i] += config_.momentum * v[i] + d;
                    }
                    break;
                }
                case OptAlgo::Adam: {
                    std::vector<double>& m1 = moment1_[slot];
                    std::vector<double>& m2 = moment2_[slot];
                    const double c1 = 1.0 - std::pow(config_.adam_beta1, t);
                    const double c2 = 1.0 - std::pow(config_.adam_beta2, t);
                    for (std::size_t i = 0; i < n; ++i) {
                        m1[i] = config_.adam_beta1 * m1[i] + (1.0 - config_.adam_beta1) * g[i];
                        m2[i] = config_.adam_beta2 * m2[i] + (1.0 - config_.adam_beta2) * g[i] * g[i];
                        const double mhat = m1[i] / c1;
                        const double vhat = m2[i] / c2;
                        p[i] -= lr * mhat / (std::sqrt(vhat) + config_.adam_eps);
                    }
                    break;
                }
                case OptAlgo::RAdam: {
                    std::vector<double>& m1 = moment1_[slot];
                    std::vector<double>& m2 = moment2_[slot];
                    const double b2t = std::pow(config_.adam_beta2, t);
                    const double c1 = 1.0 - std::pow(config_.adam_beta1, t);
                    const double rho_inf = 2.0 / (1.0 - config_.adam_beta2) - 1.0;
                    const double rho = rho_inf - 2.0 * t * b2t / (1.0 - b2t);
                    double rect = 0.0;
                    const bool tractable = rho > 4.0;
                    if (tractable)
                        rect = std::sqrt(((rho - 4.0) * (rho - 2.0) * rho_inf) /
                                         ((rho_inf - 4.0) * (rho_inf - 2.0) * rho));
                    for (std::size_t i = 0; i < n; ++i) {
                        m1[i] = config_.adam_beta1 * m1[i] + (1.0 - config_.adam_beta1) * g[i];
                        m2[i] = config_.adam_beta2 * m2[i] + (1.0 - config_.adam_beta2) * g[i] * g[i];
                        const double mhat = m1[i] / c1;
                        if (tractable) {
                            const double vhat = std::sqrt(m2[i] / (1.0 - b2t));
                            p[i] -= lr * rect * mhat / (vhat + config_.adam_eps);
                        } else {
                            p[i] -= lr * mhat;
                        }
                    }
                    break;
                }
            }
            ++slot;
        }
    }
}

void Optimizer::zero_grad() {
    for (ParamGroup& group : groups_)
        for (TensorRef ref : group.params) ref.grad->fill(0.0);
}

void Optimizer::save(std::ostream& os) const {
    write_pod<std::uint32_t>(os, 1u);  // format version
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(to_string(config_.algo).size()));
    os.write(to_string(config_.algo).data(),
             static_cast<std::streamsize>(to_string(config_.algo).size()));
    write_pod<double>(os, config_.momentum);
    write_pod<std::uint8_t>(os, config_.accumulating_momentum ? 1 : 0);
    write_pod<double>(os, config_.adam_beta1);
    write_pod<double>(os, config_.adam_beta2);
    write_pod<double>(os, config_.adam_eps);
    write_pod<std::uint64_t>(os, step_count_);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(velocity_.size()));
    auto dump = [&os](const std::vector<std::vector<double>>& buffers) {
        for (const auto& buf : buffers) {
            write_pod<std::uint64_t>(os, buf.size());
            os.write(reinterpret_cast<const char*>(buf.data()),
                     static_cast<std::streamsize>(buf.size() * sizeof(double)));
        }
    };
    dump(velocity_);
    dump(moment1_);
    dump(moment2_);
    if (!os) fail("optimizer state: write failed");
}

void Optimizer::load(std::istream& is) {
    const auto version = read_pod<std::uint32_t>(is);
    if (version != 1) fail("optimizer state: unsupported version");
    const auto name_len = read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (opt_algo_from_string(name) != config_.algo) fail("optimizer state: algorithm mismatch");
    config_.momentum = read_pod<double>(is);
    config_.accumulating_momentum = read_pod<std::uint8_t>(is) != 0;
    config_.adam_beta1 = read_pod<double>(is);
    config_.adam_beta2 = read_pod<double>(is);
    config_.adam_eps = read_pod<double>(is);
    step_count_ = read_pod<std::uint64_t>(is);
    const auto count = read_pod<std::uint32_t>(is);
    if (count != velocity_.size()) fail("optimizer state: buffer count mismatch");
    auto slurp = [&is](std::vector<std::vector<double>>& buffers) {
        for (auto& buf : buffers) {
            const auto n = read_pod<std::uint64_t>(is);
            if (n != buf.size()) fail("optimizer state: buffer size mismatch");
            is.read(reinterpret_cast<char*>(buf.data()),
                    static_cast<std::streamsize>(n * sizeof(double)));
        }
    };
    slurp(velocity_);
    slurp(moment1_);
    slurp(moment2_);
    if (!is) fail("optimizer state: truncated stream");
}

Tensor velocity_of_w(const Tensor& delta, const Tensor& features, double alpha) {
    const std::size_t m = delta.rows(), n = delta.cols(), d = features.cols();
    if (features.rows() != m)
        fail("velocity_of_w: batch size mismatch " + shape_str(delta) + " vs " +
             shape_str(features));
    Tensor v({n, d});
    const double scale = alpha / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t c = 0; c < n; ++c) {
            const double dv = scale * delta.at(i, c);
            for (std::size_t j = 0; j < d; ++j) v.at(c, j) += dv * features.at(i, j);
        }
    return v;
}

}  // namespace ftlab
