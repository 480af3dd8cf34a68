#include "ftlab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ftlab {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void check_4d(const Tensor& x, const char* who) {
    if (x.ndim() != 4) fail(std::string(who) + ": expected 4-d input, got " + shape_str(x));
}

}  // namespace

// ---------------------------------------------------------------------------
// Layer base

void Layer::zero_grad() {
    for (TensorRef ref : parameters()) ref.grad->fill(0.0);
}

void Layer::require_cache(const char* who) const {
    if (!has_cache_) fail(std::string(who) + ": backward without a preceding training forward");
}

// ---------------------------------------------------------------------------
// Dense

DenseLayer::DenseLayer(std::size_t in, std::size_t out)
    : weight({out, in}),
      bias({out}),
      grad_weight({out, in}),
      grad_bias({out}),
      in_(in),
      out_(out) {}

Tensor DenseLayer::forward(const Tensor& x, bool training) {
    if (x.ndim() != 2 || x.cols() != in_)
        fail("dense: expected [Mx" + std::to_string(in_) + "], got " + shape_str(x));
    const std::size_t m = x.rows();
    Tensor y({m, out_});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t o = 0; o < out_; ++o) {
            double acc = bias[o];
            for (std::size_t j = 0; j < in_; ++j) acc += x.at(i, j) * weight.at(o, j);
            y.at(i, o) = acc;
        }
    if (training) {
        cached_input_ = x;
        has_cache_ = true;
    }
    return y;
}

Tensor DenseLayer::backward(const Tensor& grad_out) {
    require_cache("dense");
    const Tensor& x = cached_input_;
    const std::size_t m = x.rows();
    if (grad_out.ndim() != 2 || grad_out.rows() != m || grad_out.cols() != out_)
        fail("dense backward: gradient shape mismatch " + shape_str(grad_out));
    Tensor gx({m, in_});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t o = 0; o < out_; ++o) {
            const double g = grad_out.at(i, o);
            grad_bias[o] += g;
            for (std::size_t j = 0; j < in_; ++j) {
                grad_weight.at(o, j) += g * x.at(i, j);
                gx.at(i, j) += g * weight.at(o, j);
            }
        }
    return gx;
}

std::vector<TensorRef> DenseLayer::parameters() {
    return {{&weight, &grad_weight}, {&bias, &grad_bias}};
}

std::vector<NamedTensor> DenseLayer::state() {
    return {{"weight", &weight}, {"bias", &bias}};
}

std::string DenseLayer::descriptor() const {
    return "dense " + std::to_string(in_) + " " + std::to_string(out_);
}

void DenseLayer::init_params(Rng& rng) {
    const double sd = std::sqrt(2.0 / static_cast<double>(in_));
    for (double& v : weight.vec()) v = rng.normal(0.0, sd);
    bias.fill(0.0);
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2dLayer::Conv2dLayer(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
                         std::size_t pad)
    : weight({cout, cin, k, k}),
      bias({cout}),
      grad_weight({cout, cin, k, k}),
      grad_bias({cout}),
      cin_(cin),
      cout_(cout),
      k_(k),
      stride_(stride),
      pad_(pad) {
    if (stride_ == 0) fail("conv2d: stride must be positive");
}

Tensor Conv2dLayer::forward(const Tensor& x, bool training) {
    check_4d(x, "conv2d");
    if (x.extent(1) != cin_)
        fail("conv2d: expected " + std::to_string(cin_) + " input channels, got " + shape_str(x));
    const std::size_t m = x.extent(0), h = x.extent(2), w = x.extent(3);
    if (h + 2 * pad_ < k_ || w + 2 * pad_ < k_) fail("conv2d: input smaller than kernel");
    const std::size_t ho = (h + 2 * pad_ - k_) / stride_ + 1;
    const std::size_t wo = (w + 2 * pad_ - k_) / stride_ + 1;
    Tensor y({m, cout_, ho, wo});
    const double* px = x.data();
    double* py = y.data();
    const double* pw = weight.data();
    for (std::size_t im = 0; im < m; ++im)
        for (std::size_t co = 0; co < cout_; ++co)
            for (std::size_t oh = 0; oh < ho; ++oh)
                for (std::size_t ow = 0; ow < wo; ++ow) {
                    double acc = bias[co];
                    for (std::size_t ci = 0; ci < cin_; ++ci)
                        for (std::size_t kh = 0; kh < k_; ++kh) {
                            const std::ptrdiff_t ih =
                                static_cast<std::ptrdiff_t>(oh * stride_ + kh) -
                                static_cast<std::ptrdiff_t>(pad_);
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kw = 0; kw < k_; ++kw) {
                                const std::ptrdiff_t iw =
                                    static_cast<std::ptrdiff_t>(ow * stride_ + kw) -
                                    static_cast<std::ptrdiff_t>(pad_);
                                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
                                acc += px[((im * cin_ + ci) * h + ih) * w + iw] *
                                       pw[((co * cin_ + ci) * k_ + kh) * k_ + kw];
                            }
                        }
                    py[((im * cout_ + co) * ho + oh) * wo + ow] = acc;
                }
    if (training) {
        cached_input_ = x;
        has_cache_ = true;
    }
    return y;
}

Tensor Conv2dLayer::backward(const Tensor& grad_out) {
    require_cache("conv2d");
    const Tensor& x = cached_input_;
    const std::size_t m = x.extent(0), h = x.extent(2), w = x.extent(3);
    const std::size_t ho = grad_out.extent(2), wo = grad_out.extent(3);
    Tensor gx(x.shape());
    const double* px = x.data();
    const double* pg = grad_out.data();
    const double* pw = weight.data();
    double* pgx = gx.data();
    double* pgw = grad_weight.data();
    for (std::size_t im = 0; im < m; ++im)
        for (std::size_t co = 0; co < cout_; ++co)
            for (std::size_t oh = 0; oh < ho; ++oh)
                for (std::size_t ow = 0; ow < wo; ++ow) {
                    const double g = pg[((im * cout_ + co) * ho + oh) * wo + ow];
                    grad_bias[co] += g;
                    for (std::size_t ci = 0; ci < cin_; ++ci)
                        for (std::size_t kh = 0; kh < k_; ++kh) {
                            const std::ptrdiff_t ih =
                                static_cast<std::ptrdiff_t>(oh * stride_ + kh) -
                                static_cast<std::ptrdiff_t>(pad_);
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kw = 0; kw < k_; ++kw) {
                                const std::ptrdiff_t iw =
                                    static_cast<std::ptrdiff_t>(ow * stride_ + kw) -
                                    static_cast<std::ptrdiff_t>(pad_);
                                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
                                const std::size_t xi = ((im * cin_ + ci) * h + ih) * w + iw;
                                const std::size_t wi = ((co * cin_ + ci) * k_ + kh) * k_ + kw;
                                pgw[wi] += g * px[xi];
                                pgx[xi] += g * pw[wi];
                            }
                        }
                }
    return gx;
}

std::vector<TensorRef> Conv2dLayer::parameters() {
    return {{&weight, &grad_weight}, {&bias, &grad_bias}};
}

std::vector<NamedTensor> Conv2dLayer::state() {
    return {{"weight", &weight}, {"bias", &bias}};
}

std::string Conv2dLayer::descriptor() const {
    std::ostringstream os;
    os << "conv2d " << cin_ << " " << cout_ << " " << k_ << " " << stride_ << " " << pad_;
    return os.str();
}

void Conv2dLayer::init_params(Rng& rng) {
    const double fan_in = static_cast<double>(cin_ * k_ * k_);
    const double sd = std::sqrt(2.0 / fan_in);
    for (double& v : weight.vec()) v = rng.normal(0.0, sd);
    bias.fill(0.0);
}

// ---------------------------------------------------------------------------
// ReLU

Tensor ReluLayer::forward(const Tensor& x, bool training) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    if (training) {
        cached_input_ = x;
        has_cache_ = true;
    }
    return y;
}

Tensor ReluLayer::backward(const Tensor& grad_out) {
    require_cache("relu");
    if (!grad_out.same_shape(cached_input_)) fail("relu backward: gradient shape mismatch");
    Tensor gx(grad_out.shape());
    for (std::size_t i = 0; i < gx.numel(); ++i)
        gx[i] = cached_input_[i] > 0.0 ? grad_out[i] : 0.0;
    return gx;
}

// ---------------------------------------------------------------------------
// MaxPool

Tensor MaxPoolLayer::forward(const Tensor& x, bool training) {
    check_4d(x, "maxpool");
    const std::size_t m = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const std::size_t ho = h / k_, wo = w / k_;
    if (ho == 0 || wo == 0) fail("maxpool: input smaller than kernel");
    Tensor y({m, c, ho, wo});
    std::vector<std::size_t> argmax(y.numel());
    const double* px = x.data();
    double* py = y.data();
    std::size_t oi = 0;
    for (std::size_t im = 0; im < m; ++im)
        for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t oh = 0; oh < ho; ++oh)
                for (std::size_t ow = 0; ow < wo; ++ow, ++oi) {
                    double best = -1e300;
                    std::size_t best_idx = 0;
                    for (std::size_t kh = 0; kh < k_; ++kh)
                        for (std::size_t kw = 0; kw < k_; ++kw) {
                            const std::size_t idx =
                                ((im * c + ic) * h + oh * k_ + kh) * w + ow * k_ + kw;
                            if (px[idx] > best) {
                                best = px[idx];
                                best_idx = idx;
                            }
                        }
                    py[oi] = best;
                    argmax[oi] = best_idx;
                }
    if (training) {
        argmax_ = std::move(argmax);
        in_shape_ = x.shape();
        has_cache_ = true;
    }
    return y;
}

Tensor MaxPoolLayer::backward(const Tensor& grad_out) {
    require_cache("maxpool");
    if (grad_out.numel() != argmax_.size()) fail("maxpool backward: gradient shape mismatch");
    Tensor gx(in_shape_);
    for (std::size_t i = 0; i < argmax_.size(); ++i) gx[argmax_[i]] += grad_out[i];
    return gx;
}

std::string MaxPoolLayer::descriptor() const { return "maxpool " + std::to_string(k_); }

// ---------------------------------------------------------------------------
// Global average pool

Tensor GlobalAvgPoolLayer::forward(const Tensor& x, bool training) {
    check_4d(x, "avgpool_global");
    const std::size_t m = x.extent(0), c = x.extent(1), hw = x.extent(2) * x.extent(3);
    Tensor y({m, c});
    for (std::size_t im = 0; im < m; ++im)
        for (std::size_t ic = 0; ic < c; ++ic) {
            double acc = 0.0;
            const double* base = x.data() + (im * c + ic) * hw;
            for (std::size_t i = 0; i < hw; ++i) acc += base[i];
            y.at(im, ic) = acc / static_cast<double>(hw);
        }
    if (training) {
        in_shape_ = x.shape();
        has_cache_ = true;
    }
    return y;
}

Tensor GlobalAvgPoolLayer::backward(const Tensor& grad_out) {
    require_cache("avgpool_global");
    const std::size_t m = in_shape_[0], c = in_shape_[1], hw = in_shape_[2] * in_shape_[3];
    Tensor gx(in_shape_);
    for (std::size_t im = 0; im < m; ++im)
        for (std::size_t ic = 0; ic < c; ++ic) {
            const double g = grad_out.at(im, ic) / static_cast<double>(hw);
            double* base = gx.data() + (im * c + ic) * hw;
            for (std::size_t i = 0; i < hw; ++i) base[i] = g;
        }
    return gx;
}

// ---------------------------------------------------------------------------
// Flatten

Tensor FlattenLayer::forward(const Tensor& x, bool training) {
    if (x.ndim() < 2) fail("flatten: expected batched input, got " + shape_str(x));
    const std::size_t m = x.extent(0);
    if (training) {
        in_shape_ = x.shape();
        has_cache_ = true;
    }
    return x.reshaped({m, x.numel() / m});
}

Tensor FlattenLayer::backward(const Tensor& grad_out) {
    require_cache("flatten");
    return grad_out.reshaped(in_shape_);
}

// ---------------------------------------------------------------------------
// BatchNorm

BatchNormLayer::BatchNormLayer(std::size_t channels)
    : gamma(Tensor::full({channels}, 1.0)),
      beta({channels}),
      grad_gamma({channels}),
      grad_beta({channels}),
      running_mean({channels}),
      running_var(Tensor::full({channels}, 1.0)),
      channels_(channels) {}

Tensor BatchNormLayer::forward(const Tensor& x, bool training) {
    if (x.ndim() != 2 && x.ndim() != 4)
        fail("batchnorm: expected 2-d or 4-d input, got " + shape_str(x));
    if (x.extent(1) != channels_)
        fail("batchnorm: expected " + std::to_string(channels_) + " channels, got " + shape_str(x));
    const std::size_t m = x.extent(0);
    const std::size_t hw = x.ndim() == 4 ? x.extent(2) * x.extent(3) : 1;
    const std::size_t per_channel = m * hw;
    Tensor y(x.shape());

    std::vector<double> mean(channels_), ivar(channels_);
    if (training) {
        std::vector<double> var(channels_);
        for (std::size_t c = 0; c < channels_; ++c) {
            double acc = 0.0;
            for (std::size_t im = 0; im < m; ++im) {
                const double* base = x.data() + (im * channels_ + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) acc += base[i];
            }
            mean[c] = acc / static_cast<double>(per_channel);
            double vacc = 0.0;
            for (std::size_t im = 0; im < m; ++im) {
                const double* base = x.data() + (im * channels_ + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    const double d = base[i] - mean[c];
                    vacc += d * d;
                }
            }
            var[c] = vacc / static_cast<double>(per_channel);
            ivar[c] = 1.0 / std::sqrt(var[c] + kEps);
            running_mean[c] = kMomentum * running_mean[c] + (1.0 - kMomentum) * mean[c];
            running_var[c] = kMomentum * running_var[c] + (1.0 - kMomentum) * var[c];
        }
    } else {
        for (std::size_t c = 0; c < channels_; ++c) {
            mean[c] = running_mean[c];
            ivar[c] = 1.0 / std::sqrt(running_var[c] + kEps);
        }
    }

    Tensor xhat(x.shape());
    for (std::size_t im = 0; im < m; ++im)
        for (std::size_t c = 0; c < channels_; ++c) {
            const double* base = x.data() + (im * channels_ + c) * hw;
            double* xh = xhat.data() + (im * channels_ + c) * hw;
            double* py = y.data() + (im * channels_ + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                xh[i] = (base[i] - mean[c]) * ivar[c];
                py[i] = gamma[c] * xh[i] + beta[c];
            }
        }

    if (training) {
        cached_input_ = x;
        cached_xhat_ = std::move(xhat);
        cached_mean_ = std::move(mean);
        cached_ivar_ = std::move(ivar);
        has_cache_ = true;
    }
    return y;
}

Tensor BatchNormLayer::backward(const Tensor& grad_out) {
    require_cache("batchnorm");
    const Tensor& x = cached_input_;
    const std::size_t m = x.extent(0);
    const std::size_t hw = x.ndim() == 4 ? x.extent(2) * x.extent(3) : 1;
    const double n = static_cast<double>(m * hw);
    Tensor gx(x.shape());
    for (std::size_t c = 0; c < channels_; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t im = 0; im < m; ++im) {
            const double* g = grad_out.data() + (im * channels_ + c) * hw;
            const double* xh = cached_xhat_.data() + (im * channels_ + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                sum_g += g[i];
                sum_gx += g[i] * xh[i];
            }
        }
        grad_gamma[c] += sum_gx;
        grad_beta[c] += sum_g;
        const double scale = gamma[c] * cached_ivar_[c];
        for (std::size_t im = 0; im < m; ++im) {
            const double* g = grad_out.data() + (im * channels_ + c) * hw;
            const double* xh = cached_xhat_.data() + (im * channels_ + c) * hw;
            double* out = gx.data() + (im * channels_ + c) * hw;
            for (std::size_t i = 0; i < hw; ++i)
                out[i] = scale * (g[i] - sum_g / n - xh[i] * sum_gx / n);
        }
    }
    return gx;
}

std::vector<TensorRef> BatchNormLayer::parameters() {
    return {{&gamma, &grad_gamma}, {&beta, &grad_beta}};
}

std::vector<NamedTensor> BatchNormLayer::state() {
    return {{"gamma", &gamma},
            {"beta", &beta},
            {"running_mean", &running_mean},
            {"running_var", &running_var}};
}

std::string BatchNormLayer::descriptor() const { return "batchnorm " + std::to_string(channels_); }

// ---------------------------------------------------------------------------
// FeatureExtractor

FeatureExtractor::FeatureExtractor(std::vector<std::unique_ptr<Layer>> layers)
    : layers_(std::move(layers)) {}

Tensor FeatureExtractor::forward(const Tensor& x, bool training) {
    Tensor cur = x;
    for (auto& layer : layers_) cur = layer->forward(cur, training);
    if (cur.ndim() != 2) fail("extractor: final layer must emit [MxD], got " + shape_str(cur));
    return cur;
}

Tensor FeatureExtractor::backward(const Tensor& grad_features) {
    Tensor cur = grad_features;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
}

std::vector<TensorRef> FeatureExtractor::parameters() {
    std::vector<TensorRef> out;
    for (auto& layer : layers_)
        for (TensorRef ref : layer->parameters()) out.push_back(ref);
    return out;
}

void FeatureExtractor::zero_grad() {
    for (auto& layer : layers_) layer->zero_grad();
}

std::vector<double> FeatureExtractor::theta() const {
    std::vector<double> flat;
    for (const auto& layer : layers_)
        for (TensorRef ref : const_cast<Layer&>(*layer).parameters())
            flat.insert(flat.end(), ref.value->vec().begin(), ref.value->vec().end());
    return flat;
}

void FeatureExtractor::set_theta(const std::vector<double>& flat) {
    std::size_t pos = 0;
    for (auto& layer : layers_)
        for (TensorRef ref : layer->parameters()) {
            if (pos + ref.value->numel() > flat.size()) fail("set_theta: flat vector too short");
            std::copy(flat.begin() + pos, flat.begin() + pos + ref.value->numel(),
                      ref.value->vec().begin());
            pos += ref.value->numel();
        }
    if (pos != flat.size()) fail("set_theta: flat vector too long");
}

std::size_t FeatureExtractor::theta_size() const {
    std::size_t n = 0;
    for (const auto& layer : layers_)
        for (TensorRef ref : const_cast<Layer&>(*layer).parameters()) n += ref.value->numel();
    return n;
}

std::vector<NamedTensor> FeatureExtractor::state() {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (NamedTensor nt : layers_[i]->state())
            out.push_back({"layer" + std::to_string(i) + "." + nt.name, nt.tensor});
    return out;
}

std::string FeatureExtractor::descriptor() const {
    std::string out;
    for (const auto& layer : layers_) {
        out += layer->descriptor();
        out += '\n';
    }
    return out;
}

std::size_t FeatureExtractor::output_dim(const std::vector<std::size_t>& input_shape) {
    std::vector<std::size_t> shape = input_shape;
    shape.insert(shape.begin(), 1);
    const Tensor probe = Tensor::zeros(shape);
    return forward(probe, false).cols();
}

FeatureExtractor FeatureExtractor::clone() const {
    FeatureExtractor copy = build_extractor(descriptor());
    auto src = const_cast<FeatureExtractor*>(this)->state();
    auto dst = copy.state();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].tensor = *src[i].tensor;
    return copy;
}

FeatureExtractor build_extractor(const std::string& descriptor) {
    std::vector<std::unique_ptr<Layer>> layers;
    std::istringstream is(descriptor);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "dense") {
            std::size_t in = 0, out = 0;
            ls >> in >> out;
            layers.push_back(std::make_unique<DenseLayer>(in, out));
        } else if (kind == "conv2d") {
            std::size_t cin = 0, cout = 0, k = 0, stride = 0, pad = 0;
            ls >> cin >> cout >> k >> stride >> pad;
            layers.push_back(std::make_unique<Conv2dLayer>(cin, cout, k, stride, pad));
        } else if (kind == "relu") {
            layers.push_back(std::make_unique<ReluLayer>());
        } else if (kind == "maxpool") {
            std::size_t k = 0;
            ls >> k;
            layers.push_back(std::make_unique<MaxPoolLayer>(k));
        } else if (kind == "avgpool_global") {
            layers.push_back(std::make_unique<GlobalAvgPoolLayer>());
        } else if (kind == "flatten") {
            layers.push_back(std::make_unique<FlattenLayer>());
        } else if (kind == "batchnorm") {
            std::size_t c = 0;
            ls >> c;
            layers.push_back(std::make_unique<BatchNormLayer>(c));
        } else {
            fail("unknown layer kind '" + kind + "' in architecture descriptor");
        }
        if (ls.fail()) fail("malformed architecture line: '" + line + "'");
    }
    if (layers.empty()) fail("empty architecture descriptor");
    return FeatureExtractor(std::move(layers));
}

std::string arch_preset(const std::string& name, std::size_t in_channels,
                        std::size_t image_size) {
    std::ostringstream os;
    if (name == "desk_cnn") {
        const std::size_t after_pool = (image_size / 2) / 2;
        os << "conv2d " << in_channels << " 8 3 1 1\n"
           << "batchnorm 8\n"
           << "relu\n"
           << "maxpool 2\n"
           << "conv2d 8 16 3 1 1\n"
           << "batchnorm 16\n"
           << "relu\n"
           << "maxpool 2\n"
           << "flatten\n"
           << "dense " << 16 * after_pool * after_pool << " 64\n"
           << "relu\n";
    } else if (name == "tiny_mlp") {
        os << "flatten\n"
           << "dense " << in_channels * image_size * image_size << " 32\n"
           << "relu\n"
           << "dense 32 16\n"
           << "relu\n";
    } else {
        fail("unknown architecture preset '" + name + "'");
    }
    return os.str();
}

void init_extractor(FeatureExtractor& fe, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = 0; i < fe.layer_count(); ++i) fe.layer(i).init_params(rng);
}

// ---------------------------------------------------------------------------
// ClassifierHead

InitMode init_mode_from_string(const std::string& s) {
    if (s == "zero") return InitMode::Zero;
    if (s == "normal") return InitMode::Normal;
    if (s == "kaiming_fan_in") return InitMode::KaimingFanIn;
    if (s == "kaiming_fan_out") return InitMode::KaimingFanOut;
    if (s == "xavier_uniform") return InitMode::XavierUniform;
    fail("unknown init mode '" + s + "'");
}

std::string to_string(InitMode m) {
    switch (m) {
        case InitMode::Zero: return "zero";
        case InitMode::Normal: return "normal";
        case InitMode::KaimingFanIn: return "kaiming_fan_in";
        case InitMode::KaimingFanOut: return "kaiming_fan_out";
        case InitMode::XavierUniform: return "xavier_uniform";
    }
    fail("bad init mode");
}

ClassifierHead::ClassifierHead(std::size_t n_classes, std::size_t dim)
    : w_({n_classes, dim}), grad_w_({n_classes, dim}) {}

void ClassifierHead::init(const HeadInit& init, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = n_classes(), d = dim();
    switch (init.mode) {
        case InitMode::Zero:
            w_.fill(init.epsilon);
            break;
        case InitMode::Normal:
            for (double& v : w_.vec()) v = rng.normal(0.0, init.sigma);
            break;
        case InitMode::KaimingFanIn:
            for (double& v : w_.vec()) v = rng.normal(0.0, std::sqrt(2.0 / static_cast<double>(d)));
            break;
        case InitMode::KaimingFanOut:
            for (double& v : w_.vec()) v = rng.normal(0.0, std::sqrt(2.0 / static_cast<double>(n)));
            break;
        case InitMode::XavierUniform: {
            // Symmetric uniform with variance 1/(6D): bound b = sqrt(1/(2D)).
            const double b = std::sqrt(1.0 / (2.0 * static_cast<double>(d)));
            for (double& v : w_.vec()) v = rng.uniform(-b, b);
            break;
        }
    }
    grad_w_.fill(0.0);
}

Tensor ClassifierHead::forward(const Tensor& features) const {
    if (features.ndim() != 2 || features.cols() != dim())
        fail("head: expected [Mx" + std::to_string(dim()) + "] features, got " +
             shape_str(features));
    const std::size_t m = features.rows(), n = n_classes(), d = dim();
    Tensor z({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t c = 0; c < n; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += features.at(i, j) * w_.at(c, j);
            z.at(i, c) = acc;
        }
    require_finite(z, "head forward");
    return z;
}

Tensor ClassifierHead::backward(const Tensor& features, const Tensor& delta) {
    HeadGrads grads = head_gradients(w_, features, delta);
    for (std::size_t i = 0; i < grad_w_.numel(); ++i) grad_w_[i] += grads.grad_w[i];
    return std::move(grads.grad_a);
}

HeadGrads head_gradients(const Tensor& w, const Tensor& features, const Tensor& delta) {
    const std::size_t m = features.rows(), d = features.cols(), n = w.rows();
    if (w.cols() != d || delta.rows() != m || delta.cols() != n)
        fail("head backward: shape mismatch A=" + shape_str(features) +
             " Delta=" + shape_str(delta) + " W=" + shape_str(w));
    const double inv_m = 1.0 / static_cast<double>(m);
    HeadGrads out{Tensor({n, d}), Tensor({m, d})};
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t c = 0; c < n; ++c) {
            const double dv = delta.at(i, c) * inv_m;
            for (std::size_t j = 0; j < d; ++j) {
                out.grad_w.at(c, j) -= dv * features.at(i, j);
                out.grad_a.at(i, j) -= dv * w.at(c, j);
            }
        }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) fail("checkpoint: truncated file");
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    const auto len = read_pod<std::uint32_t>(is);
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) fail("checkpoint: truncated file");
    return s;
}

constexpr char kMagic[8] = {'F', 'T', 'L', 'C', 'K', 'P', 'T', '1'};

}  // namespace

void Checkpoint::save(std::ostream& os) const {
    os.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(os, version);
    write_pod<std::uint64_t>(os, seed);
    write_string(os, arch);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        write_string(os, name);
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(tensor.ndim()));
        for (std::size_t e : tensor.shape()) write_pod<std::uint64_t>(os, e);
        os.write(reinterpret_cast<const char*>(tensor.data()),
                 static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
    }
    if (!os) fail("checkpoint: write failed");
}

Checkpoint Checkpoint::load(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || !std::equal(magic, magic + 8, kMagic)) fail("checkpoint: bad magic");
    Checkpoint ckpt;
    ckpt.version = read_pod<std::uint32_t>(is);
    if (ckpt.version != 1) fail("checkpoint: unsupported version");
    ckpt.seed = read_pod<std::uint64_t>(is);
    ckpt.arch = read_string(is);
    const auto count = read_pod<std::uint32_t>(is);
    ckpt.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = read_string(is);
        const auto ndim = read_pod<std::uint32_t>(is);
        std::vector<std::size_t> shape(ndim);
        for (auto& e : shape) e = static_cast<std::size_t>(read_pod<std::uint64_t>(is));
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!is) fail("checkpoint: truncated tensor payload");
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

void Checkpoint::save_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("checkpoint: cannot open '" + path + "' for writing");
    save(os);
}

Checkpoint Checkpoint::load_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("checkpoint: cannot open '" + path + "'");
    return load(is);
}

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

Checkpoint make_checkpoint(FeatureExtractor& fe, const ClassifierHead& head,
                           const ClassifierHead* source_head, std::uint64_t seed) {
    Checkpoint ckpt;
    ckpt.seed = seed;
    ckpt.arch = fe.descriptor();
    for (NamedTensor nt : fe.state()) ckpt.tensors.emplace_back(nt.name, *nt.tensor);
    ckpt.tensors.emplace_back("head.w", head.w());
    if (source_head) ckpt.tensors.emplace_back("source_head.w", source_head->w());
    return ckpt;
}

RestoredModel restore_model(const Checkpoint& ckpt) {
    RestoredModel model;
    model.seed = ckpt.seed;
    model.extractor = build_extractor(ckpt.arch);
    for (NamedTensor nt : model.extractor.state()) {
        const Tensor* stored = ckpt.find(nt.name);
        if (!stored) fail("checkpoint: missing tensor '" + nt.name + "'");
        if (!stored->same_shape(*nt.tensor))
            fail("checkpoint: shape mismatch for '" + nt.name + "'");
        *nt.tensor = *stored;
    }
    const Tensor* head_w = ckpt.find("head.w");
    if (!head_w) fail("checkpoint: missing tensor 'head.w'");
    model.head = ClassifierHead(head_w->rows(), head_w->cols());
    model.head.w() = *head_w;
    if (const Tensor* src = ckpt.find("source_head.w")) {
        model.source_head = ClassifierHead(src->rows(), src->cols());
        model.source_head->w() = *src;
    }
    return model;
}

double topk_accuracy(const Tensor& scores, const std::vector<int>& labels, std::size_t k) {
    const std::size_t m = scores.rows(), n = scores.cols();
    if (labels.size() != m) fail("topk_accuracy: label count mismatch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= n)
            fail("topk_accuracy: label out of range");
        const double s = scores.at(i, static_cast<std::size_t>(label));
        std::size_t rank = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (scores.at(i, j) > s) ++rank;
            else if (scores.at(i, j) == s && j < static_cast<std::size_t>(label)) ++rank;
        }
        if (rank < k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(m);
}

}  // namespace ftlab
