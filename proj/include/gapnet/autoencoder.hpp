#pragma once

#include "gapnet/nn/checkpoint.hpp"
#include "gapnet/nn/layers.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace gapnet {

using nn::Index;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Architecture hyperparameters of the convolutional autoencoder family.
struct AutoencoderConfig {
    Index n_outer = 1;
    Index n_reduce = 0;
    Index n_inner = 0;
    Index d_ch = 64;
    Index n_days = 1;
    bool use_posenc = false;
    bool include_masks = true;
    double dropout_p = 0.0;
    Index width = 32;
    Index height = 128;
    Index kernel = 5;

    Index depth() const { return n_outer + n_reduce + n_inner; }
    Index input_channels() const { return n_days * (include_masks ? 2 : 1) + (use_posenc ? 2 : 0); }
    /// Throws ConfigError naming the violated constraint.
    void validate() const;
    /// Short tag such as "o2r1i0".
    std::string label() const;
};

/// Parses a label produced by AutoencoderConfig::label() onto `base`.
AutoencoderConfig config_from_label(const std::string& label, AutoencoderConfig base);

/// Every (n_outer, n_reduce, n_inner) with n_outer >= 1, 0 <= n_reduce <= 5,
/// n_inner >= 0 and 1 <= sum <= 10, applied onto `base`.
std::vector<AutoencoderConfig> enumerate_configs(const AutoencoderConfig& base);

/// Number of convolution plus transposed-convolution layers.
inline Index conv_layer_count(const AutoencoderConfig& c) { return 2 * c.depth() + 3; }

inline Index latent_dim(const AutoencoderConfig& c) {
    return c.d_ch * (c.width >> c.n_reduce) * (c.height >> c.n_reduce);
}

/// Conv/tconv weights and biases plus batchnorm scale and shift.
Index param_count(const AutoencoderConfig& c);

/// Two channels sweeping linearly from -1 to 1: channel 0 across columns,
/// channel 1 across rows. Returned as a 1 x 2 x height x width tensor.
template <typename Scalar>
nn::Tensor<Scalar> positional_encoding(Index width, Index height) {
    if (width < 2 || height < 2) throw ConfigError("positional_encoding: width and height must be >= 2");
    nn::Tensor<Scalar> out(1, 2, height, width);
    for (Index y = 0; y < height; ++y) {
        for (Index x = 0; x < width; ++x) {
            out(0, 0, y, x) = static_cast<Scalar>(-1.0 + 2.0 * static_cast<double>(x) / static_cast<double>(width - 1));
            out(0, 1, y, x) = static_cast<Scalar>(-1.0 + 2.0 * static_cast<double>(y) / static_cast<double>(height - 1));
        }
    }
    return out;
}

/// Encoder: channel-lifting conv, n_outer same-size convs, n_reduce stride-2
/// convs, n_inner same-size convs, each followed by SELU and batchnorm. Then
/// dropout, a mirrored decoder built from transposed convolutions, and a
/// final single-channel transposed convolution with no activation.
template <typename Scalar>
class Autoencoder {
public:
    Autoencoder(const AutoencoderConfig& config, std::uint64_t rng_seed) : config_(config) {
        config_.validate();
        std::mt19937_64 rng(rng_seed);
        const Index d = config_.d_ch;
        const Index k = config_.kernel;
        auto block = [&](const std::string& name, auto conv) {
            layers_.add(std::move(conv)).set_name(name + ".conv");
            layers_.template emplace<nn::Selu<Scalar>>(name + ".selu");
            layers_.template emplace<nn::BatchNorm2d<Scalar>>(name + ".bn", d);
        };
        using Conv = nn::Conv2d<Scalar>;
        using TConv = nn::TransposedConv2d<Scalar>;
        block("enc.first", std::make_unique<Conv>(config_.input_channels(), d, rng, k, 1));
        for (Index i = 0; i < config_.n_outer; ++i)
            block("enc.outer" + std::to_string(i), std::make_unique<Conv>(d, d, rng, k, 1));
        for (Index i = 0; i < config_.n_reduce; ++i)
            block("enc.reduce" + std::to_string(i), std::make_unique<Conv>(d, d, rng, k, 2));
        for (Index i = 0; i < config_.n_inner; ++i)
            block("enc.inner" + std::to_string(i), std::make_unique<Conv>(d, d, rng, k, 1));
        latent_layer_ = layers_.size();
        dropout_ = &layers_.template emplace<nn::Dropout<Scalar>>("dropout", config_.dropout_p, rng());
        for (Index i = 0; i < config_.n_inner; ++i)
            block("dec.inner" + std::to_string(i), std::make_unique<TConv>(d, d, rng, k, 1));
        for (Index i = 0; i < config_.n_reduce; ++i)
            block("dec.expand" + std::to_string(i), std::make_unique<TConv>(d, d, rng, k, 2));
        for (Index i = 0; i < config_.n_outer; ++i)
            block("dec.outer" + std::to_string(i), std::make_unique<TConv>(d, d, rng, k, 1));
        block("dec.first", std::make_unique<TConv>(d, d, rng, k, 1));
        layers_.add(std::make_unique<TConv>(d, 1, rng, k, 1)).set_name("dec.out.conv");
    }

    const AutoencoderConfig& config() const { return config_; }
    nn::Sequential<Scalar>& layers() { return layers_; }

    nn::Shape input_shape(Index batch) const {
        return {batch, config_.input_channels(), config_.height, config_.width};
    }

    nn::Tensor<Scalar> forward(const nn::Tensor<Scalar>& x, bool train) {
        if (x.c() != config_.input_channels() || x.h() != config_.height || x.w() != config_.width) {
            throw nn::ShapeError("autoencoder: expected input " + nn::to_string(input_shape(x.n())) +
                                 ", got " + nn::to_string(x.shape()));
        }
        return layers_.forward(x, train);
    }

    nn::Tensor<Scalar> backward(const nn::Tensor<Scalar>& dy) { return layers_.backward(dy); }

    /// Output of the encoder (input to dropout) for the given input.
    nn::Tensor<Scalar> encode(const nn::Tensor<Scalar>& x) {
        nn::Tensor<Scalar> h = x;
        for (std::size_t i = 0; i < latent_layer_; ++i) h = layers_[i].forward(h, false);
        return h;
    }

    void set_dropout(double p) { dropout_->set_p(p); }
    void reseed_dropout(std::uint64_t seed) { dropout_->reseed(seed); }
    nn::Dropout<Scalar>& dropout() { return *dropout_; }

    std::vector<nn::Param<Scalar>*> parameters() { return layers_.parameters(); }

    Index parameter_count() {
        Index n = 0;
        for (auto* p : layers_.parameters()) n += p->value.size();
        return n;
    }

    /// Parameters then buffers, named "<layer>.<param>".
    std::vector<nn::NamedArray> state() {
        std::vector<nn::NamedArray> out;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto& layer = layers_[i];
            auto emit = [&](nn::Param<Scalar>* p) {
                nn::NamedArray a;
                a.name = layer.name() + "." + p->name;
                a.shape = {static_cast<std::uint32_t>(p->value.rows()),
                           static_cast<std::uint32_t>(p->value.cols())};
                a.data.assign(p->value.data(), p->value.data() + p->value.size());
                out.push_back(std::move(a));
            };
            for (auto* p : layer.parameters()) emit(p);
            for (auto* p : layer.buffers()) emit(p);
        }
        return out;
    }

    void load_state(const std::vector<nn::NamedArray>& arrays) {
        std::size_t at = 0;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto& layer = layers_[i];
            auto take = [&](nn::Param<Scalar>* p) {
                const std::string name = layer.name() + "." + p->name;
                if (at >= arrays.size() || arrays[at].name != name) {
                    throw ConfigError("load_state: expected array " + name);
                }
                const auto& a = arrays[at++];
                if (a.shape.size() != 2 || a.shape[0] != p->value.rows() || a.shape[1] != p->value.cols()) {
                    throw ConfigError("load_state: shape mismatch for " + name);
                }
                for (Index j = 0; j < p->value.size(); ++j) {
                    p->value.data()[j] = static_cast<Scalar>(a.data[static_cast<std::size_t>(j)]);
                }
            };
            for (auto* p : layer.parameters()) take(p);
            for (auto* p : layer.buffers()) take(p);
        }
        if (at != arrays.size()) throw ConfigError("load_state: unexpected trailing arrays");
    }

private:
    AutoencoderConfig config_;
    nn::Sequential<Scalar> layers_;
    nn::Dropout<Scalar>* dropout_ = nullptr;
    std::size_t latent_layer_ = 0;
};

}  // namespace gapnet
