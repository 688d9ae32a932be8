#pragma once

#include "gapnet/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace gapnet::nn {

enum class LayerKind { conv, tconv, selu, batchnorm, dropout };

const char* to_string(LayerKind kind);

/// Trainable (or buffered) parameter with a same-shaped gradient slot.
template <typename Scalar>
struct Param {
    std::string name;
    Matrix<Scalar> value;
    Matrix<Scalar> grad;

    Param() = default;
    Param(std::string n, Matrix<Scalar> v)
        : name(std::move(n)), value(std::move(v)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}
};

constexpr double kSeluLambda = 1.0507009873554804934193349852946;
constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

template <typename Scalar>
class Layer {
public:
    virtual ~Layer() = default;

    virtual LayerKind kind() const = 0;
    virtual Shape output_shape(const Shape& in) const = 0;
    virtual Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) = 0;
    /// Returns the input gradient and accumulates parameter gradients.
    virtual Tensor<Scalar> backward(const Tensor<Scalar>& dy) = 0;
    virtual std::vector<Param<Scalar>*> parameters() { return {}; }
    /// Non-trainable state that belongs in checkpoints (running statistics).
    virtual std::vector<Param<Scalar>*> buffers() { return {}; }

    const std::string& name() const { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }

    void zero_grad() {
        for (auto* p : parameters()) p->grad.setZero();
    }

protected:
    [[noreturn]] void fail(const std::string& what) const {
        throw ShapeError(name_ + " (" + to_string(kind()) + "): " + what);
    }
    void require_cache(bool cached) const {
        if (!cached) fail("backward called without a preceding forward");
    }

private:
    std::string name_ = "layer";
};

inline const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::tconv: return "tconv";
        case LayerKind::selu: return "selu";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::dropout: return "dropout";
    }
    return "?";
}

namespace detail {

// Output columns [lo, hi) whose input column ox * stride + offset lies in [0, w).
inline std::pair<Index, Index> valid_span(Index w, Index wo, Index stride, Index offset) {
    Index lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
    Index hi = w - offset <= 0 ? 0 : (w - offset + stride - 1) / stride;
    lo = std::min(lo, wo);
    hi = std::clamp(hi, lo, wo);
    return {lo, hi};
}

// Unfolds `channels` planes of h x w (contiguous, plane after plane) into an
// (ho*wo) x (channels*k*k) matrix for a k x k cross-correlation.
template <typename Scalar>
void im2col(const Scalar* in, Index channels, Index h, Index w, Index k, Index stride, Index pad,
            Index ho, Index wo, Matrix<Scalar>& cols) {
    cols.resize(ho * wo, channels * k * k);
    for (Index ci = 0; ci < channels; ++ci) {
        const Scalar* src = in + ci * h * w;
        for (Index ky = 0; ky < k; ++ky) {
            for (Index kx = 0; kx < k; ++kx) {
                Scalar* dst = cols.col((ci * k + ky) * k + kx).data();
                for (Index oy = 0; oy < ho; ++oy) {
                    const Index iy = oy * stride + ky - pad;
                    Scalar* row = dst + oy * wo;
                    if (iy < 0 || iy >= h) {
                        std::fill(row, row + wo, Scalar(0));
                        continue;
                    }
                    const Scalar* line = src + iy * w;
                    const auto [lo, hi] = valid_span(w, wo, stride, kx - pad);
                    std::fill(row, row + lo, Scalar(0));
                    if (stride == 1) {
                        std::copy(line + lo + kx - pad, line + hi + kx - pad, row + lo);
                    } else {
                        for (Index ox = lo; ox < hi; ++ox) row[ox] = line[ox * stride + kx - pad];
                    }
                    std::fill(row + hi, row + wo, Scalar(0));
                }
            }
        }
    }
}

// Adjoint of im2col: scatters columns back and accumulates into `out`.
template <typename Scalar>
void col2im(const Matrix<Scalar>& cols, Index channels, Index h, Index w, Index k, Index stride,
            Index pad, Index ho, Index wo, Scalar* out) {
    for (Index ci = 0; ci < channels; ++ci) {
        Scalar* dst = out + ci * h * w;
        for (Index ky = 0; ky < k; ++ky) {
            for (Index kx = 0; kx < k; ++kx) {
                const Scalar* src = cols.col((ci * k + ky) * k + kx).data();
                for (Index oy = 0; oy < ho; ++oy) {
                    const Index iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    Scalar* line = dst + iy * w;
                    const Scalar* row = src + oy * wo;
                    const auto [lo, hi] = valid_span(w, wo, stride, kx - pad);
                    if (stride == 1) {
                        Scalar* at = line + kx - pad;
                        for (Index ox = lo; ox < hi; ++ox) at[ox] += row[ox];
                    } else {
                        for (Index ox = lo; ox < hi; ++ox) line[ox * stride + kx - pad] += row[ox];
                    }
                }
            }
        }
    }
}

template <typename Scalar>
Matrix<Scalar> lecun_normal(Index rows, Index cols, double fan_in, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(fan_in));
    Matrix<Scalar> m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(normal(rng));
    }
    return m;
}

}  // namespace detail

/// 2-D cross-correlation with symmetric zero padding. Weight layout is
/// (in * k * k) x out, i.e. an [out][in][k][k] array in column-major order.
template <typename Scalar>
class Conv2d final : public Layer<Scalar> {
public:
    Conv2d(Index in_channels, Index out_channels, std::mt19937_64& rng, Index kernel = 5,
           Index stride = 1, Index padding = -1)
        : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride),
          pad_(padding < 0 ? kernel / 2 : padding),
          weight_("weight", detail::lecun_normal<Scalar>(in_channels * kernel * kernel, out_channels,
                                                         static_cast<double>(in_channels * kernel * kernel), rng)),
          bias_("bias", Matrix<Scalar>::Zero(out_channels, 1)) {}

    LayerKind kind() const override { return LayerKind::conv; }
    Index in_channels() const { return in_; }
    Index out_channels() const { return out_; }
    Index kernel() const { return k_; }
    Index stride() const { return stride_; }

    Param<Scalar>& weight() { return weight_; }
    Param<Scalar>& bias() { return bias_; }

    Shape output_shape(const Shape& in) const override {
        if (in.c != in_) {
            this->fail("expected " + std::to_string(in_) + " input channels, got " + to_string(in));
        }
        if (stride_ == 2 && (in.h % 2 != 0 || in.w % 2 != 0)) {
            this->fail("stride-2 convolution needs even spatial dims, got " + to_string(in));
        }
        const Index ho = (in.h + 2 * pad_ - k_) / stride_ + 1;
        const Index wo = (in.w + 2 * pad_ - k_) / stride_ + 1;
        if (ho <= 0 || wo <= 0) this->fail("input too small: " + to_string(in));
        return {in.n, out_, ho, wo};
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool) override {
        const Shape os = output_shape(x.shape());
        Tensor<Scalar> y(os);
        for (Index i = 0; i < x.n(); ++i) {
            detail::im2col(x.data() + i * x.sample_size(), in_, x.h(), x.w(), k_, stride_, pad_,
                           os.h, os.w, cols_);
            auto yi = y.sample(i);
            yi.noalias() = cols_ * weight_.value;
            yi.rowwise() += bias_.value.col(0).transpose();
        }
        input_ = x;
        cached_ = true;
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
        this->require_cache(cached_);
        const Shape os = output_shape(input_.shape());
        if (dy.shape() != os) this->fail("upstream gradient shape " + to_string(dy.shape()));
        Tensor<Scalar> dx(input_.shape());
        Matrix<Scalar> dcols;
        for (Index i = 0; i < dy.n(); ++i) {
            detail::im2col(input_.data() + i * input_.sample_size(), in_, input_.h(), input_.w(), k_,
                           stride_, pad_, os.h, os.w, cols_);
            const auto dyi = dy.sample(i);
            weight_.grad.noalias() += cols_.transpose() * dyi;
            bias_.grad.col(0) += dyi.colwise().sum().transpose();
            dcols.noalias() = dyi * weight_.value.transpose();
            detail::col2im(dcols, in_, input_.h(), input_.w(), k_, stride_, pad_, os.h, os.w,
                           dx.data() + i * dx.sample_size());
        }
        return dx;
    }

    std::vector<Param<Scalar>*> parameters() override { return {&weight_, &bias_}; }

private:
    Index in_, out_, k_, stride_, pad_;
    Param<Scalar> weight_;
    Param<Scalar> bias_;
    Tensor<Scalar> input_;
    Matrix<Scalar> cols_;
    bool cached_ = false;
};

/// Transposed convolution: the adjoint of Conv2d(out -> in) with the same
/// kernel, stride and padding, plus a bias. Stride 2 doubles spatial dims.
/// Weight layout is (out * k * k) x in, i.e. an [in][out][k][k] array.
template <typename Scalar>
class TransposedConv2d final : public Layer<Scalar> {
public:
    TransposedConv2d(Index in_channels, Index out_channels, std::mt19937_64& rng, Index kernel = 5,
                     Index stride = 1, Index padding = -1)
        : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride),
          pad_(padding < 0 ? kernel / 2 : padding),
          weight_("weight",
                  detail::lecun_normal<Scalar>(out_channels * kernel * kernel, in_channels,
                                               static_cast<double>(in_channels * kernel * kernel) /
                                                   static_cast<double>(stride * stride),
                                               rng)),
          bias_("bias", Matrix<Scalar>::Zero(out_channels, 1)) {}

    LayerKind kind() const override { return LayerKind::tconv; }
    Index in_channels() const { return in_; }
    Index out_channels() const { return out_; }
    Index stride() const { return stride_; }

    Param<Scalar>& weight() { return weight_; }
    Param<Scalar>& bias() { return bias_; }

    Shape output_shape(const Shape& in) const override {
        if (in.c != in_) {
            this->fail("expected " + std::to_string(in_) + " input channels, got " + to_string(in));
        }
        const Index ho = (in.h - 1) * stride_ - 2 * pad_ + k_ + (stride_ - 1);
        const Index wo = (in.w - 1) * stride_ - 2 * pad_ + k_ + (stride_ - 1);
        if (ho <= 0 || wo <= 0) this->fail("input too small: " + to_string(in));
        return {in.n, out_, ho, wo};
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool) override {
        const Shape os = output_shape(x.shape());
        Tensor<Scalar> y(os);
        Matrix<Scalar> cols;
        for (Index i = 0; i < x.n(); ++i) {
            cols.noalias() = x.sample(i) * weight_.value.transpose();
            auto yi = y.sample(i);
            detail::col2im(cols, out_, os.h, os.w, k_, stride_, pad_, x.h(), x.w(),
                           y.data() + i * y.sample_size());
            yi.rowwise() += bias_.value.col(0).transpose();
        }
        input_ = x;
        cached_ = true;
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
        this->require_cache(cached_);
        const Shape os = output_shape(input_.shape());
        if (dy.shape() != os) this->fail("upstream gradient shape " + to_string(dy.shape()));
        Tensor<Scalar> dx(input_.shape());
        for (Index i = 0; i < dy.n(); ++i) {
            detail::im2col(dy.data() + i * dy.sample_size(), out_, os.h, os.w, k_, stride_, pad_,
                           input_.h(), input_.w(), cols_);
            const auto xi = input_.sample(i);
            dx.sample(i).noalias() = cols_ * weight_.value;
            weight_.grad.noalias() += cols_.transpose() * xi;
            bias_.grad.col(0) += dy.sample(i).colwise().sum().transpose();
        }
        return dx;
    }

    std::vector<Param<Scalar>*> parameters() override { return {&weight_, &bias_}; }

private:
    Index in_, out_, k_, stride_, pad_;
    Param<Scalar> weight_;
    Param<Scalar> bias_;
    Tensor<Scalar> input_;
    Matrix<Scalar> cols_;
    bool cached_ = false;
};

template <typename Scalar>
class Selu final : public Layer<Scalar> {
public:
    LayerKind kind() const override { return LayerKind::selu; }
    Shape output_shape(const Shape& in) const override { return in; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool) override {
        const auto lambda = static_cast<Scalar>(kSeluLambda);
        const auto la = static_cast<Scalar>(kSeluLambda * kSeluAlpha);
        Tensor<Scalar> y(x.shape());
        y.flat() = x.flat().unaryExpr([&](Scalar v) {
            return v > Scalar(0) ? lambda * v : la * (std::exp(v) - Scalar(1));
        });
        input_ = x;
        cached_ = true;
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
        this->require_cache(cached_);
        if (dy.shape() != input_.shape()) this->fail("upstream gradient shape " + to_string(dy.shape()));
        const auto lambda = static_cast<Scalar>(kSeluLambda);
        const auto la = static_cast<Scalar>(kSeluLambda * kSeluAlpha);
        Tensor<Scalar> dx(dy.shape());
        dx.flat() = dy.flat().binaryExpr(input_.flat(), [&](Scalar g, Scalar v) {
            return v > Scalar(0) ? g * lambda : g * la * std::exp(v);
        });
        return dx;
    }

private:
    Tensor<Scalar> input_;
    bool cached_ = false;
};

/// Per-channel batch normalisation over (n, h, w). Train mode normalises with
/// biased batch statistics and updates running statistics (unbiased variance).
template <typename Scalar>
class BatchNorm2d final : public Layer<Scalar> {
public:
    explicit BatchNorm2d(Index channels, double momentum = 0.1, double eps = 1e-5)
        : channels_(channels), momentum_(momentum), eps_(eps),
          gamma_("gamma", Matrix<Scalar>::Ones(channels, 1)),
          beta_("beta", Matrix<Scalar>::Zero(channels, 1)),
          running_mean_("running_mean", Matrix<Scalar>::Zero(channels, 1)),
          running_var_("running_var", Matrix<Scalar>::Ones(channels, 1)) {}

    LayerKind kind() const override { return LayerKind::batchnorm; }
    Param<Scalar>& gamma() { return gamma_; }
    Param<Scalar>& beta() { return beta_; }
    Param<Scalar>& running_mean() { return running_mean_; }
    Param<Scalar>& running_var() { return running_var_; }

    Shape output_shape(const Shape& in) const override {
        if (in.c != channels_) {
            this->fail("expected " + std::to_string(channels_) + " channels, got " + to_string(in));
        }
        return in;
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) override {
        output_shape(x.shape());
        const Index count = x.n() * x.plane();
        Vector<Scalar> mean(channels_), invstd(channels_);
        if (train) {
            if (count < 2) this->fail("train-mode batch statistics need at least 2 values per channel");
            for (Index ch = 0; ch < channels_; ++ch) {
                double s = 0.0;
                for (Index i = 0; i < x.n(); ++i) s += static_cast<double>(x.sample(i).col(ch).sum());
                const double m = s / static_cast<double>(count);
                double ss = 0.0;
                for (Index i = 0; i < x.n(); ++i) {
                    ss += static_cast<double>(
                        (x.sample(i).col(ch).array() - static_cast<Scalar>(m)).square().sum());
                }
                const double var = ss / static_cast<double>(count);
                mean[ch] = static_cast<Scalar>(m);
                invstd[ch] = static_cast<Scalar>(1.0 / std::sqrt(var + eps_));
                const double unbiased = ss / static_cast<double>(count - 1);
                running_mean_.value(ch, 0) = static_cast<Scalar>(
                    (1.0 - momentum_) * static_cast<double>(running_mean_.value(ch, 0)) + momentum_ * m);
                running_var_.value(ch, 0) = static_cast<Scalar>(
                    (1.0 - momentum_) * static_cast<double>(running_var_.value(ch, 0)) + momentum_ * unbiased);
            }
        } else {
            for (Index ch = 0; ch < channels_; ++ch) {
                mean[ch] = running_mean_.value(ch, 0);
                invstd[ch] = static_cast<Scalar>(
                    1.0 / std::sqrt(static_cast<double>(running_var_.value(ch, 0)) + eps_));
            }
        }
        xhat_ = Tensor<Scalar>(x.shape());
        Tensor<Scalar> y(x.shape());
        for (Index i = 0; i < x.n(); ++i) {
            for (Index ch = 0; ch < channels_; ++ch) {
                auto xh = xhat_.sample(i).col(ch);
                xh = (x.sample(i).col(ch).array() - mean[ch]) * invstd[ch];
                y.sample(i).col(ch) = xh.array() * gamma_.value(ch, 0) + beta_.value(ch, 0);
            }
        }
        invstd_ = invstd;
        train_ = train;
        cached_ = true;
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
        this->require_cache(cached_);
        if (dy.shape() != xhat_.shape()) this->fail("upstream gradient shape " + to_string(dy.shape()));
        Tensor<Scalar> dx(dy.shape());
        const auto count = static_cast<Scalar>(dy.n() * dy.plane());
        for (Index ch = 0; ch < channels_; ++ch) {
            Scalar sum_dy = 0;
            Scalar sum_dy_xhat = 0;
            for (Index i = 0; i < dy.n(); ++i) {
                sum_dy += dy.sample(i).col(ch).sum();
                sum_dy_xhat += dy.sample(i).col(ch).dot(xhat_.sample(i).col(ch));
            }
            gamma_.grad(ch, 0) += sum_dy_xhat;
            beta_.grad(ch, 0) += sum_dy;
            const Scalar g = gamma_.value(ch, 0) * invstd_[ch];
            for (Index i = 0; i < dy.n(); ++i) {
                if (train_) {
                    dx.sample(i).col(ch) =
                        (g / count) * (count * dy.sample(i).col(ch).array() - sum_dy -
                                       xhat_.sample(i).col(ch).array() * sum_dy_xhat);
                } else {
                    dx.sample(i).col(ch) = g * dy.sample(i).col(ch);
                }
            }
        }
        return dx;
    }

    std::vector<Param<Scalar>*> parameters() override { return {&gamma_, &beta_}; }
    std::vector<Param<Scalar>*> buffers() override { return {&running_mean_, &running_var_}; }

private:
    Index channels_;
    double momentum_;
    double eps_;
    Param<Scalar> gamma_, beta_, running_mean_, running_var_;
    Tensor<Scalar> xhat_;
    Vector<Scalar> invstd_;
    bool train_ = false;
    bool cached_ = false;
};

/// Inverted dropout: train mode zeroes each element with probability p and
/// scales survivors by 1/(1-p); eval mode is the identity.
template <typename Scalar>
class Dropout final : public Layer<Scalar> {
public:
    explicit Dropout(double p, std::uint64_t seed = 0) : p_(p), rng_(seed) {
        if (p < 0.0 || p >= 1.0) throw ShapeError("dropout: p must lie in [0, 1)");
    }

    LayerKind kind() const override { return LayerKind::dropout; }
    Shape output_shape(const Shape& in) const override { return in; }

    double p() const { return p_; }
    void set_p(double p) {
        if (p < 0.0 || p >= 1.0) throw ShapeError("dropout: p must lie in [0, 1)");
        p_ = p;
    }
    void reseed(std::uint64_t seed) { rng_.seed(seed); }
    /// Reuse the most recent mask on later train-mode calls (gradient checks).
    void freeze_mask(bool frozen) { frozen_ = frozen; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) override {
        train_ = train && p_ > 0.0;
        cached_ = true;
        if (!train_) return x;
        if (!frozen_ || mask_.size() != x.size()) {
            std::bernoulli_distribution keep(1.0 - p_);
            const auto scale = static_cast<Scalar>(1.0 / (1.0 - p_));
            mask_.resize(x.size());
            for (Index i = 0; i < mask_.size(); ++i) mask_[i] = keep(rng_) ? scale : Scalar(0);
        }
        Tensor<Scalar> y(x.shape());
        y.flat() = x.flat().cwiseProduct(mask_);
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
        this->require_cache(cached_);
        if (!train_) return dy;
        if (dy.size() != mask_.size()) this->fail("upstream gradient shape " + to_string(dy.shape()));
        Tensor<Scalar> dx(dy.shape());
        dx.flat() = dy.flat().cwiseProduct(mask_);
        return dx;
    }

private:
    double p_;
    std::mt19937_64 rng_;
    Vector<Scalar> mask_;
    bool frozen_ = false;
    bool train_ = false;
    bool cached_ = false;
};

/// Ordered layer pipeline.
template <typename Scalar>
class Sequential {
public:
    Layer<Scalar>& add(std::unique_ptr<Layer<Scalar>> layer) {
        layers_.push_back(std::move(layer));
        return *layers_.back();
    }

    template <typename L, typename... Args>
    L& emplace(std::string name, Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        layer->set_name(std::move(name));
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) {
        Tensor<Scalar> h = x;
        for (auto& layer : layers_) h = layer->forward(h, train);
        return h;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) {
        Tensor<Scalar> g = dy;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
        return g;
    }

    Shape output_shape(Shape in) const {
        for (const auto& layer : layers_) in = layer->output_shape(in);
        return in;
    }

    /// Parameters named "<layer>.<param>", in layer order.
    std::vector<Param<Scalar>*> parameters() {
        std::vector<Param<Scalar>*> out;
        for (auto& layer : layers_) {
            for (auto* p : layer->parameters()) out.push_back(p);
        }
        return out;
    }
    std::vector<Param<Scalar>*> buffers() {
        std::vector<Param<Scalar>*> out;
        for (auto& layer : layers_) {
            for (auto* p : layer->buffers()) out.push_back(p);
        }
        return out;
    }
    std::vector<std::string> parameter_names() {
        std::vector<std::string> out;
        for (auto& layer : layers_) {
            for (auto* p : layer->parameters()) out.push_back(layer->name() + "." + p->name);
        }
        return out;
    }

    void zero_grad() {
        for (auto& layer : layers_) layer->zero_grad();
    }

    std::size_t size() const { return layers_.size(); }
    Layer<Scalar>& operator[](std::size_t i) { return *layers_[i]; }
    const Layer<Scalar>& operator[](std::size_t i) const { return *layers_[i]; }

private:
    std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
};

}  // namespace gapnet::nn
