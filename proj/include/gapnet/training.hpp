#pragma once

#include "gapnet/autoencoder.hpp"
#include "gapnet/grid.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gapnet {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NoiseParams {
    double mu = -0.0365;
    double sigma = 0.683;
    void validate() const {
        if (!(sigma > 0.0)) throw TrainingError("noise sigma must be > 0");
    }
};

/// Copies `values`, replacing unobserved master cells by N(mu, sigma^2) draws
/// taken in row-major order, and zeroing cells outside the master region.
template <class V, class M>
FieldPlane impute_noise(const Eigen::ArrayBase<V>& values, const Eigen::ArrayBase<M>& mask,
                        const MaskPlane& master, const NoiseParams& noise, std::mt19937_64& rng) {
    if (values.rows() != mask.rows() || values.cols() != mask.cols() ||
        values.rows() != master.rows() || values.cols() != master.cols()) {
        throw GridError("impute_noise: shape mismatch");
    }
    std::normal_distribution<double> normal(noise.mu, noise.sigma);
    FieldPlane out(values.rows(), values.cols());
    for (Index r = 0; r < out.rows(); ++r) {
        for (Index c = 0; c < out.cols(); ++c) {
            if (!master(r, c)) {
                out(r, c) = 0.0f;
            } else if (mask(r, c)) {
                out(r, c) = values(r, c);
            } else {
                out(r, c) = static_cast<float>(normal(rng));
            }
        }
    }
    return out;
}

/// Cube version; day t draws from a generator seeded by (seed, t) so any
/// subset of days reproduces the same noise. The result carries `mask`.
AnomalyCube impute_noise(const AnomalyCube& cube, const MaskCube& mask, const MaskPlane& master,
                         const NoiseParams& noise, std::uint64_t seed);

enum class LossNorm { l1, l2 };

const char* to_string(LossNorm norm);
LossNorm parse_loss_norm(const std::string& text);

/// ||(y - o) .* mask||_norm divided by the number of observed cells.
template <class Y, class O, class M>
double masked_distance(const Eigen::ArrayBase<Y>& y, const Eigen::ArrayBase<O>& o,
                       const Eigen::ArrayBase<M>& mask, LossNorm norm) {
    const auto m = mask.template cast<double>();
    const double count = m.sum();
    if (count <= 0.0) throw TrainingError("masked_distance: no observed cells");
    const auto diff = (y.template cast<double>() - o.template cast<double>()) * m;
    if (norm == LossNorm::l1) return diff.abs().sum() / count;
    return std::sqrt(diff.square().sum()) / count;
}

/// Gradient of masked_distance with respect to `o`, written into `grad`.
template <class Y, class O, class M, class G>
void masked_distance_grad(const Eigen::ArrayBase<Y>& y, const Eigen::ArrayBase<O>& o,
                          const Eigen::ArrayBase<M>& mask, LossNorm norm, G&& grad) {
    using Scalar = typename std::decay_t<G>::Scalar;
    const auto m = mask.template cast<double>();
    const double count = m.sum();
    if (count <= 0.0) throw TrainingError("masked_distance: no observed cells");
    const Eigen::ArrayXXd diff = (o.template cast<double>() - y.template cast<double>()) * m;
    if (norm == LossNorm::l1) {
        grad = (diff.sign() / count).template cast<Scalar>();
    } else {
        const double n = std::sqrt(diff.square().sum());
        if (n == 0.0) {
            grad.setZero();
        } else {
            grad = (diff / (count * n)).template cast<Scalar>();
        }
    }
}

/// Observed anomalies with the original mask, the additionally damaged masks
/// m' (m' <= original mask) and the master region.
struct TrainingData {
    const AnomalyCube& observed;
    const MaskCube& extra;
    const MaskPlane& master;
};

/// Days feeding the input of day n: N_days centred on n, clamped to the record.
std::vector<Index> window_days(Index day, Index n_days, Index total_days);

/// Writes the input channels of day n into `dst` (one sample, C x H x W):
/// noise-imputed anomalies under `masks`, then the masks, then positional
/// encoding, as selected by `config`.
void fill_input(const AnomalyCube& observed, const MaskCube& masks, const MaskPlane& master,
                const AutoencoderConfig& config, Index day, const NoiseParams& noise,
                std::uint64_t seed, float* dst);

struct Example {
    nn::Tensor<float> input;  // 1 x C x H x W
    FieldPlane target;        // x_orig(n)
    MaskPlane loss_mask;      // m_orig(n)
    MaskPlane hidden_mask;    // m_orig(n) - m'(n)
};

Example make_example(const TrainingData& data, Index day, const AutoencoderConfig& config,
                     const NoiseParams& noise, std::uint64_t seed);

/// Throws TrainingError when some m' cell is set where the original mask is not.
void check_extra_masks(const TrainingData& data);

struct TrainOptions {
    Index epochs = 50;
    Index batch_size = 32;
    double max_lr = 0.003;
    double weight_decay = 0.3;
    double dropout = 0.0;
    double beta1 = 0.95;
    double beta2 = 0.999;
    double eps = 1e-5;
    double lookahead_alpha = 0.5;
    Index lookahead_k = 6;
    double flat_fraction = 0.72;
    LossNorm loss = LossNorm::l1;
    NoiseParams noise;
};

struct EpochLog {
    Index epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_hidden_loss = 0.0;
    double lr = 0.0;
};

/// "epoch,train_l1,val_l1,val_hidden_l1,lr" lines, header first.
std::string format_log(const std::vector<EpochLog>& log, LossNorm norm = LossNorm::l1);

struct ValidationLosses {
    double loss = 0.0;         // on m_orig, training norm
    double hidden_loss = 0.0;  // on m_orig - m', training norm; NaN if nothing is hidden
    double l1 = 0.0;
    double hidden_l1 = 0.0;
};

/// Eval-mode losses averaged over `days`, noise drawn from `seed`.
ValidationLosses evaluate(Autoencoder<float>& model, const TrainingData& data,
                          const std::vector<Index>& days, const NoiseParams& noise, LossNorm norm,
                          std::uint64_t seed);

struct TrainResult {
    std::unique_ptr<Autoencoder<float>> model;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_hidden_loss = 0.0;
    double val_l1 = 0.0;
    double val_hidden_l1 = 0.0;
    std::vector<EpochLog> log;

    double ratio() const { return val_loss / train_loss; }
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Minibatch training over the split's training days. train_loss is the mean
/// train-mode batch loss of the final epoch; a zero-epoch run reports eval-mode
/// losses of the initialization instead.
TrainResult train_model(const TrainingData& data, const SplitSpec& split,
                        const AutoencoderConfig& config, const TrainOptions& options,
                        std::uint64_t seed, const EpochCallback& on_epoch = {});

struct Regularization {
    double dropout = 0.0;
    double weight_decay = 0.3;
    Index batch_size = 32;
    friend bool operator==(const Regularization&, const Regularization&) = default;
};

struct TuneOptions {
    Index max_iterations = 15;
    double band_low = 1.0;
    double band_high = 1.05;
    double dropout_step = 0.05;
    double max_dropout = 0.5;
    double weight_decay_factor = 2.0;
    double min_weight_decay = 0.01;
    double max_weight_decay = 100.0;
    Index batch_step = 4;
    Index min_batch = 8;
};

enum class TuneStatus { under, over, well_trained, failed };
const char* to_string(TuneStatus status);

struct TuneIteration {
    Regularization hyper;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_hidden_loss = 0.0;
    std::vector<EpochLog> log;
    double ratio() const { return val_loss / train_loss; }
};

struct TuningState {
    Index iteration = 0;
    Regularization current;
    std::vector<TuneIteration> history;
    TuneStatus status = TuneStatus::under;
    Index selected = -1;
};

/// Classifies a ratio against the band.
TuneStatus classify_ratio(double ratio, const TuneOptions& options);

/// Next hyperparameters after the last entry of `history`: a decrease when
/// the ratio fell below the band, an increase above it, and an
/// inverse-distance interpolation of the last two iterations when they
/// straddle the band.
Regularization next_regularization(const std::vector<TuneIteration>& history,
                                   const TuneOptions& options);

struct TuneResult {
    TuningState state;
    std::unique_ptr<Autoencoder<float>> model;  // of the selected iteration
};

using IterationCallback = std::function<void(Index, const TuneIteration&)>;

TuneResult tune_regularization(const TrainingData& data, const SplitSpec& split,
                               const AutoencoderConfig& config, const TrainOptions& base,
                               const TuneOptions& options, std::uint64_t seed,
                               const IterationCallback& on_iteration = {});

}  // namespace gapnet
