#include "gapnet/training.hpp"

#include "gapnet/nn/optim.hpp"
#include "gapnet/seed.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>

namespace gapnet {

AnomalyCube impute_noise(const AnomalyCube& cube, const MaskCube& mask, const MaskPlane& master,
                         const NoiseParams& noise, std::uint64_t seed) {
    noise.validate();
    if (!cube.mask().same_shape(mask)) throw GridError("impute_noise: cube and mask shapes differ");
    AnomalyCube out(cube.days(), cube.width(), cube.height());
    for (Index t = 0; t < cube.days(); ++t) {
        std::mt19937_64 rng(derive_seed(seed, "noise-day", static_cast<std::uint64_t>(t)));
        out.day(t) = impute_noise(cube.day(t), mask.day(t), master, noise, rng);
    }
    out.mask() = mask;
    return out;
}

const char* to_string(LossNorm norm) { return norm == LossNorm::l1 ? "l1" : "l2"; }

LossNorm parse_loss_norm(const std::string& text) {
    if (text == "l1" || text == "L1") return LossNorm::l1;
    if (text == "l2" || text == "L2") return LossNorm::l2;
    throw TrainingError("unknown loss norm '" + text + "' (expected l1 or l2)");
}

std::vector<Index> window_days(Index day, Index n_days, Index total_days) {
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(n_days));
    const Index first = day - (n_days - 1) / 2;
    for (Index k = 0; k < n_days; ++k) out.push_back(std::clamp(first + k, Index{0}, total_days - 1));
    return out;
}

void fill_input(const AnomalyCube& observed, const MaskCube& masks, const MaskPlane& master,
                const AutoencoderConfig& config, Index day, const NoiseParams& noise,
                std::uint64_t seed, float* dst) {
    const Index h = observed.height();
    const Index w = observed.width();
    if (h != config.height || w != config.width) {
        throw nn::ShapeError("fill_input: data is " + std::to_string(w) + "x" + std::to_string(h) +
                             " but the model expects " + std::to_string(config.width) + "x" +
                             std::to_string(config.height));
    }
    const Index plane = h * w;
    const auto days = window_days(day, config.n_days, observed.days());
    for (std::size_t k = 0; k < days.size(); ++k) {
        const Index t = days[k];
        std::mt19937_64 rng(derive_seed(seed, "noise-day", static_cast<std::uint64_t>(t)));
        Eigen::Map<FieldPlane>(dst + static_cast<Index>(k) * plane, h, w) =
            impute_noise(observed.day(t), masks.day(t), master, noise, rng);
        if (config.include_masks) {
            Eigen::Map<FieldPlane>(dst + (config.n_days + static_cast<Index>(k)) * plane, h, w) =
                (masks.day(t) * master).cast<float>();
        }
    }
    if (config.use_posenc) {
        const auto pe = positional_encoding<float>(w, h);
        const Index base = config.n_days * (config.include_masks ? 2 : 1);
        std::copy(pe.data(), pe.data() + 2 * plane, dst + base * plane);
    }
}

void check_extra_masks(const TrainingData& data) {
    const MaskCube& orig = data.observed.mask();
    if (!orig.same_shape(data.extra)) throw TrainingError("m' cube shape differs from the dataset");
    for (Index t = 0; t < orig.days(); ++t) {
        if ((data.extra.day(t) > orig.day(t)).any()) {
            throw TrainingError("m' exceeds the original mask on day " + std::to_string(t));
        }
    }
}

Example make_example(const TrainingData& data, Index day, const AutoencoderConfig& config,
                     const NoiseParams& noise, std::uint64_t seed) {
    const MaskCube& orig = data.observed.mask();
    for (Index t : window_days(day, config.n_days, orig.days())) {
        if ((data.extra.day(t) > orig.day(t)).any()) {
            throw TrainingError("m' exceeds the original mask on day " + std::to_string(t));
        }
    }
    Example ex;
    ex.input = nn::Tensor<float>(1, config.input_channels(), config.height, config.width);
    fill_input(data.observed, data.extra, data.master, config, day, noise, seed, ex.input.data());
    ex.target = data.observed.day(day);
    ex.loss_mask = orig.day(day) * data.master;
    ex.hidden_mask = ex.loss_mask * (data.extra.day(day) == 0).cast<std::uint8_t>();
    return ex;
}

std::string format_log(const std::vector<EpochLog>& log, LossNorm norm) {
    const std::string n = to_string(norm);
    std::string out = "epoch,train_" + n + ",val_" + n + ",val_hidden_" + n + ",lr\n";
    char line[160];
    for (const auto& e : log) {
        std::snprintf(line, sizeof line, "%lld,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(e.epoch),
                      e.train_loss, e.val_loss, e.val_hidden_loss, e.lr);
        out += line;
    }
    return out;
}

namespace {

constexpr Index kEvalBatch = 16;

struct Batch {
    nn::Tensor<float> input;
    std::vector<Index> days;
};

Batch assemble(const TrainingData& data, const MaskCube& masks, const AutoencoderConfig& config,
               const std::vector<Index>& days, const NoiseParams& noise, std::uint64_t seed) {
    Batch b;
    b.days = days;
    b.input = nn::Tensor<float>(static_cast<Index>(days.size()), config.input_channels(),
                                config.height, config.width);
    for (std::size_t i = 0; i < days.size(); ++i) {
        fill_input(data.observed, masks, data.master, config, days[i], noise, seed,
                   b.input.data() + static_cast<Index>(i) * b.input.sample_size());
    }
    return b;
}

// Splits `count` items into batches of `size`, folding a trailing singleton
// into the previous batch so batchnorm always sees two or more samples.
std::vector<std::pair<Index, Index>> batch_ranges(Index count, Index size) {
    std::vector<std::pair<Index, Index>> out;
    for (Index s = 0; s < count; s += size) out.emplace_back(s, std::min(count, s + size));
    if (out.size() > 1 && out.back().second - out.back().first < 2) {
        out[out.size() - 2].second = out.back().second;
        out.pop_back();
    }
    return out;
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

ValidationLosses evaluate(Autoencoder<float>& model, const TrainingData& data,
                          const std::vector<Index>& days, const NoiseParams& noise, LossNorm norm,
                          std::uint64_t seed) {
    const auto& config = model.config();
    const MaskCube& orig = data.observed.mask();
    const Index plane = config.height * config.width;
    double loss = 0.0, hidden = 0.0, l1 = 0.0, hidden_l1 = 0.0;
    Index n_loss = 0, n_hidden = 0;
    for (const auto& [a, b] : batch_ranges(static_cast<Index>(days.size()), kEvalBatch)) {
        std::vector<Index> chunk(days.begin() + a, days.begin() + b);
        const Batch batch = assemble(data, data.extra, config, chunk, noise, seed);
        const nn::Tensor<float> out = model.forward(batch.input, false);
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            const Index t = chunk[i];
            Eigen::Map<const FieldPlane> pred(out.data() + static_cast<Index>(i) * plane, config.height,
                                              config.width);
            const MaskPlane m = orig.day(t) * data.master;
            if ((m != 0).any()) {
                loss += masked_distance(data.observed.day(t), pred, m, norm);
                l1 += masked_distance(data.observed.day(t), pred, m, LossNorm::l1);
                ++n_loss;
            }
            const MaskPlane hm = m * (data.extra.day(t) == 0).cast<std::uint8_t>();
            if ((hm != 0).any()) {
                hidden += masked_distance(data.observed.day(t), pred, hm, norm);
                hidden_l1 += masked_distance(data.observed.day(t), pred, hm, LossNorm::l1);
                ++n_hidden;
            }
        }
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    ValidationLosses v;
    v.loss = n_loss ? loss / static_cast<double>(n_loss) : nan;
    v.l1 = n_loss ? l1 / static_cast<double>(n_loss) : nan;
    v.hidden_loss = n_hidden ? hidden / static_cast<double>(n_hidden) : nan;
    v.hidden_l1 = n_hidden ? hidden_l1 / static_cast<double>(n_hidden) : nan;
    return v;
}

TrainResult train_model(const TrainingData& data, const SplitSpec& split,
                        const AutoencoderConfig& config, const TrainOptions& options,
                        std::uint64_t seed, const EpochCallback& on_epoch) {
    options.noise.validate();
    if (options.epochs < 0) throw TrainingError("epochs must be >= 0");
    if (options.batch_size < 1) throw TrainingError("batch_size must be >= 1");
    if (split.total_days != data.observed.days()) {
        throw TrainingError("split covers " + std::to_string(split.total_days) + " days, dataset has " +
                            std::to_string(data.observed.days()));
    }
    check_extra_masks(data);

    AutoencoderConfig cfg = config;
    cfg.dropout_p = options.dropout;
    TrainResult result;
    result.model = std::make_unique<Autoencoder<float>>(cfg, derive_seed(seed, "init"));
    auto& model = *result.model;

    std::vector<Index> train_days;
    for (Index t : split.training_days()) {
        if (((data.observed.mask().day(t) * data.master) != 0).any()) train_days.push_back(t);
    }
    const std::vector<Index> val_days = split.validation_days();
    if (train_days.empty()) throw TrainingError("no training day has observed cells");
    const std::uint64_t val_seed = derive_seed(seed, "val-noise");

    const auto ranges = batch_ranges(static_cast<Index>(train_days.size()), options.batch_size);
    const Index total_steps = options.epochs * static_cast<Index>(ranges.size());

    nn::RangerOptions ro;
    ro.max_lr = options.max_lr;
    ro.beta1 = options.beta1;
    ro.beta2 = options.beta2;
    ro.eps = options.eps;
    ro.weight_decay = options.weight_decay;
    ro.lookahead_alpha = options.lookahead_alpha;
    ro.lookahead_k = options.lookahead_k;
    nn::Ranger<float> optimizer(model.parameters(), ro);

    std::mt19937_64 shuffle_rng(derive_seed(seed, "shuffle"));
    const Index plane = cfg.height * cfg.width;
    Index step = 0;

    if (options.epochs == 0) {
        const auto tr = evaluate(model, data, train_days, options.noise, options.loss, val_seed);
        result.train_loss = tr.loss;
    }
    for (Index epoch = 0; epoch < options.epochs; ++epoch) {
        std::vector<Index> order = train_days;
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const std::uint64_t noise_seed = derive_seed(seed, "train-noise", static_cast<std::uint64_t>(epoch));
        double epoch_loss = 0.0;
        double lr = options.max_lr;
        for (const auto& [a, b] : ranges) {
            std::vector<Index> chunk(order.begin() + a, order.begin() + b);
            const Batch batch = assemble(data, data.extra, cfg, chunk, options.noise, noise_seed);
            const nn::Tensor<float> out = model.forward(batch.input, true);
            nn::Tensor<float> grad(out.shape());
            double batch_loss = 0.0;
            const double inv_b = 1.0 / static_cast<double>(chunk.size());
            for (std::size_t i = 0; i < chunk.size(); ++i) {
                const Index t = chunk[i];
                Eigen::Map<const FieldPlane> pred(out.data() + static_cast<Index>(i) * plane, cfg.height,
                                                  cfg.width);
                Eigen::Map<FieldPlane> g(grad.data() + static_cast<Index>(i) * plane, cfg.height, cfg.width);
                const MaskPlane m = data.observed.mask().day(t) * data.master;
                batch_loss += masked_distance(data.observed.day(t), pred, m, options.loss);
                masked_distance_grad(data.observed.day(t), pred, m, options.loss, g);
                g *= static_cast<float>(inv_b);
            }
            batch_loss *= inv_b;
            if (!finite(batch_loss)) {
                throw TrainingError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
            }
            epoch_loss += batch_loss;
            model.layers().zero_grad();
            model.backward(grad);
            lr = nn::flat_cosine_lr(step, total_steps, options.max_lr, options.flat_fraction);
            try {
                optimizer.step(lr);
            } catch (const nn::OptimizerError& e) {
                throw TrainingError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
            }
            ++step;
        }
        result.train_loss = epoch_loss / static_cast<double>(ranges.size());
        const auto v = evaluate(model, data, val_days, options.noise, options.loss, val_seed);
        if (!finite(v.loss)) {
            throw TrainingError("training diverged: non-finite validation loss in epoch " + std::to_string(epoch));
        }
        EpochLog e{epoch, result.train_loss, v.loss, v.hidden_loss, lr};
        result.log.push_back(e);
        if (on_epoch) on_epoch(e);
    }
    const auto v = evaluate(model, data, val_days, options.noise, options.loss, val_seed);
    result.val_loss = v.loss;
    result.val_hidden_loss = v.hidden_loss;
    result.val_l1 = v.l1;
    result.val_hidden_l1 = v.hidden_l1;
    return result;
}

const char* to_string(TuneStatus status) {
    switch (status) {
        case TuneStatus::under: return "under";
        case TuneStatus::over: return "over";
        case TuneStatus::well_trained: return "well-trained";
        case TuneStatus::failed: return "failed";
    }
    return "?";
}

TuneStatus classify_ratio(double ratio, const TuneOptions& options) {
    if (ratio < options.band_low) return TuneStatus::over;  // validation beats training: over-regularized
    if (ratio > options.band_high) return TuneStatus::under;
    return TuneStatus::well_trained;
}

namespace {

double band_distance(double ratio, const TuneOptions& o) {
    if (ratio < o.band_low) return o.band_low - ratio;
    if (ratio > o.band_high) return ratio - o.band_high;
    return 0.0;
}

double tidy(double v) { return std::round(v * 1e9) / 1e9; }

Regularization decrease(Regularization r, const TuneOptions& o) {
    if (r.dropout > 0.0) {
        r.dropout = tidy(std::max(0.0, r.dropout - o.dropout_step));
    } else if (r.weight_decay > o.min_weight_decay) {
        r.weight_decay = tidy(std::max(o.min_weight_decay, r.weight_decay / o.weight_decay_factor));
    } else if (r.batch_size > o.min_batch) {
        r.batch_size = std::max(o.min_batch, r.batch_size - o.batch_step);
    }
    return r;
}

Regularization increase(Regularization r, const TuneOptions& o) {
    if (r.dropout + o.dropout_step <= o.max_dropout + 1e-12) {
        r.dropout = tidy(r.dropout + o.dropout_step);
    } else {
        r.weight_decay = tidy(std::min(o.max_weight_decay, r.weight_decay * o.weight_decay_factor));
    }
    return r;
}

}  // namespace

Regularization next_regularization(const std::vector<TuneIteration>& history,
                                   const TuneOptions& options) {
    if (history.empty()) return {};
    const TuneIteration& last = history.back();
    const TuneStatus s_last = classify_ratio(last.ratio(), options);
    if (s_last == TuneStatus::well_trained) return last.hyper;
    if (history.size() >= 2) {
        const TuneIteration& prev = history[history.size() - 2];
        const TuneStatus s_prev = classify_ratio(prev.ratio(), options);
        if (s_prev != TuneStatus::well_trained && s_prev != s_last) {
            const double dp = band_distance(prev.ratio(), options);
            const double dl = band_distance(last.ratio(), options);
            // The iterate closer to the band gets the larger weight.
            const double wp = dl / (dp + dl);
            const double wl = dp / (dp + dl);
            Regularization r;
            r.dropout = tidy(wp * prev.hyper.dropout + wl * last.hyper.dropout);
            r.weight_decay = tidy(wp * prev.hyper.weight_decay + wl * last.hyper.weight_decay);
            r.batch_size = static_cast<Index>(std::llround(wp * static_cast<double>(prev.hyper.batch_size) +
                                                           wl * static_cast<double>(last.hyper.batch_size)));
            if (!(r == last.hyper) && !(r == prev.hyper)) return r;
        }
    }
    return s_last == TuneStatus::over ? decrease(last.hyper, options) : increase(last.hyper, options);
}

TuneResult tune_regularization(const TrainingData& data, const SplitSpec& split,
                               const AutoencoderConfig& config, const TrainOptions& base,
                               const TuneOptions& options, std::uint64_t seed,
                               const IterationCallback& on_iteration) {
    if (options.max_iterations < 1) throw TrainingError("max_iterations must be >= 1");
    TuneResult out;
    TuningState& st = out.state;
    st.current = {base.dropout, base.weight_decay, base.batch_size};
    double best = std::numeric_limits<double>::infinity();
    for (Index it = 0; it < options.max_iterations; ++it) {
        TrainOptions opt = base;
        opt.dropout = st.current.dropout;
        opt.weight_decay = st.current.weight_decay;
        opt.batch_size = st.current.batch_size;
        TrainResult r = train_model(data, split, config, opt, derive_seed(seed, "tune", static_cast<std::uint64_t>(it)));
        TuneIteration rec{st.current, r.train_loss, r.val_loss, r.val_hidden_loss, std::move(r.log)};
        st.iteration = it + 1;
        // Selection prefers the hidden-cell loss; fall back when nothing is hidden.
        const double score = std::isfinite(rec.val_hidden_loss) ? rec.val_hidden_loss : rec.val_loss;
        if (score < best || !out.model) {
            best = score;
            st.selected = it;
            out.model = std::move(r.model);
        }
        st.history.push_back(std::move(rec));
        if (on_iteration) on_iteration(it, st.history.back());
        st.status = classify_ratio(st.history.back().ratio(), options);
        if (st.status == TuneStatus::well_trained) break;
        st.current = next_regularization(st.history, options);
    }
    if (st.status != TuneStatus::well_trained) st.status = TuneStatus::failed;
    return out;
}

}  // namespace gapnet
