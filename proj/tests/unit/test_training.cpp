#include "fixtures.hpp"
#include "gapnet/seed.hpp"
#include "gapnet/training.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace gapnet;

namespace {

AutoencoderConfig tiny_config() {
    AutoencoderConfig c;
    c.d_ch = 4;
    c.width = 8;
    c.height = 8;
    c.kernel = 3;
    return c;
}

TrainOptions tiny_options(Index epochs) {
    TrainOptions o;
    o.epochs = epochs;
    o.batch_size = 8;
    o.max_lr = 0.01;
    return o;
}

TuneIteration iteration(Regularization h, double ratio) {
    TuneIteration it;
    it.hyper = h;
    it.train_loss = 1.0;
    it.val_loss = ratio;
    return it;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("masked distance worked examples") {
    Eigen::ArrayXXd y(2, 2), o(2, 2);
    y << 1, 2, 3, 4;
    o << 0, 0, 3, 1;
    Eigen::Array<std::uint8_t, 2, 2> m;
    m << 1, 1, 1, 0;
    CHECK(masked_distance(y, o, m, LossNorm::l1) == doctest::Approx(1.0));
    CHECK(masked_distance(y, o, m, LossNorm::l2) == doctest::Approx(std::sqrt(5.0) / 3.0));
    CHECK(masked_distance(y, y, m, LossNorm::l1) == 0.0);
    CHECK(masked_distance(y, y, m, LossNorm::l2) == 0.0);
    Eigen::Array<std::uint8_t, 2, 2> none = Eigen::Array<std::uint8_t, 2, 2>::Zero();
    CHECK_THROWS_WITH_AS(masked_distance(y, o, none, LossNorm::l1), doctest::Contains("no observed cells"), TrainingError);
}

TEST_CASE("loss ignores values at mask-0 cells") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    std::bernoulli_distribution bit(0.5);
    for (int i = 0; i < 100; ++i) {
        Eigen::ArrayXXd y(5, 6), o(5, 6);
        Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> m(5, 6);
        for (Index k = 0; k < y.size(); ++k) {
            y(k) = n(rng);
            o(k) = n(rng);
            m(k) = bit(rng);
        }
        m(0) = 1;
        Eigen::ArrayXXd y2 = y, o2 = o;
        for (Index k = 0; k < y.size(); ++k)
            if (!m(k)) {
                y2(k) = 1e6 * n(rng);
                o2(k) = -1e6 * n(rng);
            }
        for (auto norm : {LossNorm::l1, LossNorm::l2}) {
            CHECK(masked_distance(y, o, m, norm) == masked_distance(y2, o2, m, norm));
            Eigen::ArrayXXd g1(5, 6), g2(5, 6);
            masked_distance_grad(y, o, m, norm, g1);
            masked_distance_grad(y2, o2, m, norm, g2);
            CHECK((g1 == g2).all());
        }
    }
}

TEST_CASE("masked distance gradient matches finite differences") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n;
    Eigen::ArrayXXd y(4, 4), o(4, 4);
    Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> m(4, 4);
    for (Index k = 0; k < 16; ++k) {
        y(k) = n(rng);
        o(k) = n(rng);
        m(k) = k % 3 != 0;
    }
    for (auto norm : {LossNorm::l1, LossNorm::l2}) {
        Eigen::ArrayXXd g(4, 4);
        masked_distance_grad(y, o, m, norm, g);
        for (Index k = 0; k < 16; ++k) {
            Eigen::ArrayXXd up = o, dn = o;
            up(k) += 1e-6;
            dn(k) -= 1e-6;
            const double fd = (masked_distance(y, up, m, norm) - masked_distance(y, dn, m, norm)) / 2e-6;
            CHECK(g(k) == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("noise imputation statistics") {
    const Index days = 40, w = 32, h = 32;
    AnomalyCube cube(days, w, h, 0.25f);
    MaskPlane master = MaskPlane::Ones(h, w);
    master.block(0, 0, 4, 4).setZero();
    MaskCube none(days, w, h, 0);
    const NoiseParams np;
    const AnomalyCube out = impute_noise(cube, none, master, np, 99);
    double s = 0, ss = 0, count = 0;
    for (Index t = 0; t < days; ++t)
        for (Index r = 0; r < h; ++r)
            for (Index c = 0; c < w; ++c) {
                if (!master(r, c)) {
                    CHECK(out(t, r, c) == 0.0f);
                    continue;
                }
                const double v = out(t, r, c);
                s += v, ss += v * v, ++count;
            }
    const double mean = s / count;
    const double sd = std::sqrt((ss - count * mean * mean) / (count - 1));
    const double se_mean = np.sigma / std::sqrt(count);
    const double se_sd = np.sigma / std::sqrt(2.0 * (count - 1));
    MESSAGE("imputed mean " << mean << " sd " << sd << " over " << count << " cells");
    CHECK(std::abs(mean - np.mu) < 3 * se_mean);
    CHECK(std::abs(sd - np.sigma) < 3 * se_sd);
}

TEST_CASE("imputation keeps observed cells and is reproducible") {
    std::mt19937_64 rng(12);
    std::normal_distribution<float> n;
    std::bernoulli_distribution bit(0.5);
    AnomalyCube cube(10, 6, 5);
    for (Index i = 0; i < cube.values().size(); ++i) {
        cube.values()[i] = n(rng);
        cube.mask().bits()[i] = bit(rng);
    }
    const MaskPlane master = MaskPlane::Ones(5, 6);
    const AnomalyCube a = impute_noise(cube, cube.mask(), master, {}, 5);
    const AnomalyCube b = impute_noise(cube, cube.mask(), master, {}, 5);
    CHECK((a.values() == b.values()).all());
    for (Index i = 0; i < cube.values().size(); ++i) {
        if (cube.mask().bits()[i]) CHECK(std::bit_cast<std::uint32_t>(a.values()[i]) == std::bit_cast<std::uint32_t>(cube.values()[i]));
    }
    const AnomalyCube full = impute_noise(cube, MaskCube(10, 6, 5, 1), master, {}, 5);
    CHECK((full.values() == cube.values()).all());
    NoiseParams bad;
    bad.sigma = 0.0;
    CHECK_THROWS_AS(impute_noise(cube, cube.mask(), master, bad, 5), TrainingError);
}

TEST_CASE("per-day noise does not depend on the other days") {
    AnomalyCube cube(6, 4, 4);
    cube.mask().bits().setZero();
    const MaskPlane master = MaskPlane::Ones(4, 4);
    const AnomalyCube whole = impute_noise(cube, cube.mask(), master, {}, 3);
    AutoencoderConfig c = tiny_config();
    c.width = 4;
    c.height = 4;
    std::vector<float> buf(2 * 16);
    for (Index t : {Index{4}, Index{1}}) {
        fill_input(cube, cube.mask(), master, c, t, {}, 3, buf.data());
        for (Index k = 0; k < 16; ++k) CHECK(buf[static_cast<std::size_t>(k)] == whole.values()[t * 16 + k]);
    }
}

TEST_CASE("window clamps at the record edges") {
    CHECK(window_days(0, 3, 10) == std::vector<Index>{0, 0, 1});
    CHECK(window_days(9, 3, 10) == std::vector<Index>{8, 9, 9});
    CHECK(window_days(5, 1, 10) == std::vector<Index>{5});
    CHECK(window_days(5, 5, 10) == std::vector<Index>{3, 4, 5, 6, 7});
}

TEST_CASE("examples: channels, targets and masks") {
    const auto d = fixtures::tiny_data();
    AutoencoderConfig c = tiny_config();
    c.n_days = 3;
    c.use_posenc = true;
    const TrainingData data{d.observed, d.extra, d.geometry.master};
    const Example ex = make_example(data, 0, c, {}, 7);
    CHECK(ex.input.shape() == nn::Shape{1, 8, 8, 8});
    // Channel 1 is day 0 again after clamping, so it equals channel 0.
    for (Index k = 0; k < 64; ++k) CHECK(ex.input.data()[k] == ex.input.data()[64 + k]);
    for (Index r = 0; r < 8; ++r)
        for (Index col = 0; col < 8; ++col) {
            if (d.extra(0, r, col)) CHECK(ex.input(0, 0, r, col) == d.observed(0, r, col));
            CHECK(ex.input(0, 3, r, col) == static_cast<float>(d.extra(0, r, col)));
            CHECK(ex.loss_mask(r, col) <= d.geometry.master(r, col));
            CHECK(ex.hidden_mask(r, col) == (d.observed.mask()(0, r, col) && !d.extra(0, r, col) ? 1 : 0));
        }
    CHECK(ex.loss_mask(7, 0) == 0);
    CHECK(ex.input(0, 6, 0, 0) == -1.0f);
    CHECK(ex.input(0, 7, 7, 0) == 1.0f);
}

TEST_CASE("no extra damage: input equals the originals at observed cells") {
    const auto d = fixtures::tiny_data();
    const TrainingData data{d.observed, d.observed.mask(), d.geometry.master};
    const Example ex = make_example(data, 4, tiny_config(), {}, 1);
    for (Index r = 0; r < 8; ++r)
        for (Index c = 0; c < 8; ++c)
            if (d.observed.mask()(4, r, c) && d.geometry.master(r, c)) CHECK(ex.input(0, 0, r, c) == d.observed(4, r, c));
    CHECK((ex.hidden_mask == 0).all());
}

TEST_CASE("extra masks exceeding the originals are rejected") {
    const auto d = fixtures::tiny_data();
    MaskCube bad = d.extra;
    Index t = 0, cell = 0;
    for (Index i = 0; i < d.observed.mask().bits().size(); ++i) {
        if (!d.observed.mask().bits()[i]) {
            t = i / 64;
            cell = i;
            break;
        }
    }
    bad.bits()[cell] = 1;
    const TrainingData data{d.observed, bad, d.geometry.master};
    CHECK_THROWS_AS(check_extra_masks(data), TrainingError);
    CHECK_THROWS_AS(make_example(data, t, tiny_config(), {}, 1), TrainingError);
}

TEST_CASE("identity 1x1 harness reproduces observed inputs") {
    const auto d = fixtures::tiny_data();
    const TrainingData data{d.observed, d.observed.mask(), d.geometry.master};
    const Example ex = make_example(data, 10, tiny_config(), {}, 2);
    std::mt19937_64 rng(1);
    nn::Conv2d<float> head(2, 1, rng, 1, 1);
    head.weight().value << 1.0f, 0.0f;
    head.bias().value.setZero();
    const auto out = head.forward(ex.input, false);
    Eigen::Map<const FieldPlane> pred(out.data(), 8, 8);
    CHECK(masked_distance(ex.target, pred, ex.loss_mask, LossNorm::l1) == 0.0);
}

TEST_CASE("tiny run: train loss falls over the first five epochs") {
    const auto d = fixtures::tiny_data();
    const TrainingData data{d.observed, d.extra, d.geometry.master};
    const SplitSpec split = make_split(60, 50, {0.5, 0.5}, 10);
    const TrainResult r = train_model(data, split, tiny_config(), tiny_options(5), 11);
    REQUIRE(r.log.size() == 5);
    for (std::size_t e = 1; e < 5; ++e) {
        CAPTURE(e);
        CHECK(r.log[e].train_loss < r.log[e - 1].train_loss);
    }
    CHECK(std::isfinite(r.val_loss));
    CHECK(std::isfinite(r.val_hidden_loss));
    CHECK(r.train_loss == r.log.back().train_loss);
}

TEST_CASE("zero-epoch run reports initialization losses") {
    const auto d = fixtures::tiny_data();
    const TrainingData data{d.observed, d.extra, d.geometry.master};
    const SplitSpec split = make_split(60, 50, {0.5, 0.5}, 10);
    const TrainResult r = train_model(data, split, tiny_config(), tiny_options(0), 11);
    CHECK(r.log.empty());
    Autoencoder<float> init(tiny_config(), derive_seed(11, "init"));
    const auto v = evaluate(init, data, split.validation_days(), {}, LossNorm::l1, derive_seed(11, "val-noise"));
    CHECK(r.val_loss == v.loss);
    CHECK(r.val_hidden_loss == v.hidden_loss);
    CHECK(r.train_loss > 0.0);
}

TEST_CASE("identical seeds give identical trajectories") {
    const auto d = fixtures::tiny_data();
    const TrainingData data{d.observed, d.extra, d.geometry.master};
    const SplitSpec split = make_split(60, 50, {0.5, 0.5}, 10);
    TrainOptions o = tiny_options(2);
    o.dropout = 0.1;
    const TrainResult a = train_model(data, split, tiny_config(), o, 4);
    const TrainResult b = train_model(data, split, tiny_config(), o, 4);
    CHECK(format_log(a.log) == format_log(b.log));
    const auto sa = a.model->state(), sb = b.model->state();
    for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sa[i].data == sb[i].data);
    const TrainResult c = train_model(data, split, tiny_config(), o, 5);
    CHECK(format_log(a.log) != format_log(c.log));
}

TEST_CASE("L1 and L2 parity harness") {
    const auto d = fixtures::tiny_data();
    const TrainingData data{d.observed, d.extra, d.geometry.master};
    const SplitSpec split = make_split(60, 50, {0.5, 0.5}, 10);
    TrainOptions o = tiny_options(4);
    const TrainResult l1 = train_model(data, split, tiny_config(), o, 8);
    o.loss = LossNorm::l2;
    const TrainResult l2 = train_model(data, split, tiny_config(), o, 8);
    const TrainResult init = train_model(data, split, tiny_config(), tiny_options(0), 8);
    MESSAGE("validation L1 after L1 training " << l1.val_l1 << ", after L2 training " << l2.val_l1
                                                << ", untrained " << init.val_l1);
    CHECK(l1.val_l1 < init.val_l1);
    CHECK(l2.val_l1 < init.val_l1);
    CHECK(format_log(l2.log, LossNorm::l2).rfind("epoch,train_l2,val_l2,val_hidden_l2,lr\n", 0) == 0);
}

TEST_CASE("training option errors") {
    const auto d = fixtures::tiny_data();
    const TrainingData data{d.observed, d.extra, d.geometry.master};
    TrainOptions o = tiny_options(1);
    CHECK_THROWS_AS(train_model(data, make_split(50, 25, {0.5, 0.5}, 10), tiny_config(), o, 1), TrainingError);
    o.batch_size = 0;
    CHECK_THROWS_AS(train_model(data, make_split(60, 50, {0.5, 0.5}, 10), tiny_config(), o, 1), TrainingError);
    CHECK(parse_loss_norm("L2") == LossNorm::l2);
    CHECK_THROWS_AS(parse_loss_norm("huber"), TrainingError);
}

TEST_CASE("ratio classification") {
    const TuneOptions t;
    CHECK(classify_ratio(0.99, t) == TuneStatus::over);
    CHECK(classify_ratio(1.0, t) == TuneStatus::well_trained);
    CHECK(classify_ratio(1.05, t) == TuneStatus::well_trained);
    CHECK(classify_ratio(1.051, t) == TuneStatus::under);
    CHECK(std::string(to_string(TuneStatus::well_trained)) == "well-trained");
}

TEST_CASE("regularization moves") {
    const TuneOptions t;
    SUBCASE("under-regularized raises dropout, then weight decay") {
        CHECK(next_regularization({iteration({0.0, 0.3, 32}, 1.2)}, t) == Regularization{0.05, 0.3, 32});
        CHECK(next_regularization({iteration({0.5, 0.3, 32}, 1.2)}, t) == Regularization{0.5, 0.6, 32});
    }
    SUBCASE("over-regularized lowers dropout, then weight decay, then batch") {
        CHECK(next_regularization({iteration({0.2, 0.3, 32}, 0.9)}, t) == Regularization{0.15, 0.3, 32});
        CHECK(next_regularization({iteration({0.0, 0.3, 32}, 0.9)}, t) == Regularization{0.0, 0.15, 32});
        CHECK(next_regularization({iteration({0.0, 0.01, 32}, 0.9)}, t) == Regularization{0.0, 0.01, 28});
        CHECK(next_regularization({iteration({0.0, 0.01, 8}, 0.9)}, t) == Regularization{0.0, 0.01, 8});
    }
    SUBCASE("well-trained keeps the setting") {
        CHECK(next_regularization({iteration({0.1, 0.3, 32}, 1.02)}, t) == Regularization{0.1, 0.3, 32});
    }
    SUBCASE("straddling the band interpolates towards the closer iterate") {
        // Distances to the band: 0.05 below and 0.15 above, so weights 0.75 and 0.25.
        const auto r = next_regularization({iteration({0.0, 0.3, 32}, 0.95), iteration({0.4, 0.3, 24}, 1.2)}, t);
        CHECK(r.dropout == doctest::Approx(0.1));
        CHECK(r.weight_decay == doctest::Approx(0.3));
        CHECK(r.batch_size == 30);
    }
}

TEST_CASE("tuning stops once well-trained and keeps the best hidden loss") {
    const auto d = fixtures::tiny_data();
    const TrainingData data{d.observed, d.extra, d.geometry.master};
    const SplitSpec split = make_split(60, 50, {0.5, 0.5}, 10);
    TuneOptions t;
    t.max_iterations = 3;
    t.band_low = 0.0;  // everything is in the band
    t.band_high = 1e9;
    const auto one = tune_regularization(data, split, tiny_config(), tiny_options(1), t, 3);
    CHECK(one.state.iteration == 1);
    CHECK(one.state.status == TuneStatus::well_trained);
    CHECK(one.state.selected == 0);

    t.band_low = 1e8;  // nothing is: every iteration is over-regularized
    Index calls = 0;
    const auto capped = tune_regularization(data, split, tiny_config(), tiny_options(1), t, 3,
                                            [&](Index, const TuneIteration&) { ++calls; });
    CHECK(capped.state.iteration == 3);
    CHECK(calls == 3);
    CHECK(capped.state.status == TuneStatus::failed);
    double best = 1e300;
    Index arg = -1;
    for (std::size_t i = 0; i < capped.state.history.size(); ++i)
        if (capped.state.history[i].val_hidden_loss < best) {
            best = capped.state.history[i].val_hidden_loss;
            arg = static_cast<Index>(i);
        }
    CHECK(capped.state.selected == arg);
    CHECK(capped.state.history[1].hyper.weight_decay == doctest::Approx(0.15));
}

}
