#include "fixtures.hpp"
#include "gapnet/inference.hpp"
#include "gapnet/resample.hpp"

#include <doctest.h>

using namespace gapnet;

namespace {

AutoencoderConfig tiny_config() {
    AutoencoderConfig c;
    c.d_ch = 3;
    c.width = 8;
    c.height = 8;
    c.kernel = 3;
    return c;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("cylinder extreme over a small window") {
    AnomalyCube cube(2, 2, 1);
    cube(0, 0, 0) = 0.1f;
    cube(0, 0, 1) = 0.9f;
    cube(1, 0, 0) = 0.4f;
    cube(1, 0, 1) = 0.2f;
    const CylinderSite site{{0, 0, 0}, {0, 1}};
    CHECK(cylinder_extreme(cube, site, 2, Aggregator::max) == doctest::Approx(0.9));
    CHECK(cylinder_extreme(cube, site, 2, Aggregator::min) == doctest::Approx(0.1));
    CHECK(cylinder_extreme(cube, site, 2, Aggregator::mean) == doctest::Approx(0.4));
    CHECK_THROWS_AS(cylinder_extreme(cube, site, 3, Aggregator::max), InferenceError);
    CHECK_THROWS_AS(cylinder_extreme(cube, CylinderSite{{0, 0, 0}, {}}, 1, Aggregator::max), InferenceError);
    CHECK(parse_aggregator("mean") == Aggregator::mean);
    CHECK_THROWS_AS(parse_aggregator("median"), InferenceError);
}

TEST_CASE("blend keeps observations and fills the rest") {
    const auto d = fixtures::tiny_data();
    AnomalyCube pred(d.observed.days(), 8, 8, 42.0f);
    const AnomalyCube b = blend(d.observed, d.geometry.master, pred);
    for (Index t = 0; t < d.observed.days(); ++t)
        for (Index r = 0; r < 8; ++r)
            for (Index c = 0; c < 8; ++c) {
                if (!d.geometry.master(r, c)) CHECK(b(t, r, c) == 0.0f);
                else if (d.observed.mask()(t, r, c)) CHECK(b(t, r, c) == d.observed(t, r, c));
                else CHECK(b(t, r, c) == 42.0f);
                CHECK(b.mask()(t, r, c) == d.geometry.master(r, c));
            }
    CHECK_THROWS_AS(blend(d.observed, d.geometry.master, AnomalyCube(3, 8, 8)), InferenceError);
}

TEST_CASE("reconstruction is deterministic and stochastic across seeds") {
    const auto d = fixtures::tiny_data();
    Autoencoder<float> model(tiny_config(), 4);
    const InferenceData data{d.observed, d.geometry.master, {}, nullptr};
    const std::vector<Index> days{0, 5, 17};
    const AnomalyCube a = sample_reconstruction(model, data, {}, 9, days);
    const AnomalyCube b = sample_reconstruction(model, data, {}, 9, days);
    const AnomalyCube c = sample_reconstruction(model, data, {}, 10, days);
    CHECK((a.values() == b.values()).all());
    CHECK_FALSE((a.values() == c.values()).all());
    CHECK(a.mask().day(5).cast<int>().sum() == d.geometry.master.cast<int>().sum());
    CHECK(a.mask().day(1).cast<int>().sum() == 0);
    CHECK_THROWS_AS(sample_reconstruction(model, data, {}, 9, {60}), InferenceError);
}

TEST_CASE("a fully observed day does not depend on the sample seed") {
    auto d = fixtures::tiny_data();
    for (Index r = 0; r < 8; ++r)
        for (Index c = 0; c < 8; ++c) d.observed.mask()(3, r, c) = d.geometry.master(r, c);
    Autoencoder<float> model(tiny_config(), 4);
    const InferenceData data{d.observed, d.geometry.master, {}, nullptr};
    const AnomalyCube a = sample_reconstruction(model, data, {}, 1, {3});
    const AnomalyCube b = sample_reconstruction(model, data, {}, 2, {3});
    CHECK((a.day(3) == b.day(3)).all());
    const AnomalyCube fa = blend(d.observed, d.geometry.master, a);
    CHECK((fa.day(3) == (d.geometry.master != 0).select(d.observed.day(3), 0.0f)).all());
}

TEST_CASE("reduced footprint restores to the full grid") {
    const auto d = fixtures::tiny_data(12, 12, 20);
    Footprint fp;
    fp.factor = 3;
    const ReducedData red = reduce_dataset(d.observed, nullptr, d.geometry.master, fp);
    AutoencoderConfig c = tiny_config();
    c.width = 4;
    c.height = 4;
    Autoencoder<float> model(c, 4);
    const InferenceData data{d.observed, d.geometry.master, fp, &red};
    const AnomalyCube out = sample_reconstruction(model, data, {}, 3, {2});
    CHECK(out.width() == 12);
    CHECK(out(2, 11, 0) == 0.0f);
    const InferenceData missing{d.observed, d.geometry.master, fp, nullptr};
    CHECK_THROWS_AS(sample_reconstruction(model, missing, {}, 3, {2}), InferenceError);
}

TEST_CASE("ensemble distribution counts, order and thread independence") {
    const auto d = fixtures::tiny_data();
    Autoencoder<float> m0(tiny_config(), 1), m1(tiny_config(), 2);
    const InferenceData data{d.observed, d.geometry.master, {}, nullptr};
    const auto cyl = build_cylinders(d.geometry, {{3, 2, 2}, {40, 5, 6}}, 60, 50.0, 7);
    const auto one = ensemble_distribution({&m0, &m1}, {7, 9}, data, 3, cyl, Aggregator::max, {}, 11, 1);
    const auto two = ensemble_distribution({&m0, &m1}, {7, 9}, data, 3, cyl, Aggregator::max, {}, 11, 2);
    REQUIRE(one.samples.size() == 2);
    for (std::size_t s = 0; s < 2; ++s) {
        REQUIRE(one.samples[s].size() == 6);
        CHECK(one.samples[s][0].model_id == 7);
        CHECK(one.samples[s][5].model_id == 9);
        CHECK(one.samples[s][4].sample_id == 1);
        CHECK(one.values(s) == two.values(s));
    }
    CHECK(format_extremes(one) == format_extremes(two));
    const auto sub = one.subset({9}, 2);
    CHECK(sub.samples[0].size() == 2);
    CHECK(sub.samples[1][1].value == one.samples[1][4].value);
    // Sample k of a model is the same draw regardless of how many are taken.
    const auto more = ensemble_distribution({&m1}, {9}, data, 5, cyl, Aggregator::max, {}, 11, 1);
    CHECK(more.samples[0][2].value == one.samples[0][5].value);
}

TEST_CASE("extreme table roundtrip") {
    ExtremeDistribution d;
    d.sites = {{4, 1, 1}, {9, 2, 2}};
    d.samples = {{{0, 0, 0.125}, {1, 0, -2.5e-7}}, {{0, 0, 1.0 / 3.0}}};
    const std::string text = format_extremes(d);
    const auto back = parse_extremes(text);
    REQUIRE(back.samples.size() == 2);
    CHECK(back.sites[1].day == 9);
    CHECK(back.samples[0][1].value == -2.5e-7);
    CHECK(back.samples[1][0].value == 1.0 / 3.0);
    CHECK(format_extremes(back) == text);
    CHECK_THROWS_AS(parse_extremes("bad\n"), InferenceError);
    CHECK_THROWS_AS(parse_extremes("site_id,day,sample_id,model_id,extreme_value\n1,2,x\n"), InferenceError);
}

}
