#include "gapnet/scoring.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace gapnet;

namespace {

constexpr double kStep = 1e-4;

// Trapezoid rule on [-10, 10] with nodes at multiples of kStep. Callers keep
// jumps on the half-step lattice so every discontinuity sits mid-cell.
double twcrps_quadrature(const std::vector<double>& samples, double u_obs, const WeightParams& p = {}) {
    std::vector<double> s = samples;
    std::sort(s.begin(), s.end());
    const double k = static_cast<double>(s.size());
    const long n = std::lround(20.0 / kStep);
    double acc = 0.0;
    std::size_t below = 0;
    for (long j = 0; j <= n; ++j) {
        const double u = -10.0 + static_cast<double>(j) * kStep;
        while (below < s.size() && s[below] <= u) ++below;
        const double f = static_cast<double>(below) / k - (u >= u_obs ? 1.0 : 0.0);
        const double v = f * f * weight_fn(u, p);
        acc += (j == 0 || j == n) ? 0.5 * v : v;
    }
    return acc * kStep;
}

double lattice(std::mt19937_64& rng, double lo, double hi) {
    const auto a = static_cast<long>(std::floor(lo / kStep)), b = static_cast<long>(std::floor(hi / kStep));
    std::uniform_int_distribution<long> d(a, b - 1);
    return (static_cast<double>(d(rng)) + 0.5) * kStep;
}

ExtremeDistribution dist_of(const std::vector<std::vector<double>>& per_site) {
    ExtremeDistribution d;
    for (std::size_t s = 0; s < per_site.size(); ++s) {
        d.sites.push_back({static_cast<Index>(s), 0, 0});
        d.samples.emplace_back();
        for (std::size_t k = 0; k < per_site[s].size(); ++k) d.samples[s].push_back({0, static_cast<Index>(k), per_site[s][k]});
    }
    return d;
}

}  // namespace

TEST_SUITE("scoring") {

TEST_CASE("weight function values") {
    CHECK(weight_fn(1.5) == doctest::Approx(0.5));
    CHECK(weight_fn(1.9) == doctest::Approx(0.841344746).epsilon(1e-8));
    CHECK(weight_fn(-10.0) < 1e-20);
}

TEST_CASE("weight integral matches quadrature") {
    for (auto [a, b] : {std::pair{-3.0, 0.5}, std::pair{1.0, 2.0}, std::pair{1.5, 4.0}}) {
        const long n = 100000;
        double acc = 0.0;
        for (long j = 0; j <= n; ++j) {
            const double u = a + (b - a) * static_cast<double>(j) / static_cast<double>(n);
            acc += (j == 0 || j == n ? 0.5 : 1.0) * weight_fn(u);
        }
        CHECK(weight_integral(a, b) == doctest::Approx(acc * (b - a) / static_cast<double>(n)).epsilon(1e-8));
    }
}

TEST_CASE("worked two-member case") {
    CHECK(std::abs(twcrps({0.0, 2.0}, 1.0) - 0.1300) <= 0.001);
}

TEST_CASE("closed form agrees with trapezoid quadrature on fuzzed cases") {
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t k = 1 + rng() % 12;
        std::vector<double> s;
        for (std::size_t j = 0; j < k; ++j) s.push_back(lattice(rng, -3.0, 5.0));
        const double obs = lattice(rng, -3.0, 5.0);
        const double diff = std::abs(twcrps(s, obs) - twcrps_quadrature(s, obs));
        worst = std::max(worst, diff);
        CHECK(diff < 1e-6);
    }
    MESSAGE("largest closed-form vs quadrature gap " << worst);
}

TEST_CASE("score invariants") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(1.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> s(1 + rng() % 10);
        for (auto& v : s) v = n(rng);
        const double obs = n(rng);
        const double score = twcrps(s, obs);
        CHECK(score >= 0.0);
        // Duplicating every member leaves the empirical CDF unchanged.
        std::vector<double> twice = s;
        twice.insert(twice.end(), s.begin(), s.end());
        CHECK(twcrps(twice, obs) == doctest::Approx(score).epsilon(1e-12));
        // Far below the weight's threshold everything is suppressed.
        std::vector<double> low = s;
        for (auto& v : low) v -= 20.0;
        CHECK(twcrps(low, obs - 20.0) < 1e-12);
        CHECK(twcrps(std::vector<double>(s.size(), obs), obs) == 0.0);
    }
    CHECK_THROWS_AS(twcrps({}, 1.0), ScoreError);
    CHECK_THROWS_AS(twcrps({1.0, std::nan("")}, 1.0), ScoreError);
}

TEST_CASE("sharper ensembles near the truth score better") {
    const double obs = 2.0;
    CHECK(twcrps({1.9, 2.0, 2.1}, obs) < twcrps({1.0, 2.0, 3.0}, obs));
    CHECK(twcrps({1.0, 2.0, 3.0}, obs) < twcrps({3.0, 4.0, 5.0}, obs));
}

TEST_CASE("averaged score and report") {
    const auto d = dist_of({{0.0, 2.0}, {1.0, 1.0, 3.0}});
    const auto r = averaged_score(d, {1.0, 2.0});
    CHECK(r.per_site[0] == doctest::Approx(twcrps({0.0, 2.0}, 1.0)));
    CHECK(r.mean == doctest::Approx(0.5 * (r.per_site[0] + r.per_site[1])));
    const auto text = r.format();
    CHECK(text.rfind("site_id,day,twcrps\n0,0,", 0) == 0);
    CHECK(text.find("mean_twcrps=") != std::string::npos);
    CHECK_THROWS_AS(averaged_score(d, {1.0}), ScoreError);
}

TEST_CASE("climatology uses fully observed training windows") {
    const Index days = 20;
    AnomalyCube cube(days, 3, 1);
    for (Index t = 0; t < days; ++t)
        for (Index c = 0; c < 3; ++c) cube(t, 0, c) = static_cast<float>(t) + 0.1f * static_cast<float>(c);
    cube.mask()(5, 0, 1) = 0;
    GridGeometry g = GridGeometry::regular(3, 1, 10.0, 30.0, 0.1, 0.1);
    const auto cyl = build_cylinders(g, {{13, 0, 1}}, days, 20.0, 3);
    REQUIRE(cyl.sites[0].cells.size() == 3);
    const SplitSpec split{days, 12, 16};
    const auto clim = baseline_climatology(cube, cyl, split, Aggregator::max);
    // Starts 0..9 whose windows avoid [12,16]; day 5 unobserved removes starts 3, 4, 5.
    // Starts 17 fits (17..19) too.
    std::vector<double> want;
    for (Index t0 : {0, 1, 2, 6, 7, 8, 9, 17}) want.push_back(static_cast<double>(static_cast<float>(t0 + 2) + 0.2f));
    REQUIRE(clim.samples[0].size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(clim.samples[0][i].value == doctest::Approx(want[i]));
        CHECK(clim.samples[0][i].model_id == -1);
    }
    cube.mask().bits().setZero();
    CHECK_THROWS_AS(baseline_climatology(cube, cyl, split, Aggregator::max), ScoreError);
}

}
