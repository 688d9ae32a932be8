#include "gapnet/codec.hpp"
#include "gapnet/grid.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

using namespace gapnet;

namespace {

// Spherical law of cosines; independent of the haversine form used in the library.
double great_circle_km(double lat1, double lon1, double lat2, double lon2) {
    const double d = std::numbers::pi / 180.0;
    const double c = std::sin(lat1 * d) * std::sin(lat2 * d) +
                     std::cos(lat1 * d) * std::cos(lat2 * d) * std::cos((lon2 - lon1) * d);
    return 6371.0 * std::acos(std::clamp(c, -1.0, 1.0));
}

double km_to_deg(double km) { return km / 6371.0 * 180.0 / std::numbers::pi; }

AnomalyCube random_cube(Index t, Index w, Index h, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> v(-3.0f, 3.0f);
    std::bernoulli_distribution bit(0.6);
    AnomalyCube c(t, w, h);
    for (Index i = 0; i < c.values().size(); ++i) {
        c.values()[i] = v(rng);
        c.mask().bits()[i] = bit(rng) ? 1 : 0;
    }
    return c;
}

}  // namespace

TEST_SUITE("grid") {

TEST_CASE("haversine agrees with the law-of-cosines oracle") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> lat(-60, 60), lon(-180, 180), off(-1.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const double a = lat(rng), b = lon(rng);
        const double c = a + off(rng), d = b + off(rng);
        CHECK(haversine_km(a, b, c, d) == doctest::Approx(great_circle_km(a, b, c, d)).epsilon(1e-6));
    }
    CHECK(haversine_km(20, 38, 20 + km_to_deg(40.0), 38) == doctest::Approx(40.0).epsilon(1e-9));
}

TEST_CASE("cylinders include cells 40 km away and exclude 60 km") {
    GridGeometry g = GridGeometry::regular(3, 1, 20.0, 38.0, 0.0, 0.0);
    g.lat(0, 1) = 20.0 + km_to_deg(40.0);
    g.lat(0, 2) = 20.0 - km_to_deg(60.0);
    g.master.setOnes();
    const auto cyl = build_cylinders(g, {{0, 0, 0}, {0, 0, 1}}, 10, 50.0, 7);
    REQUIRE(cyl.sites.size() == 2);
    CHECK(cyl.sites[0].cells == std::vector<Index>{0, 1});
    CHECK(std::count(cyl.sites[1].cells.begin(), cyl.sites[1].cells.end(), 0) == 1);
    CHECK(cyl.window_days == 7);
}

TEST_CASE("tiny radius keeps only the site itself") {
    GridGeometry g = GridGeometry::regular(4, 4, 10.0, 30.0, 0.25, 0.25);
    const auto cyl = build_cylinders(g, {{2, 1, 2}}, 10, 0.001, 7);
    CHECK(cyl.sites[0].cells == std::vector<Index>{1 * 4 + 2});
}

TEST_CASE("cylinder membership is symmetric") {
    GridGeometry g = GridGeometry::regular(9, 9, 25.0, 35.0, 0.3, 0.3);
    std::vector<Site> sites;
    for (Index r = 0; r < 9; ++r)
        for (Index c = 0; c < 9; ++c) sites.push_back({0, r, c});
    for (auto metric : {DistanceMetric::haversine, DistanceMetric::cell_pitch}) {
        g.metric = metric;
        g.cell_pitch_km = 30.0;
        const auto cyl = build_cylinders(g, sites, 7, 75.0, 7);
        for (std::size_t a = 0; a < sites.size(); ++a) {
            for (std::size_t b = 0; b < sites.size(); ++b) {
                const auto& ca = cyl.sites[a].cells;
                const auto& cb = cyl.sites[b].cells;
                const bool ab = std::count(ca.begin(), ca.end(), static_cast<Index>(b)) > 0;
                const bool ba = std::count(cb.begin(), cb.end(), static_cast<Index>(a)) > 0;
                CHECK(ab == ba);
            }
        }
    }
}

TEST_CASE("cylinder errors") {
    GridGeometry g = GridGeometry::regular(3, 3, 10.0, 30.0, 0.25, 0.25);
    g.master(1, 1) = 0;
    CHECK_THROWS_AS(build_cylinders(g, {{0, 1, 1}}, 10), GridError);
    CHECK_THROWS_AS(build_cylinders(g, {{5, 0, 0}}, 10, 50.0, 7), GridError);
    CHECK_THROWS_AS(build_cylinders(g, {{0, 0, 0}}, 10, 0.0, 7), GridError);
    CHECK_NOTHROW(build_cylinders(g, {{3, 0, 0}}, 10, 50.0, 7));
}

TEST_CASE("split with long-record constants") {
    // 22 of 31 years before the boundary, 5-year block: days 6736..8560 counted from 1.
    const auto s = make_split(11315, 22 * 365, {22.0 / 31.0, 9.0 / 31.0}, 5 * 365);
    CHECK(s.validation_start + 1 == 6736);
    CHECK(s.validation_end + 1 == 8560);
}

TEST_CASE("split straddles the boundary evenly") {
    const auto s = make_split(100, 50, {0.5, 0.5}, 10);
    CHECK(s.validation_start == 45);
    CHECK(s.validation_end == 54);
}

TEST_CASE("single-regime split is the trailing block") {
    const auto s = make_split(100, 100, {1.0, 0.0}, 20);
    CHECK(s.validation_start == 80);
    CHECK(s.validation_end == 99);
}

TEST_CASE("split partitions the record") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 50; ++i) {
        const Index total = 50 + static_cast<Index>(rng() % 500);
        const Index span = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(total / 2));
        const Index boundary = static_cast<Index>(rng() % static_cast<std::uint64_t>(total));
        const double f = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        SplitSpec s;
        try {
            s = make_split(total, boundary, {f, 1.0 - f}, span);
        } catch (const GridError&) {
            continue;
        }
        const auto tr = s.training_days();
        const auto va = s.validation_days();
        CHECK(static_cast<Index>(tr.size() + va.size()) == total);
        CHECK(s.validation_length() == span);
        const double before = static_cast<double>(std::max<Index>(0, std::min(boundary, s.validation_end + 1) - s.validation_start));
        CHECK(std::abs(before - f * static_cast<double>(span)) <= 1.0);
        for (Index t : va) CHECK(s.is_validation(t));
        for (Index t : tr) CHECK_FALSE(s.is_validation(t));
    }
}

TEST_CASE("infeasible split is rejected") {
    CHECK_THROWS_AS(make_split(100, 5, {0.5, 0.5}, 40), GridError);
    CHECK_THROWS_AS(make_split(100, 50, {0.5, 0.5}, 100), GridError);
}

TEST_CASE("calendar months") {
    CHECK(month_of(0) == 0);
    CHECK(month_of(29) == 0);
    CHECK(month_of(30) == 1);
    CHECK(month_count(730) == 25);
}

TEST_CASE("cube codec roundtrip on fuzzed shapes") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        const Index t = 1 + static_cast<Index>(rng() % 8), w = 1 + static_cast<Index>(rng() % 8),
                    h = 1 + static_cast<Index>(rng() % 8);
        const AnomalyCube c = random_cube(t, w, h, rng);
        const AnomalyCube back = decode_cube(encode_cube(c));
        CHECK(masked_equal(c, back));
        CHECK(back.mask() == c.mask());
    }
}

TEST_CASE("1x2x2 observed cube and all-missing cube") {
    AnomalyCube c(1, 2, 2);
    c.values() << 0.5f, -1.25f, 3.0f, 7.0f;
    CHECK(masked_equal(decode_cube(encode_cube(c)), c));
    AnomalyCube empty(1, 2, 2);
    empty.mask().bits().setZero();
    const AnomalyCube back = decode_cube(encode_cube(empty));
    CHECK(back.mask() == empty.mask());
}

TEST_CASE("decode errors name the field") {
    std::mt19937_64 rng(2);
    const std::string good = encode_cube(random_cube(3, 4, 5, rng));
    auto field_of = [](const std::string& bytes) {
        try {
            decode_cube(bytes);
        } catch (const DecodeError& e) {
            return e.field();
        }
        return std::string("none");
    };
    CHECK(field_of(good) == "none");
    CHECK(field_of(good.substr(0, good.size() - 3)) == "payload length");
    CHECK(field_of(good.substr(0, 20)) == "payload length");
    std::string bad = good;
    bad[0] = 'X';
    CHECK(field_of(bad) == "magic");
    bad = good;
    bad[4] = 9;
    CHECK(field_of(bad) == "version");
    CHECK(field_of(good.substr(0, 10)) == "dimension");
    for (std::size_t cut = 0; cut < good.size(); ++cut) CHECK_THROWS_AS(decode_cube(good.substr(0, cut)), DecodeError);
}

TEST_CASE("geometry table roundtrip through files") {
    GridGeometry g = GridGeometry::regular(5, 3, 12.5, 41.0, 0.1, 0.2);
    g.master(2, 4) = 0;
    g.lat(2, 4) = std::nan("");
    const auto dir = std::filesystem::temp_directory_path() / "gapnet_grid_test";
    write_geometry(dir / "g.csv", g);
    const GridGeometry back = read_geometry(dir / "g.csv");
    CHECK(back.width == 5);
    CHECK(back.height == 3);
    CHECK((back.master == g.master).all());
    CHECK(back.lat(1, 3) == g.lat(1, 3));
    CHECK(back.lon(0, 2) == g.lon(0, 2));
    CHECK(std::isnan(back.lat(2, 4)));
    std::mt19937_64 rng(1);
    const AnomalyCube c = random_cube(2, 5, 3, rng);
    write_cube(dir / "c.gcub", c);
    CHECK(masked_equal(read_cube(dir / "c.gcub"), c));
    write_mask(dir / "m.gcub", c.mask());
    CHECK(read_mask(dir / "m.gcub") == c.mask());
    std::filesystem::remove_all(dir);
}

TEST_CASE("geometry decode errors") {
    CHECK_THROWS_AS(decode_geometry("r,c\n"), DecodeError);
    CHECK_THROWS_AS(decode_geometry("row,col,lat,lon,master\n0,0,1,2\n"), DecodeError);
    CHECK_THROWS_AS(decode_geometry("row,col,lat,lon,master\n0,0,1,2,1\n1,1,1,2,1\n"), DecodeError);
}

TEST_CASE("master validation rejects non-finite coordinates") {
    GridGeometry g = GridGeometry::regular(2, 2, 0.0, 0.0, 1.0, 1.0);
    g.lat(0, 0) = std::nan("");
    CHECK_THROWS_AS(g.validate(), GridError);
    g.master(0, 0) = 0;
    CHECK_NOTHROW(g.validate());
}

}
