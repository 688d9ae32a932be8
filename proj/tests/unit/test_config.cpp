#include "gapnet/config.hpp"

#include <doctest.h>

#include <string>

using namespace gapnet;

namespace {

std::string throws_with(const std::string& text) {
    try {
        RunConfig::parse(text);
    } catch (const RunConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults fill keys the text leaves out") {
    const auto c = RunConfig::parse("[model]\nensemble = o1r1i0\n");
    CHECK(c.integer("model.d_ch") == 64);
    CHECK(c.real("optim.max_lr") == doctest::Approx(0.003));
    CHECK(c.boolean("optim.tune"));
    CHECK_FALSE(c.boolean("model.use_posenc"));
    CHECK(c.text("sample.aggregator") == "max");
    CHECK(c.integer("split.validation_days") == 146);
}

TEST_CASE("comments, whitespace and sections") {
    const auto c = RunConfig::parse(
        "# header comment\n"
        "\n"
        "[ model ]\n"
        "  ensemble =  o1r1i0 , o2r0i1   # trailing\n"
        "d_ch=4\r\n"
        "[optim]\n"
        "dropout = 0.25\n");
    CHECK(c.integer("model.d_ch") == 4);
    CHECK(c.real("optim.dropout") == doctest::Approx(0.25));
    const auto list = c.list("model.ensemble");
    REQUIRE(list.size() == 2);
    CHECK(list[0] == "o1r1i0");
    CHECK(list[1] == "o2r0i1");
}

TEST_CASE("list drops empty items") {
    auto c = RunConfig::parse("[model]\nensemble = a,, b ,\n");
    const auto list = c.list("model.ensemble");
    REQUIRE(list.size() == 2);
    CHECK(list[1] == "b");
}

TEST_CASE("serialize then parse is the identity") {
    auto c = RunConfig::parse("[model]\nensemble = o1r2i0,o1r0i3\n[run]\nseed = 99\n");
    c.set("optim.loss", "l2");
    c.set("data.radius_km", "37.5");
    const auto back = RunConfig::parse(c.serialize());
    CHECK(back == c);
    CHECK(back.serialize() == c.serialize());
}

TEST_CASE("errors carry line numbers") {
    CHECK(throws_with("[model]\nensemble = x\nbogus = 1\n").find("line 3") != std::string::npos);
    CHECK(throws_with("[model]\nensemble = x\nbogus = 1\n").find("model.bogus") != std::string::npos);
    CHECK(throws_with("[model]\nensemble = x\nd_ch = four\n").find("line 3") != std::string::npos);
    CHECK(throws_with("[model]\nensemble = x\nd_ch = four\n").find("an integer") != std::string::npos);
    CHECK(throws_with("[optim]\ntune = yes\n[model]\nensemble = x\n").find("true or false") != std::string::npos);
    CHECK(throws_with("[optim]\nmax_lr = 1e-3x\n[model]\nensemble = x\n").find("line 2") != std::string::npos);
    CHECK(throws_with("[model\nensemble = x\n").find("unterminated") != std::string::npos);
    CHECK(throws_with("ensemble = x\n").find("outside") != std::string::npos);
    CHECK(throws_with("[model]\nensemble\n").find("key = value") != std::string::npos);
}

TEST_CASE("ensemble is required") {
    CHECK(throws_with("[optim]\nepochs = 3\n").find("model.ensemble") != std::string::npos);
    CHECK(throws_with("").find("missing required key") != std::string::npos);
}

TEST_CASE("typed accessors check the schema") {
    const auto c = RunConfig::parse("[model]\nensemble = x\n[run]\nseed = 12\n");
    CHECK(c.unsigned_integer("run.seed") == 12u);
    CHECK(c.real("run.seed") == doctest::Approx(12.0));
    CHECK_THROWS_AS(c.integer("optim.dropout"), RunConfigError);
    CHECK_THROWS_AS(c.boolean("run.seed"), RunConfigError);
    CHECK_THROWS_AS(c.real("optim.loss"), RunConfigError);
    CHECK_THROWS_AS(c.text("nope.key"), RunConfigError);

    auto d = c;
    d.set("run.seed", "-3");
    CHECK_THROWS_AS(d.unsigned_integer("run.seed"), RunConfigError);
    CHECK_THROWS_AS(d.set("run.seed", ""), RunConfigError);
    CHECK_THROWS_AS(RunConfig().text("model.ensemble"), RunConfigError);
}

TEST_CASE("load reports unreadable files") {
    CHECK_THROWS_AS(RunConfig::load("/nonexistent/run.conf"), RunConfigError);
}

TEST_CASE("schema keys are unique and defaults parse") {
    const auto& schema = config_schema();
    for (std::size_t i = 0; i < schema.size(); ++i) {
        for (std::size_t j = i + 1; j < schema.size(); ++j) CHECK(schema[i].key != schema[j].key);
        if (!schema[i].required) {
            RunConfig c;
            CHECK_NOTHROW(c.set(schema[i].key, schema[i].fallback));
        }
    }
}

}  // TEST_SUITE
