#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "flipguard/config.hpp"

using namespace flipguard;

TEST_CASE("parse key = value with comments")
{
    const auto cfg = parse_config("# experiment\nseed = 7\n\n  lambda=0.05   # radius penalty\nattack = none, ncar\n");
    CHECK(cfg.uint("seed", 0) == 7);
    CHECK(cfg.real("lambda", 0.0) == 0.05);
    CHECK(cfg.text_list("attack", {}) == std::vector<std::string>{"none", "ncar"});
    CHECK(cfg.uint("runs", 3) == 3);
    CHECK_THROWS_AS(parse_config("seed 7\n"), ConfigError);
}

TEST_CASE("unknown keys and bad values are rejected")
{
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.set("sede", "1"), ConfigError);
    CHECK_THROWS_AS(cfg.set("seed", "-1"), ConfigError);
    CHECK_THROWS_AS(cfg.set("seed", "12x"), ConfigError);
    CHECK_THROWS_AS(cfg.set("lambda", "abc"), ConfigError);
    CHECK_THROWS_AS(cfg.set("prune", "maybe"), ConfigError);
    CHECK_THROWS_AS(cfg.set("kind", "forest"), ConfigError);
    CHECK_THROWS_AS(cfg.set("attack", "none,bogus"), ConfigError);
    CHECK_THROWS_AS(cfg.set("k", "4,x"), ConfigError);
    CHECK_THROWS_AS(cfg.require("out"), ConfigError);
    try {
        cfg.set("sede", "1");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("sede") != std::string::npos);
    }
    cfg.set("prune", "false");
    CHECK_FALSE(cfg.flag("prune", true));
    cfg.set("k", "4, 8,16");
    CHECK(cfg.uint_list("k", {}) == std::vector<std::size_t>{4, 8, 16});
}

TEST_CASE("merge lets later settings win")
{
    auto base = parse_config("seed = 1\nruns = 4\n");
    const auto over = parse_config("seed = 9\n");
    base.merge(over);
    CHECK(base.uint("seed", 0) == 9);
    CHECK(base.uint("runs", 0) == 4);
    CHECK(base.to_text() == "runs = 4\nseed = 9\n");
    CHECK(parse_config(base.to_text()).values() == base.values());
}

TEST_CASE("experiment settings map onto the experiment config")
{
    const auto cfg = parse_config(
        "mixture = benchmark\nn = 2000\nsetup = 2\nattack = none,component\nbudget_frac = 0.05,0.15\n"
        "models = srnn,rsrnn\nk = 12\nlambda = 0.02\nflip_components = 6\nruns = 3\nseed = 11\n"
        "attacker_init = kmeans\nprune = false\n");
    const auto e = experiment_from_config(cfg);
    CHECK(e.setup == 2);
    CHECK(e.attacks == std::vector<std::string>{"none", "component"});
    CHECK(e.budget_fracs == std::vector<double>{0.05, 0.15});
    CHECK(e.k_values == std::vector<std::size_t>{12});
    CHECK(e.lambda == 0.02);
    CHECK(e.flip_components == std::vector<int>{6});
    CHECK(e.runs == 3);
    CHECK(e.seed == 11);
    CHECK(e.attacker_init == InitMethod::KMeans);
    CHECK_FALSE(e.prune);
    std::size_t total = 0;
    for (const auto& c : e.mixture.components) total += c.count;
    CHECK(total == 2000);

    CHECK_THROWS_AS(experiment_from_config(parse_config("budget_frac = 1.5\n")), ConfigError);
    CHECK_THROWS_AS(experiment_from_config(parse_config("setup = 3\n")), ConfigError);
}

TEST_CASE("mixture files")
{
    const auto path = std::filesystem::temp_directory_path() / "flipguard_test_mixture.json";
    std::ofstream(path) << R"({"components": [{"mean": [0, 0], "stddev": 1, "count": 30, "label": 0},
                                              {"mean": [5, 5], "stddev": 1, "count": 20, "label": 1}]})";
    RunConfig cfg;
    cfg.set("mixture", path.string());
    cfg.set("seed", "5");
    const auto spec = mixture_from_config(cfg);
    REQUIRE(spec.components.size() == 2);
    CHECK(spec.components[1].count == 20);
    CHECK(spec.seed == 5);
    CHECK_THROWS_AS(mixture_from_json(nlohmann::json::parse(R"({"components": [{"mean": [0]}]})")), DataError);
    CHECK_THROWS_AS(load_config("/nonexistent/flipguard.cfg"), DataError);
}
