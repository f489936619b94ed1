#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "moto/config.hpp"
#include "moto/vocab.hpp"

using namespace moto;

TEST_CASE("vocab encodes, pads, truncates and rejects OOV") {
    Vocab v;
    CHECK(v.size() == 15);  // 14 words + pad
    auto ids = v.encode("move the red block up", 8);
    REQUIRE(ids.size() == 8);
    CHECK(ids[0] == v.id("move"));
    CHECK(ids[4] == v.id("up"));
    CHECK(ids[5] == 0);
    CHECK(ids[7] == 0);

    // the longest template exactly fills the prompt window
    auto full = v.encode("put the green block in the goal region", 8);
    CHECK(full[7] == v.id("region"));
    for (int id : full) CHECK(id != 0);

    CHECK(v.encode("move the red block up", 3).size() == 3);
    CHECK_THROWS_AS(v.encode("grab the red block", 8), DataError);
    CHECK(v.word(v.id("goal")) == "goal");
    CHECK_THROWS_AS(v.word(0), DataError);
}

TEST_CASE("default config validates and round-trips through json") {
    ExperimentConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    nlohmann::json j = cfg.to_json();
    ExperimentConfig back = ExperimentConfig::from_json(j);
    CHECK(back.to_json() == j);
    CHECK(back.tokenizer.codebook_size == cfg.tokenizer.codebook_size);
}

TEST_CASE("config rejects unknown keys with the dotted path") {
    nlohmann::json j = ExperimentConfig{}.to_json();
    j["tokenizer"]["kodebook_size"] = 99;
    try {
        ExperimentConfig::from_json(j);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("tokenizer.kodebook_size") != std::string::npos);
    }
}

TEST_CASE("config validation catches bad shapes") {
    ExperimentConfig cfg;
    SECTION("patch divisibility") {
        cfg.frame.patch = 5;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SECTION("heads divide hidden") {
        cfg.gpt.heads = 3;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SECTION("control steps divisible by N") {
        cfg.world.control_steps = 13;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SECTION("positive sizes") {
        cfg.tokenizer.codebook_size = 0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
}

TEST_CASE("dotted overrides parse typed values") {
    nlohmann::json doc = nlohmann::json::object();
    ExperimentConfig::apply_set(doc, "tokenizer.codebook_size=64");
    ExperimentConfig::apply_set(doc, "world.step_scale=0.2");
    ExperimentConfig::apply_set(doc, "finetune.ablation_mode=iml");
    ExperimentConfig cfg = ExperimentConfig::from_json(doc);
    CHECK(cfg.tokenizer.codebook_size == 64);
    CHECK(cfg.world.step_scale == Catch::Approx(0.2));
    CHECK(cfg.finetune.ablation_mode == "iml");

    nlohmann::json bad = nlohmann::json::object();
    ExperimentConfig::apply_set(bad, "no_such.key=1");
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::apply_set(bad, "tokenizer.codebook_size"),
                    ConfigError);  // no '='
}

TEST_CASE("config file loading") {
    namespace fs = std::filesystem;
    fs::path p = fs::temp_directory_path() / "moto_test_cfg.json";
    {
        std::ofstream out(p);
        out << R"({"seed": 123, "gpt": {"layers": 2}})";
    }
    ExperimentConfig cfg = ExperimentConfig::load(p);
    CHECK(cfg.seed == 123);
    CHECK(cfg.gpt.layers == 2);
    CHECK(cfg.gpt.heads == ExperimentConfig{}.gpt.heads);  // untouched defaults survive
    {
        std::ofstream out(p);
        out << "{not json";
    }
    CHECK_THROWS_AS(ExperimentConfig::load(p), ConfigError);
}
