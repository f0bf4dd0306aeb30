#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "nup/cli.hpp"
#include "nup/verify.hpp"

using namespace nup;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::path(NUP_BINARY_DIR) / "test_scratch" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::vector<std::string> out;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << text;
    return p;
}

const char* kTiny = R"({"model": {"l": 1, "m": 4, "r": 0, "m0": 5, "m_out": 2, "eta": 0.05, "n": 4, "seed": 2},
  "train": {"steps": 6, "sharpness_every": 2},
  "data": {"source": "synthetic", "classes": 2, "per_class": 8, "seed": 3}})";

}  // namespace

TEST_CASE("config parsing rejects unknown keys, wrong types and invalid values") {
    CHECK_THROWS_AS(parse_run_config(R"({"model": {"width": 3}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"extra": {}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"model": {"l": "two"}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"model": {"l": 1.5}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"model": {"scheme": "fancy"}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"train": {"steps": -1}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"data": {"source": "mnist"}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
    try {
        parse_run_config(R"({"train": {"stepz": 3}})");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("stepz") != std::string::npos);
    }
}

TEST_CASE("config survives a JSON round trip") {
    const RunConfig a = parse_run_config(kTiny);
    const RunConfig b = parse_run_config(run_config_to_json(a));
    CHECK(run_config_to_json(a) == run_config_to_json(b));
    CHECK(b.model.m == 4);
    CHECK(b.steps == 6);
    CHECK(b.data.per_class == 8);
}

TEST_CASE("metric lines round-trip and write absent values as null") {
    MetricRecord r;
    r.step = 7;
    r.minibatch_loss = 0.125;
    r.effective_sharpness = 3.0;
    r.stability_ratio = 0.75;
    r.grad_scales = {1.0, 2.5};
    r.tau = {0.5, std::numeric_limits<double>::quiet_NaN()};
    const std::string line = metric_line(r);
    const auto j = nlohmann::json::parse(line);
    CHECK(j["softrank_last_hidden"].is_null());
    CHECK(j["tau"][1].is_null());
    const MetricRecord back = parse_metric_line(line);
    CHECK(back.step == 7);
    CHECK(back.minibatch_loss == 0.125);
    CHECK(*back.effective_sharpness == 3.0);
    CHECK(*back.stability_ratio == 0.75);
    CHECK_FALSE(back.softrank_last_hidden.has_value());
    CHECK(back.grad_scales == r.grad_scales);
    CHECK(std::isnan(back.tau[1]));
    CHECK_THROWS_AS(parse_metric_line(R"({"record": "header"})"), FormatError);
}

TEST_CASE("train writes a header and one record per step, byte-identically") {
    const fs::path dir = scratch_dir("train");
    const fs::path cfg = write_config(dir, kTiny);
    std::ostringstream log, err;
    REQUIRE(cmd_train(cfg.string(), (dir / "a.jsonl").string(), log, err) == kExitOk);
    REQUIRE(cmd_train(cfg.string(), (dir / "b.jsonl").string(), log, err) == kExitOk);
    CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
    const auto lines = lines_of(dir / "a.jsonl");
    REQUIRE(lines.size() == 7);
    const auto header = nlohmann::json::parse(lines[0]);
    CHECK(header["record"] == "header");
    CHECK(header["dataset"]["size"] == 16);
    CHECK(header["dataset"]["sampling"] == "uniform_with_replacement");
    CHECK(header["fields"].size() == 8);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto rec = parse_metric_line(lines[i]);
        CHECK(rec.step == static_cast<Index>(i - 1));
        if (rec.effective_sharpness)
            CHECK(*rec.stability_ratio == 0.5 * 0.05 * *rec.effective_sharpness);
    }
}

TEST_CASE("train with zero steps writes only the header; bad inputs exit with usage errors") {
    const fs::path dir = scratch_dir("train0");
    std::string text = kTiny;
    text.replace(text.find("\"steps\": 6"), 10, "\"steps\": 0");
    const fs::path cfg = write_config(dir, text);
    std::ostringstream log, err;
    CHECK(cmd_train(cfg.string(), (dir / "m.jsonl").string(), log, err) == kExitOk);
    CHECK(lines_of(dir / "m.jsonl").size() == 1);
    CHECK(cmd_train((dir / "missing.json").string(), (dir / "x.jsonl").string(), log, err) == kExitUsage);
    CHECK(cmd_train(cfg.string(), (dir / "no_such_dir" / "x.jsonl").string(), log, err) == kExitUsage);
}

TEST_CASE("divergent training exits with the divergence status") {
    const fs::path dir = scratch_dir("diverge");
    std::string text = kTiny;
    text.replace(text.find("\"eta\": 0.05"), 11, "\"eta\": 1e300");
    text.replace(text.find("\"r\": 0,"), 7, R"("r": 0, "scheme": "unscaled",)");
    const fs::path cfg = write_config(dir, text);
    std::ostringstream log, err;
    CHECK(cmd_train(cfg.string(), (dir / "d.jsonl").string(), log, err) == kExitDiverged);
    const auto lines = lines_of(dir / "d.jsonl");
    CHECK(nlohmann::json::parse(lines.back())["aborted"] == true);
}

TEST_CASE("sweep writes one file per rate plus a manifest, sharing the seed") {
    const fs::path dir = scratch_dir("sweep");
    const fs::path cfg = write_config(dir, kTiny);
    std::ostringstream log, err;
    REQUIRE(cmd_sweep(cfg.string(), {0.05, 0.05, 0.2}, (dir / "out").string(), log, err) == kExitOk);
    CHECK(slurp(dir / "out" / "run_00.jsonl") == slurp(dir / "out" / "run_01.jsonl"));
    REQUIRE(cmd_train(cfg.string(), (dir / "single.jsonl").string(), log, err) == kExitOk);
    CHECK(slurp(dir / "out" / "run_00.jsonl") == slurp(dir / "single.jsonl"));
    const auto m = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
    REQUIRE(m["runs"].size() == 3);
    CHECK(m["runs"][2]["eta"] == 0.2);
    CHECK(m["runs"][2]["file"] == "run_02.jsonl");
    CHECK(m["runs"][2]["status"] == "completed");
    CHECK(m["runs"][2]["seed"] == m["base_seed"]);
    CHECK(cmd_sweep(cfg.string(), {}, (dir / "none").string(), log, err) == kExitUsage);
}

TEST_CASE("learning-rate lists parse strictly") {
    CHECK(parse_lr_list("0.1, 0.2,1e-3") == std::vector<double>{0.1, 0.2, 0.001});
    CHECK_THROWS_AS(parse_lr_list(""), ConfigError);
    CHECK_THROWS_AS(parse_lr_list("0.1,,0.2"), ConfigError);
    CHECK_THROWS_AS(parse_lr_list("0.1x"), ConfigError);
    CHECK_THROWS_AS(parse_lr_list("-1"), ConfigError);
}

TEST_CASE("verify and paramcount exit codes") {
    std::ostringstream log, err;
    CHECK(cmd_verify("grad", 2, 1, log, err) == kExitOk);
    CHECK(cmd_verify("nope", 2, 1, log, err) == kExitUsage);
    CHECK(cmd_verify("grad", -1, 1, log, err) == kExitUsage);
    std::ostringstream out;
    CHECK(cmd_paramcount(8, 8192, 0, 784, 10, out, err) == kExitOk);
    CHECK(out.str() == "476266496\n");
    CHECK(cmd_paramcount(0, 8, 0, 784, 10, out, err) == kExitUsage);
    const fs::path dir = scratch_dir("verify");
    CHECK(cmd_verify("theorem", 2, 1, log, err, (dir / "t.tsv").string()) == kExitOk);
    CHECK(lines_of(dir / "t.tsv").size() == 1 + run_suite("theorem", 2, 1).rows.size());
}
