#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "dagan/config.hpp"
#include "dagan/error.hpp"
#include "dagan/io.hpp"
#include "helpers.hpp"

using namespace dagan;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DAGAN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults and precedence") {
  const ExperimentConfig d = load_config("");
  CHECK(d.train.learning_rate == doctest::Approx(1e-4));
  CHECK(d.train.loss_weights.lambda_reg == 20.0f);
  CHECK(d.simulate.level == 3);

  const ExperimentConfig c = config_from_string("[train]\npreset = B\nepochs = 3\n[loss_weights]\nlambda_smt = 2\n",
                                                {parse_override("train.epochs=7")});
  CHECK(c.train.epochs == 7);
  CHECK(c.train.loss_weights.lambda_smt == 2.0f);
  CHECK_FALSE(c.train.ablation.ic_reg);
}

TEST_CASE("presets G1 and G2 resolve to their adversarial forms") {
  CHECK(config_from_string("[train]\npreset = G1\n").resolved().find("adv_mode = conventional") != std::string::npos);
  CHECK(config_from_string("[train]\npreset = G2\n").resolved().find("adv_mode = deformation_aware") !=
        std::string::npos);
}

TEST_CASE("resolved text reads back to the same configuration") {
  const ExperimentConfig c = config_from_string("[model]\nsize = toy\n[train]\nlearning_rate = 0.0003\nseed = 9\n");
  const ExperimentConfig back = config_from_string(c.resolved());
  CHECK(back.resolved() == c.resolved());
  CHECK(back.train.learning_rate == c.train.learning_rate);
}

TEST_CASE("bad configuration is rejected") {
  CHECK_THROWS_AS(config_from_string("[train]\nlerning_rate = 1\n"), ConfigError);
  CHECK_THROWS_AS(config_from_string("[bogus]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(config_from_string("[train]\nepochs = many\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/cfg.ini"), ConfigError);
  CHECK_THROWS_AS(parse_override("no_equals_sign"), ConfigError);
}

}

TEST_SUITE("cli") {

TEST_CASE("exit codes") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("train --out /tmp/x --config /nonexistent.ini") == 2);
  CHECK(run_cli("simulate --data x.json --level 7 --out /tmp/x") == 2);
  CHECK(run_cli("params --size toy") == 0);
}

TEST_CASE("phantom, simulate, eval and plot") {
  const fs::path dir = testing::scratch_dir("cli");
  const std::string d = dir.string();
  REQUIRE(run_cli("phantom --out " + d + "/ph --n 3 --size 64 --seed 5") == 0);
  REQUIRE(run_cli("simulate --data " + d + "/ph/manifest.json --level 2 --seed 1 --out " + d + "/s1") == 0);
  REQUIRE(run_cli("simulate --data " + d + "/ph/manifest.json --level 2 --seed 1 --out " + d + "/s2") == 0);
  for (const auto& e : fs::directory_iterator(dir / "s1" / "target"))
    CHECK(slurp(e.path()) == slurp(dir / "s2" / "target" / e.path().filename()));
  const auto sim = nlohmann::json::parse(slurp(dir / "s1" / "simulation.json"));
  CHECK(sim.dump().find("NA-2") != std::string::npos);

  // Aligned targets scored against themselves.
  REQUIRE(run_cli("eval --pred " + d + "/s1/aligned --data " + d + "/s1/manifest.json --out " + d + "/ev") == 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "ev" / "summary.json"));
  CHECK(summary["metrics"]["nmae"]["mean"].get<double>() == 0.0);
  CHECK(summary["metrics"]["nmae"]["n"].get<int>() == 3);

  const std::string ref = d + "/s1/aligned/phantom_0.raw";
  REQUIRE(run_cli("plot --pred " + d + "/s1/target/phantom_0.raw --pred " + ref + " --ref " + ref + " --out " + d +
                  "/p.png") == 0);
  // Two predictions, each with a prediction panel and an error panel.
  CHECK(io::peek_shape(dir / "p.png") == std::pair{64, 256});
}

}
