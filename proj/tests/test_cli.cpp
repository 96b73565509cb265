#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fvrm/config.hpp"
#include "fvrm/errors.hpp"

using namespace fvrm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json base_config() {
  return json{
      {"model",
       {{"velocities", {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}},
        {"kernel", {{"kind", "complete"}, {"probabilities", {1.0 / 3, 1.0 / 3, 1.0 / 3}}}},
        {"waiting", {{"kind", "exponential"}, {"rates", {1.0, 1.0, 1.0}}}}}},
      {"query", {{"t", 1.0}, {"bins", 8}}},
      {"run", {{"replicas", 20000}, {"seed", 7}, {"workers", 2}}}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FVRM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("fvrm_test_" + std::to_string(std::uint64_t(std::rand()) * 100003 + std::uint64_t(::getpid())));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path write_config(const TempDir& dir, const json& doc, const char* name = "config.json") {
  const fs::path p = dir.path / name;
  std::ofstream(p) << doc.dump(2);
  return p;
}

} // namespace

TEST_CASE("config validation names the offending field") {
  SUBCASE("probabilities must sum to one") {
    json doc = base_config();
    doc["model"]["kernel"]["probabilities"] = {0.5, 0.2, 0.2};
    try {
      parse_config(doc);
      FAIL("expected a config error");
    } catch (const ConfigError& e) {
      CHECK(e.field == "$.model.kernel");
    }
  }
  SUBCASE("velocity rows must share a dimension") {
    json doc = base_config();
    doc["model"]["velocities"] = {{0.0, 0.0}, {1.0}};
    try {
      parse_config(doc);
      FAIL("expected a config error");
    } catch (const ConfigError& e) {
      CHECK(e.field == "$.model.velocities");
    }
  }
  SUBCASE("exactly one displacement driver") {
    json doc = base_config();
    doc["model"]["rate"] = {{"kind", "constant"}, {"value", 1.0}};
    try {
      parse_config(doc);
      FAIL("expected a config error");
    } catch (const ConfigError& e) {
      CHECK(e.field == "$.model");
    }
  }
  SUBCASE("point dimension must match") {
    json doc = base_config();
    doc["query"]["points"] = {{0.1, 0.2, 0.3}};
    try {
      parse_config(doc);
      FAIL("expected a config error");
    } catch (const ConfigError& e) {
      CHECK(e.field == "$.query.points[0]");
    }
  }
  SUBCASE("replicas must be positive") {
    json doc = base_config();
    doc["run"]["replicas"] = 0;
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
  }
}

TEST_CASE("cli exit codes") {
  TempDir dir;
  SUBCASE("bad config exits 2") {
    json doc = base_config();
    doc["model"]["kernel"]["probabilities"] = {0.9, 0.9, 0.9};
    const fs::path cfg = write_config(dir, doc);
    CHECK(run_cli("simulate --config " + cfg.string() + " --out " + (dir.path / "o").string()) == 2);
  }
  SUBCASE("good config exits 0") {
    const fs::path cfg = write_config(dir, base_config());
    CHECK(run_cli("simulate --config " + cfg.string() + " --out " + (dir.path / "o").string()) == 0);
    CHECK(fs::exists(dir.path / "o" / "summary.csv"));
    CHECK(fs::exists(dir.path / "o" / "summary.json"));
  }
}

TEST_CASE("simulate artifacts regenerate bit-identically") {
  TempDir dir;
  const fs::path cfg = write_config(dir, base_config());
  REQUIRE(run_cli("simulate --config " + cfg.string() + " --out " + (dir.path / "a").string()) == 0);
  REQUIRE(run_cli("simulate --config " + cfg.string() + " --out " + (dir.path / "b").string()) == 0);
  CHECK(slurp(dir.path / "a" / "summary.csv") == slurp(dir.path / "b" / "summary.csv"));
  CHECK(slurp(dir.path / "a" / "summary.json") == slurp(dir.path / "b" / "summary.json"));

  SUBCASE("worker count does not change the artifact") {
    json doc = base_config();
    doc["run"]["workers"] = 7;
    const fs::path cfg7 = write_config(dir, doc, "config7.json");
    REQUIRE(run_cli("simulate --config " + cfg7.string() + " --out " + (dir.path / "c").string()) ==
            0);
    CHECK(slurp(dir.path / "a" / "summary.csv") == slurp(dir.path / "c" / "summary.csv"));
  }
  SUBCASE("the seed is part of the artifact") {
    REQUIRE(run_cli("simulate --config " + cfg.string() + " --seed 8 --out " +
                    (dir.path / "d").string()) == 0);
    CHECK(slurp(dir.path / "a" / "summary.csv") != slurp(dir.path / "d" / "summary.csv"));
  }
}

TEST_CASE("density subcommand writes tagged rows with remainder bounds") {
  TempDir dir;
  json doc = base_config();
  doc["query"]["points"] = {{0.3, 0.2}, {0.4, 0.0}, {0.9, 0.9}};
  doc["run"]["tolerance"] = 1e-10;
  const fs::path cfg = write_config(dir, doc);
  REQUIRE(run_cli("density --config " + cfg.string() + " --out " + (dir.path / "o").string()) == 0);
  const std::string csv = slurp(dir.path / "o" / "density.csv");
  CHECK(csv.find("inner") != std::string::npos);
  CHECK(csv.find("complete-series") != std::string::npos);
  CHECK(csv.find("face") != std::string::npos);
  CHECK(csv.find("outside") != std::string::npos);
  // metadata embeds the config for regeneration
  CHECK(csv.find("# config:") != std::string::npos);
  CHECK(csv.find("# seed:") != std::string::npos);
}

TEST_CASE("mass subcommand reproduces the closed-form partition") {
  TempDir dir;
  const fs::path cfg = write_config(dir, base_config());
  REQUIRE(run_cli("mass --config " + cfg.string() + " --out " + (dir.path / "o").string()) == 0);
  const json doc = json::parse(slurp(dir.path / "o" / "mass.json"));
  CHECK(doc["total_mass"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(doc["lambda_t"].get<double>() == doctest::Approx(1.0));
}

TEST_CASE("verify subcommand produces a pass report") {
  TempDir dir;
  json doc = base_config();
  doc["query"]["face"] = {0, 1};
  doc["run"]["replicas"] = 50000;
  const fs::path cfg = write_config(dir, doc);
  const int rc = run_cli("verify --config " + cfg.string() + " --out " + (dir.path / "o").string());
  CHECK(rc == 0);
  const json report = json::parse(slurp(dir.path / "o" / "verify.json"));
  CHECK(report["pass"].get<bool>());
  CHECK(report["identities"]["pass"].get<bool>());
  CHECK(report["pde"]["pass"].get<bool>());
  CHECK(report["conditional_equivalence"]["pass"].get<bool>());
}

TEST_CASE("project subcommand reports the state space") {
  TempDir dir;
  json doc = base_config();
  doc["model"]["velocities"] = {{0.0, 0.0}, {1.0, 1.0}, {2.0, 2.0}};
  doc["query"]["points"] = {{1.0, 1.0}, {3.0, 3.0}};
  const fs::path cfg = write_config(dir, doc);
  REQUIRE(run_cli("project --config " + cfg.string() + " --out " + (dir.path / "o").string()) == 0);
  const json report = json::parse(slurp(dir.path / "o" / "projection.json"));
  CHECK(report["state_space_dim"].get<int>() == 1);
  CHECK(report["projection_rows"] == json::array({0}));
  CHECK_FALSE(report["minimal"].get<bool>());
  const std::string csv = slurp(dir.path / "o" / "classify.csv");
  CHECK(csv.find("inner") != std::string::npos);
  CHECK(csv.find("outside") != std::string::npos);
}
