#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "frachelm/cli.hpp"
#include "frachelm/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("frachelm_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(const std::string& command, const json& config, const fs::path& dir, std::vector<std::string> extra = {}) {
  const fs::path cfg = dir / "config.json";
  std::ofstream(cfg) << config.dump(2);
  std::vector<std::string> args{command, "--config", cfg.string(), "--output", (dir / "out").string()};
  args.insert(args.end(), extra.begin(), extra.end());
  std::ostringstream out, err;
  const int code = frachelm::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

json small_config() {
  return json{{"geometry", {{"h", 0.1}}},
              {"physics", {{"k", 1.0}, {"q", {{"kind", "prior_draw"}, {"seed", 3}}}}},
              {"prior", {{"J_KL", 4}}},
              {"obs", {{"J", 4}, {"moll_radius", 0.1}}}};
}

}  // namespace

TEST_CASE("selftest passes") {
  std::ostringstream out, err;
  CHECK(frachelm::cli::run({"selftest"}, out, err) == 0);
  CHECK(out.str().find("FAIL") == std::string::npos);
  CHECK(out.str().find("PASS") != std::string::npos);
}

TEST_CASE("forward-loss with no contrast and no attenuation writes a zero field") {
  const fs::path dir = scratch_dir("zero");
  json c = small_config();
  c["physics"]["q"] = {{"kind", "constant"}, {"value", 0.0}};
  c["physics"]["tau_tilde"] = 0.0;
  const Run r = run_cli("forward-loss", c, dir);
  REQUIRE(r.code == 0);
  std::ifstream is(dir / "out" / "field.csv");
  std::string line;
  std::getline(is, line);
  int rows = 0;
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    REQUIRE(v.size() >= 4);
    CHECK(v[v.size() - 2] == 0.0);
    CHECK(v[v.size() - 1] == 0.0);
    ++rows;
  }
  CHECK(rows > 100);
  const json m = json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(m["exit_code"] == 0);
  CHECK(m["command"] == "forward-loss");
  CHECK(m["config"]["geometry"]["h"] == 0.1);
  CHECK(m["outputs"].size() >= 2);
}

TEST_CASE("invalid configurations exit with code 2 and a located message") {
  const fs::path dir = scratch_dir("bad");
  json c = small_config();
  c["geometry"]["bogus"] = 1;
  Run r = run_cli("forward-loss", c, dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("bogus") != std::string::npos);
  CHECK(r.err.find("line ") != std::string::npos);

  c = small_config();
  c["geometry"]["h"] = -0.1;
  CHECK(run_cli("forward-loss", c, dir).code == 2);

  c = small_config();
  c["geometry"]["r_q"] = 0.2;
  CHECK(run_cli("forward-loss", c, dir).code == 2);

  CHECK_THROWS_AS(frachelm::cli::parse_config("{\n  \"geometry\": {\n    \"h\": \n}"), frachelm::ConfigError);
  try {
    frachelm::cli::parse_config("{\n\"prior\": {\n\"s\": \"x\"}}");
    FAIL("expected a config error");
  } catch (const frachelm::ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  std::ostringstream out, err;
  CHECK(frachelm::cli::run({"forward-loss"}, out, err) == 2);
  CHECK(frachelm::cli::run({"no-such-command"}, out, err) == 2);
  CHECK(frachelm::cli::run({"forward-loss", "--config", (dir / "missing.json").string()}, out, err) == 2);
}

TEST_CASE("config round-trips through JSON") {
  const auto a = frachelm::cli::parse_config(small_config().dump());
  const auto b = frachelm::cli::parse_config(frachelm::cli::to_json(a).dump());
  CHECK(frachelm::cli::to_json(a) == frachelm::cli::to_json(b));
}

TEST_CASE("runs are deterministic for a fixed seed") {
  const fs::path d1 = scratch_dir("det1"), d2 = scratch_dir("det2");
  json c = small_config();
  c["run"] = {{"n_steps", 200}};
  REQUIRE(run_cli("pcn", c, d1, {"--threads", "1"}).code == 0);
  REQUIRE(run_cli("pcn", c, d2, {"--threads", "2"}).code == 0);
  CHECK(slurp(d1 / "out" / "chain.csv") == slurp(d2 / "out" / "chain.csv"));
  REQUIRE(run_cli("pcn", c, d2, {"--seed", "9"}).code == 0);
  CHECK(slurp(d1 / "out" / "chain.csv") != slurp(d2 / "out" / "chain.csv"));
  const json m = json::parse(slurp(d2 / "out" / "manifest.json"));
  CHECK(m["seeds"]["run"] == 9);
  CHECK(m["seeds"]["pcn"] == 11);
}

TEST_CASE("forward-disp converges at small k") {
  const fs::path dir = scratch_dir("disp");
  json c = small_config();
  c["physics"]["k"] = 0.1;
  c["physics"]["q"] = {{"kind", "constant"}, {"value", 0.5}};
  const Run r = run_cli("forward-disp", c, dir);
  CHECK(r.code == 0);
  CHECK(slurp(dir / "out" / "history.csv").rfind("iter,update_norm_g,update_norm_u,residual\n", 0) == 0);
}

TEST_CASE("numerical failures exit with code 3 and are recorded in the manifest") {
  const fs::path dir = scratch_dir("diverge");
  json c = small_config();
  c["physics"]["k"] = 4.0;
  c["physics"]["q"] = {{"kind", "constant"}, {"value", 2.0}};
  c["run"] = {{"max_iter", 50}};
  const Run r = run_cli("forward-disp", c, dir);
  CHECK(r.code == 3);
  const json m = json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(m["exit_code"] == 3);
  CHECK(m.contains("error"));
}

TEST_CASE("consistency writes one row per n") {
  const fs::path dir = scratch_dir("consistency");
  json c = small_config();
  c["run"] = {{"posterior", "exact"}, {"n_list", {1, 2, 4, 8}}, {"boundary", "absorbing"}};
  const Run r = run_cli("consistency", c, dir);
  REQUIRE(r.code == 0);
  std::ifstream is(dir / "out" / "consistency.csv");
  std::string line;
  std::getline(is, line);
  CHECK(line == "n,gap_Gn,gap_G,cm_norm,seed");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 4);
}
