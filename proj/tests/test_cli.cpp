#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch_path(const std::string& name) {
  return fs::temp_directory_path() / ("qlab_cli_test_" + std::to_string(::getpid())) / name;
}

struct ScratchCleanup {
  ~ScratchCleanup() { fs::remove_all(scratch_path("")); }
} cleanup;

// A fresh (removed) path under the per-process scratch directory.
fs::path scratch(const std::string& name) {
  const fs::path p = scratch_path(name);
  fs::remove_all(p);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(QLAB_BINARY) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const std::string& name, const nlohmann::json& j) {
  const fs::path dir = scratch("configs");
  fs::create_directories(dir.parent_path());
  const fs::path p = dir.parent_path() / (name + ".json");
  std::ofstream(p) << j.dump();
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t count = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++count;
    if (slurp(e.path()) != slurp(b / e.path().filename())) return false;
  }
  return count > 0 && count == static_cast<std::size_t>(std::distance(fs::directory_iterator(b), {}));
}

nlohmann::json small_orbit_config() {
  nlohmann::json j;
  {
    std::ifstream in(QLAB_CONFIGS "/orbit_integral.json");
    j = nlohmann::json::parse(in);
  }
  j.erase("group_file");
  std::ifstream g(QLAB_CONFIGS "/golden_group.json");
  j["group"] = nlohmann::json::parse(g);
  j["samples"] = 2000;
  j["partial_sum_depth"] = 4;
  j["partial_sum_samples"] = 50;
  j["two_sided_depth"] = 1;
  return j;
}

}  // namespace

TEST_CASE("malformed configs exit 2 without output") {
  const fs::path out = scratch("bad");
  const fs::path wrong_type = write_config("wrong_type", {{"n", 6}, {"m", "seventeen"}});
  CHECK(run("bubble-check --config " + wrong_type.string() + " --out " + out.string()) == 2);
  CHECK_FALSE(fs::exists(out));

  const fs::path unknown = write_config("unknown", {{"n", 6}, {"bogus", 1}});
  CHECK(run("q-audit --config " + unknown.string() + " --out " + out.string()) == 2);
  const fs::path small_n = write_config("small_n", {{"n", 4}});
  CHECK(run("q-audit --config " + small_n.string() + " --out " + out.string()) == 2);
  const fs::path mismatch = write_config("mismatch", {{"n", 6}, {"experiment", "poincare"}});
  CHECK(run("q-audit --config " + mismatch.string() + " --out " + out.string()) == 2);

  auto no_seed = small_orbit_config();
  no_seed.erase("seed");
  CHECK(run("orbit-integral --config " + write_config("no_seed", no_seed).string() + " --out " + out.string()) == 2);

  std::ofstream(out.parent_path() / "broken.json") << "{ \"n\": 6,";
  CHECK(run("q-audit --config " + (out.parent_path() / "broken.json").string() + " --out " + out.string()) == 2);
  CHECK(run("q-audit --config /nonexistent.json --out " + out.string()) == 2);
  CHECK(run("no-such-experiment --config " + small_n.string() + " --out " + out.string()) == 2);
  CHECK(run("q-audit --out " + out.string()) == 2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("q-audit records both coefficients and expects the printed one to fail") {
  const fs::path out = scratch("q_audit");
  REQUIRE(run("q-audit --config " QLAB_CONFIGS "/q_audit.json --out " + out.string()) == 0);
  std::ifstream in(out / "report.json");
  const auto report = nlohmann::json::parse(in);
  CHECK(report["results"]["as_printed"]["exact"] == "21/4");
  CHECK(report["results"]["as_printed"]["value"] == 5.25);
  CHECK(report["results"]["covariance_consistent"]["exact"] == "24");
  CHECK(report["assertions"][1]["outcome"] == "XFAIL");
  CHECK(report["passed"] == true);
}

TEST_CASE("outputs are byte identical for a fixed config and seed") {
  const fs::path cfg = write_config("orbit", small_orbit_config());
  const fs::path a = scratch("run_a"), b = scratch("run_b"), c = scratch("run_c");
  REQUIRE(run("orbit-integral --config " + cfg.string() + " --out " + a.string() + " --threads 1") == 0);
  REQUIRE(run("orbit-integral --config " + cfg.string() + " --out " + b.string() + " --threads 3") == 0);
  CHECK(same_tree(a, b));
  REQUIRE(run("orbit-integral --config " + cfg.string() + " --out " + c.string() + " --seed 99") == 0);
  CHECK(slurp(a / "words.csv") != slurp(c / "words.csv"));
}

TEST_CASE("shipped configs run and pass") {
  for (const char* name : {"q_audit", "radial_blowup", "poincare", "paneitz_functional", "blowup",
                           "moving_plane_bubble", "moving_plane_automorphic", "orbit_integral", "bubble_check"}) {
    const fs::path cfg = fs::path(QLAB_CONFIGS) / (std::string(name) + ".json");
    std::ifstream in(cfg);
    const auto j = nlohmann::json::parse(in);
    const fs::path out = scratch(name);
    CAPTURE(name);
    CHECK(run(j["experiment"].get<std::string>() + " --config " + cfg.string() + " --out " + out.string()) == 0);
    CHECK(fs::exists(out / "report.json"));
  }
  const fs::path radial = scratch_path("radial_blowup") / "radial_blowup.csv";
  std::ifstream csv(radial);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "r,w_bar,u_bar,bound_k1,bound_k2,bound_k3");
}
