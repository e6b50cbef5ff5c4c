#include <filesystem>
#include <fstream>
#include <sstream>

#include "branchlim/runner.hpp"
#include "doctest.h"

using namespace branchlim;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("branchlim_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

int run(const std::string& cmd, const json& cfg, const fs::path& out) {
  runner::Invocation inv;
  inv.command = cmd;
  inv.config = cfg;
  inv.out = out.string();
  inv.workers = 1;
  std::ostringstream log;
  return runner::run(inv, log);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const json kBinary = {{"family", "explicit"}, {"pmf", {0.5, 0.0, 0.5}}};

}  // namespace

TEST_CASE("exact command writes a table and a manifest") {
  const auto out = scratch("exact");
  const json cfg = {{"offspring", kBinary}, {"functional", "height"}, {"N", 6}, {"seed", 1}};
  REQUIRE(run("exact", cfg, out) == runner::kOk);
  CHECK(fs::exists(out / "tail_table.csv"));
  const auto man = json::parse(slurp(out / "manifest.json"));
  for (const char* k : {"tool", "version", "command", "status", "config", "seed", "workers", "started_utc",
                        "wall_seconds", "results", "artifacts"})
    CHECK(man.contains(k));
  CHECK(man["status"] == "ok");
  CHECK(man["config"]["seed"] == 1);
  for (const auto& e : fs::directory_iterator(out)) CHECK(e.path().filename().string().rfind(".staging", 0) != 0);
}

TEST_CASE("validation failures write nothing") {
  const auto out = scratch("invalid");
  CHECK(run("exact", {{"offspring", kBinary}, {"functional", "height"}, {"N", 6}, {"seed", 1}, {"bogus", 2}}, out) ==
        runner::kValidation);
  CHECK_FALSE(fs::exists(out));
  CHECK(run("exact", {{"offspring", kBinary}, {"functional", "height"}, {"N", 6}}, out) == runner::kValidation);
  CHECK(run("exact", {{"offspring", kBinary}, {"functional", "nope"}, {"N", 6}, {"seed", 1}}, out) ==
        runner::kValidation);
  CHECK(run("exact", {{"offspring", {{"family", "explicit"}, {"pmf", {0.2, 0.2}}}}, {"functional", "height"},
                      {"N", 6}, {"seed", 1}},
            out) == runner::kValidation);
  CHECK(run("sample", {{"offspring", kBinary}, {"kind", "gw"}, {"count", -3}, {"seed", 1}}, out) ==
        runner::kValidation);
  CHECK_FALSE(fs::exists(out));
  CHECK_THROWS_AS(runner::validated_config({"exact", std::nullopt, json::array(), 1, 1, std::nullopt}),
                  runner::ValidationError);
}

TEST_CASE("budget exhaustion leaves a diagnostic manifest only") {
  const auto out = scratch("budget");
  const json cfg = {{"offspring", kBinary},
                    {"kind", "conditioned"},
                    {"functional", "height"},
                    {"conditioning", "tail:60"},
                    {"count", 5},
                    {"budget", {{"max_attempts", 2}}},
                    {"seed", 4}};
  REQUIRE(run("sample", cfg, out) == runner::kBudget);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(out)) files.push_back(e.path().filename().string());
  CHECK(files == std::vector<std::string>{"manifest.json"});
  const auto man = json::parse(slurp(out / "manifest.json"));
  CHECK(man["status"] == "budget_exhausted");
  CHECK(man.contains("diagnostic"));
}

TEST_CASE("reruns are byte-identical and independent of workers") {
  const json cfg = {{"offspring", {{"family", "geometric"}, {"a", 0.5}}},
                    {"functional", "height"},
                    {"b", 2},
                    {"n_grid", {4, 8}},
                    {"mode", "mc"},
                    {"reps", 2000},
                    {"seed", 99}};
  const auto a = scratch("rerun_a"), b = scratch("rerun_b");
  REQUIRE(run("converge-tail", cfg, a) == runner::kOk);
  runner::Invocation inv{"converge-tail", std::nullopt, cfg, std::nullopt, 3, b.string()};
  std::ostringstream log;
  REQUIRE(runner::run(inv, log) == runner::kOk);
  CHECK(slurp(a / "convergence.csv") == slurp(b / "convergence.csv"));
  CHECK(!slurp(a / "convergence.csv").empty());
}

TEST_CASE("seed flag overrides the config") {
  const json cfg = {{"offspring", kBinary}, {"kind", "gw"}, {"count", 20}, {"seed", 1}};
  const auto a = scratch("seed_a"), b = scratch("seed_b");
  runner::Invocation inv{"sample", std::nullopt, cfg, 2, 1, a.string()};
  std::ostringstream log;
  REQUIRE(runner::run(inv, log) == runner::kOk);
  REQUIRE(run("sample", cfg, b) == runner::kOk);
  CHECK(slurp(a / "samples.csv") != slurp(b / "samples.csv"));
  CHECK(json::parse(slurp(a / "manifest.json"))["seed"] == 2);
}

TEST_CASE("command list and version") {
  const auto& cmds = runner::commands();
  CHECK(cmds.size() == 9);
  CHECK_FALSE(runner::version().empty());
}
