#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "equitrace/run.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into the captured output.
Outcome run_cli(const std::string& args) {
  const std::string cmd = std::string(EQUITRACE_CLI) + " " + args + " 2>&1";
  Outcome o;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return o;
  std::array<char, 4096> buf{};
  size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) o.out.append(buf.data(), n);
  const int status = pclose(p);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("equitrace_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, TranslationRunAll) {
  const auto dir = scratch("translation");
  const auto o = run_cli("all --config translation --out " + dir.string());
  EXPECT_EQ(o.code, 0) << o.out;
  for (const char* f : {"orbits.csv", "trace.json", "pairing-curve.csv", "verify.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto trace = json::parse(slurp(dir / "trace.json"));
  ASSERT_EQ(trace["atoms"].size(), 1u);
  EXPECT_NEAR(trace["atoms"][0]["weight"].get<double>(), 1.0, 1e-10);
  EXPECT_TRUE(trace["failures"].empty());
  const std::string csv = slurp(dir / "orbits.csv");
  EXPECT_EQ(csv.rfind("x_payload,l,m0_1,kind,T_sharp,T_gamma,det_one_minus_P,residual\n", 0), 0u);
  EXPECT_NE(csv.find("proper_line"), std::string::npos);
}

TEST(Cli, DegenerateTraceFails) {
  const auto o = run_cli("trace --config degenerate --out " + scratch("degenerate").string());
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.out.find("DegenerateOrbit"), std::string::npos) << o.out;
}

TEST(Cli, CoveringVerifyIsExact) {
  const auto dir = scratch("covering");
  const auto o = run_cli("verify --config circle_up --mode covering --out " + dir.string());
  EXPECT_EQ(o.code, 0) << o.out;
  const auto v = json::parse(slurp(dir / "verify.json"));
  EXPECT_TRUE(v["exact"].get<bool>());
  EXPECT_LE(v["discrepancy"].get<double>(), 1e-10);
}

TEST(Cli, CatmapVerify) {
  const auto dir = scratch("catmap");
  const auto o = run_cli("verify --config catmap --mode catmap --out " + dir.string());
  EXPECT_EQ(o.code, 0) << o.out;
  const auto v = json::parse(slurp(dir / "verify.json"));
  ASSERT_EQ(v["levels"].size(), 3u);
  for (const auto& row : v["levels"]) EXPECT_LE(row["relative_error"].get<double>(), 1e-8);
}

TEST(Cli, OverridesAndBadInput) {
  const auto dir = scratch("override");
  const auto o = run_cli("trace --config translation --g 1.1 --psi gaussian:1.1:0.1 --out " + dir.string());
  EXPECT_EQ(o.code, 0) << o.out;
  const auto trace = json::parse(slurp(dir / "trace.json"));
  EXPECT_NEAR(trace["atoms"][0]["l"].get<double>(), 1.1, 1e-12);
  EXPECT_NEAR(trace["pairings"][0]["value"].get<double>(), 1.0, 1e-10);
  EXPECT_EQ(run_cli("trace --config no_such_model.cfg").code, 2);
  EXPECT_NE(run_cli("frobnicate --config translation").code, 0);
}

TEST(Cli, ArtifactsAreDeterministic) {
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  ASSERT_EQ(run_cli("all --config suspension_down --out " + a.string()).code, 0);
  ASSERT_EQ(run_cli("all --config suspension_down --threads 2 --out " + b.string()).code, 0);
  for (const char* f : {"orbits.csv", "trace.json", "pairing-curve.csv", "verify.json"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}
