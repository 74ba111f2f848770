#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "steklov/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = steklov::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

/// Runs the installed binary through the shell; returns its exit status and stdout.
std::pair<int, std::string> run_exe(const std::string& args) {
  const std::string cmd = std::string(STEKLOV_LAB_EXE) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string text;
  char buf[4096];
  while (std::size_t k = fread(buf, 1, sizeof buf, pipe)) text.append(buf, k);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, text};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("steklov_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Cli, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"rearrange", "norm", "check-weight", "eigen", "bifurcate", "scan", "demo"})
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  EXPECT_EQ(run({"eigen", "--help"}).code, 0);
}

TEST(Cli, UsageErrorsExitTwo) {
  auto r = run({});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("\"error\":\"usage\""), std::string::npos);
  EXPECT_EQ(run({"eigen", "--no-such-flag"}).code, 2);
  EXPECT_EQ(run({"eigen", "--domain", "box", "--weight", "composite:g3-box", "--p", "3"}).code, 2);
  EXPECT_EQ(run({"check-weight", "--domain", "box", "--weight", "nonsense"}).code, 2);
  EXPECT_EQ(run_exe("").first, 2);
}

TEST(Cli, CheckWeightMembership) {
  const auto r = run({"check-weight", "--domain", "disk", "--weight", "g1-circle", "--class", "F:2"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("\"verdict\":\"non-member\""), std::string::npos);
  const auto g = run({"check-weight", "--domain", "box", "--weight", "g3-box", "--class", "G:1"});
  EXPECT_NE(g.out.find("\"verdict\":\"member\""), std::string::npos);
}

TEST(Cli, AdmissibilityOfCatalogComposite) {
  const auto r = run({"check-weight", "--domain", "box", "--weight", "composite:g3-box:q=2", "--p", "2"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("\"admissible\":true"), std::string::npos);
}

TEST(Cli, InadmissibleWeightExitsOne) {
  const auto r = run({"eigen", "--domain", "square", "--n", "4", "--weight", "const:1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("\"error\":\"inadmissible\""), std::string::npos);
  EXPECT_EQ(run_exe("eigen --domain square --n 4 --weight const:1").first, 1);
}

TEST(Cli, RearrangeCsv) {
  const auto r = run({"rearrange", "--domain", "box", "--n", "4", "--weight", "g3-box"});
  EXPECT_EQ(r.code, 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,value");
  double prev = 1e300;
  int rows = 0;
  while (std::getline(in, line)) {
    const double v = std::stod(line.substr(line.find(',') + 1));
    EXPECT_LE(v, prev);
    prev = v;
    ++rows;
  }
  EXPECT_GT(rows, 2);
}

TEST(Cli, NormJson) {
  const auto r = run({"norm", "--domain", "box", "--weight", "g3-box", "--p", "2", "--q", "inf"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("\"quasi_norm\":1.41421356237309"), std::string::npos) << r.out;
  EXPECT_EQ(run({"norm", "--domain", "box", "--weight", "g3-box"}).code, 2);  // --p required
}

TEST(Cli, WeightFromCsv) {
  const auto d = scratch("weights");
  {
    std::ofstream f(d / "w.csv");
    f << "# sixteen edges of the 4x4 square\nvalue\n";
    for (int e = 0; e < 16; ++e) f << (e == 0 ? 10.0 : -1.0) << "\n";
  }
  const auto ok = run({"eigen", "--domain", "square", "--n", "4", "--weight", (d / "w.csv").string()});
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_NE(ok.out.find("\"lambda1\""), std::string::npos);
  {
    std::ofstream f(d / "bad.csv");
    f << "value\n1.0\nabc\n";
  }
  const auto bad = run({"check-weight", "--domain", "square", "--n", "4", "--weight", (d / "bad.csv").string()});
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.err.find("line 3"), std::string::npos) << bad.err;
}

TEST(Cli, EigenOracleAgreement) {
  const auto r = run({"eigen", "--domain", "box", "--n", "8", "--weight", "composite:g3-box", "--oracle"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("\"oracle\":\"dense-p2\""), std::string::npos);
  EXPECT_EQ(run({"eigen", "--domain", "box", "--n", "8", "--weight", "composite:g3-box:q=4", "--p", "1.5", "--oracle"}).code, 2);
}

TEST(Cli, BifurcateCsvAndSummary) {
  const auto d = scratch("bif");
  const auto r = run({"bifurcate", "--domain", "box", "--n", "8", "--weight", "composite:g3-box", "--max-points", "5",
                      "--summary", (d / "s.jsonl").string(), "--plot", (d / "b.svg").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "arclength,lambda,w1p_norm,sup_norm,newton_iters");
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 6);
  EXPECT_NE(slurp(d / "s.jsonl").find("max-points"), std::string::npos);
  EXPECT_NE(slurp(d / "b.svg").find("<svg"), std::string::npos);
}

TEST(Cli, ScanSummary) {
  const auto r = run({"scan", "--domain", "box", "--n", "8", "--weight", "composite:g3-box", "--seeds", "4"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("\"nontrivial_within_rho\":0"), std::string::npos);
  EXPECT_NE(r.out.find("\"zero\":4"), std::string::npos);
}

TEST(Cli, DemoIsReproducible) {
  const auto a = scratch("demo_a"), b = scratch("demo_b");
  ASSERT_EQ(run_exe("demo --n 8 --plot --out-dir " + a.string()).first, 0);
  ASSERT_EQ(run_exe("demo --n 8 --plot --out-dir " + b.string()).first, 0);
  for (const char* f : {"admissibility.jsonl", "eigen.jsonl", "phi1.csv", "branch.csv", "branch_summary.jsonl", "branch.svg"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}
