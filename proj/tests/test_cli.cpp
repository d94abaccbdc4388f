#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "qsa/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "qsa");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = qsa::cli::run(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string tmp(const std::string& name) { return (fs::temp_directory_path() / ("qsa_cli_" + name)).string(); }

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines_with(const std::string& text, const std::string& key) {
  std::vector<std::string> out;
  std::istringstream s(text);
  for (std::string l; std::getline(s, l);) {
    if (l.find(key) != std::string::npos) out.push_back(l);
  }
  return out;
}

}  // namespace

TEST(Cli, SelftestPasses) {
  const auto r = run({"selftest"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("all checks passed"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"decompose", "--no-such-flag"}).code, 2);
  EXPECT_EQ(run({"bench", "--mode", "fastest"}).code, 2);
  EXPECT_EQ(run({"gen", "--shape", "2,2"}).code, 2);  // --out required
  EXPECT_EQ(run({"decompose", "--d-in", "0"}).code, 2);
  EXPECT_EQ(run({"decompose", "--from-files", tmp("missing.qtb"), tmp("missing.qtb"), tmp("missing.qtb")}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, BinaryExitCodes) {
  const std::string exe = QSA_CLI_PATH;
  auto status = [&](const std::string& args) {
    const int s = std::system((exe + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("decompose --d-in 2 --d-h 2 --T 4 --seed 7"), 0);
  EXPECT_EQ(status("decompose --tol-decomp 1e-30"), 1);
  EXPECT_EQ(status("decompose --bogus"), 2);
}

TEST(Cli, DecomposeReportsAndFailsAboveTolerance) {
  const auto ok = run({"decompose", "--d-in", "2", "--d-h", "2", "--T", "4", "--seed", "7"});
  EXPECT_EQ(ok.code, 0);
  EXPECT_NE(ok.out.find("within tolerance"), std::string::npos);
  EXPECT_EQ(run({"decompose", "--tol-decomp", "1e-30"}).code, 1);
  EXPECT_EQ(run({"decompose", "--instances", "5", "--conjugate-keys"}).code, 0);
}

TEST(Cli, GenIsByteIdenticalAndFollowsFormat) {
  const auto a = tmp("gen_a.qtb"), b = tmp("gen_b.qtb");
  ASSERT_EQ(run({"gen", "--kind", "input", "--shape", "4,2", "--seed", "3", "--out", a}).code, 0);
  ASSERT_EQ(run({"gen", "--kind", "input", "--shape", "4,2", "--seed", "3", "--out", b}).code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  const auto t = qsa::read_qtb(a);
  EXPECT_EQ(t.shape(), (qsa::Shape{4, 2}));
  for (int c = 0; c < 4; ++c) EXPECT_EQ(t.plane(c).size(), 8u);
  ASSERT_EQ(run({"gen", "--kind", "input", "--shape", "4,2", "--seed", "4", "--out", b}).code, 0);
  EXPECT_NE(slurp(a), slurp(b));
  fs::remove(a);
  fs::remove(b);
}

TEST(Cli, GenIoFailureExitsOne) {
  EXPECT_EQ(run({"gen", "--shape", "2", "--out", "/nonexistent_dir/x.qtb"}).code, 1);
}

TEST(Cli, DecomposeFromFilesReproducesInProcess) {
  const auto x = tmp("x.qtb"), wq = tmp("wq.qtb"), wk = tmp("wk.qtb");
  ASSERT_EQ(run({"gen", "--kind", "input", "--shape", "4,2", "--seed", "7", "--stream", "0", "--out", x}).code, 0);
  ASSERT_EQ(run({"gen", "--kind", "weight", "--shape", "2,2", "--seed", "7", "--stream", "1", "--out", wq}).code, 0);
  ASSERT_EQ(run({"gen", "--kind", "weight", "--shape", "2,2", "--seed", "7", "--stream", "2", "--out", wk}).code, 0);
  const auto files = run({"decompose", "--from-files", x, wq, wk});
  const auto inproc = run({"decompose", "--d-in", "2", "--d-h", "2", "--T", "4", "--seed", "7"});
  EXPECT_EQ(files.code, 0);
  EXPECT_EQ(lines_with(files.out, "residual"), lines_with(inproc.out, "residual"));
  EXPECT_EQ(lines_with(files.out, "residual").size(), 2u);
  for (const auto& p : {x, wq, wk}) fs::remove(p);
}

TEST(Cli, MacsCsvHasTableColumns) {
  const auto out = tmp("macs.csv");
  ASSERT_EQ(run({"macs", "--seq", "512,4096", "--out", out}).code, 0);
  const auto csv = slurp(out);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "T,mode,macs_total,macs_score,softmax_ops,median_ms,dispersion,speedup_vs_componentwise");
  EXPECT_NE(csv.find("512,shared,134217728,67108864,8,,,"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  fs::remove(out);
}

TEST(Cli, BenchJsonCarriesSchemaVersion) {
  const auto out = tmp("bench.json");
  const auto r = run({"bench", "--seq", "16", "--d-model", "8", "--heads", "2", "--warmup", "1", "--reps", "2", "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(out));
  EXPECT_EQ(j.at("schema_version"), 1);
  ASSERT_EQ(j.at("rows").size(), 2u);
  EXPECT_TRUE(j["rows"][0].at("counters_match_model").get<bool>());
  EXPECT_TRUE(j["rows"][0].contains("speedup_vs_componentwise"));
  fs::remove(out);
}

TEST(Cli, BenchWorkersAreLabeled) {
  const auto out = tmp("bench_w.json");
  const auto r = run({"bench", "--seq", "8", "--d-model", "8", "--heads", "4", "--warmup", "1", "--reps", "1",
                      "--workers", "2", "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("not comparable"), std::string::npos);
  const auto j = nlohmann::json::parse(slurp(out));
  EXPECT_EQ(j["rows"][0].at("workers"), 2);
  EXPECT_FALSE(j["rows"][0].at("comparable_protocol").get<bool>());
  EXPECT_TRUE(j["rows"][0].at("counters_match_model").get<bool>());
  EXPECT_EQ(run({"bench", "--workers", "0"}).code, 2);
  fs::remove(out);
}

TEST(Cli, GradientCommands) {
  const auto g = run({"gradnorm", "--batch", "2", "--seq", "6", "--d-model", "4", "--trials", "2"});
  EXPECT_EQ(g.code, 0) << g.out;
  EXPECT_NE(g.out.find("ratio"), std::string::npos);
  const auto c = run({"gradcorr", "--batch", "3", "--seq", "6", "--d-model", "4", "--trials", "3", "--tol-offdiag", "1.01"});
  EXPECT_EQ(c.code, 0) << c.out;
  EXPECT_EQ(run({"gradnorm", "--loss", "hinge"}).code, 2);
}

TEST(Cli, AgreementFromRandomInitAndFiles) {
  const auto r = run({"agreement", "--seq", "8", "--d-model", "4", "--heads", "2", "--inputs", "2", "--k", "3"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("chance 1/T = 12.5%"), std::string::npos);
  const auto maps = tmp("maps.qtb");
  ASSERT_EQ(run({"gen", "--kind", "maps", "--shape", "2,4,8,8", "--out", maps}).code, 0);
  const auto json = tmp("agree.json");
  EXPECT_EQ(run({"agreement", "--maps", maps, "--out", json}).code, 0);
  const auto j = nlohmann::json::parse(slurp(json));
  EXPECT_EQ(j.at("pairs").size(), 6u);
  EXPECT_EQ(j.at("instances").size(), 2u);
  const auto bad = tmp("badmaps.qtb");
  ASSERT_EQ(run({"gen", "--kind", "maps", "--shape", "3,8,8", "--out", bad}).code, 0);
  EXPECT_EQ(run({"agreement", "--maps", bad}).code, 2);
  for (const auto& p : {maps, json, bad}) fs::remove(p);
}

TEST(Cli, SimcompareIdenticalFiles) {
  const auto a = tmp("sa.qtb");
  ASSERT_EQ(run({"gen", "--shape", "50", "--out", a}).code, 0);
  const auto csv = tmp("sim.csv");
  const auto r = run({"simcompare", "--a", a, "--b", a, "--n-q", "20", "--out", csv});
  EXPECT_EQ(r.code, 0);
  const auto text = slurp(csv);
  EXPECT_NE(text.find("200,200,0,0,1"), std::string::npos) << text;
  EXPECT_EQ(run({"simcompare", "--a", a}).code, 2);
  EXPECT_EQ(run({"simcompare", "--seq", "8", "--d-model", "4", "--heads", "1"}).code, 0);
  fs::remove(a);
  fs::remove(csv);
}
