#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "deermc/cli/app.hpp"
#include "deermc/cli/config.hpp"
#include "deermc/cli/experiment.hpp"
#include "deermc/cli/trace_file.hpp"
#include "deermc/core/errors.hpp"

using namespace deermc;
using namespace deermc::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("deermc_cli_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct CliResult {
  int code;
  std::string out, err;
};

CliResult invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "deermc");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

TraceFile iid_trace(std::size_t T, std::size_t D, std::uint64_t seed) {
  TraceFile f;
  f.T = T;
  f.B = 1;
  f.D = D;
  f.sampler = "mala";
  f.seed = seed;
  f.init.assign(D, 0.0);
  f.config = {{"target", "std-normal"}};
  StateSequence s(T, D);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  for (auto& v : s.data()) v = g(rng);
  f.chains.push_back(std::move(s));
  return f;
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("config: settings echo round-trips") {
  RunConfig c;
  apply_setting(c, "sampler", "hmc");
  apply_setting(c, "target", "rosenbrock");
  apply_setting(c, "eps", "0.123456789012345");
  apply_setting(c, "leapfrog_steps", "16");
  apply_setting(c, "clip", "0.7");
  apply_setting(c, "mass", "1,2.5");
  apply_setting(c, "full-trace", "true");
  apply_setting(c, "rosenbrock", "0,0.03,100,1");
  RunConfig d;
  for (const auto& [k, v] : settings(c)) apply_setting(d, k, v);
  CHECK(settings(d) == settings(c));
  CHECK(d.eps == c.eps);
  CHECK(d.leapfrog_steps == 16);
  CHECK(d.mass == std::vector<double>{1.0, 2.5});
  CHECK(d.full_trace);

  RunConfig e = config_from_echo(config_echo(c));
  CHECK(settings(e) == settings(c));

  RunConfig inf;
  for (const auto& [k, v] : settings(RunConfig{})) apply_setting(inf, k, v);
  CHECK(std::isinf(inf.clip));
}

TEST_CASE("config: usage errors name the field") {
  RunConfig c;
  CHECK_THROWS_AS(apply_setting(c, "bogus", "1"), UsageError);
  CHECK_THROWS_AS(apply_setting(c, "T", "abc"), UsageError);
  c.damping = 1.5;
  try {
    c.validate();
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(e.field() == "damping");
  }
}

TEST_CASE("config: file loading with comments") {
  TempDir dir;
  {
    std::ofstream f(dir / "c.cfg");
    f << "# comment\nsampler = hmc\n\nT=64  # trailing\neps=0.25\n";
  }
  RunConfig c;
  load_config_file(c, dir / "c.cfg");
  CHECK(c.sampler == SamplerKind::hmc);
  CHECK(c.T == 64);
  CHECK(c.eps == 0.25);
}

TEST_CASE("trace file: payload bit-identical and header round-trip") {
  TempDir dir;
  TraceFile f = iid_trace(37, 3, 5);
  f.B = 2;
  f.chains.push_back(iid_trace(37, 3, 6).chains[0]);
  f.chains[1](4, 1) = -0.0;
  f.chains[1](5, 2) = 1e-310;
  write_trace(dir / "t.bin", f);
  CHECK(fs::file_size(dir / "t.bin") == 2 * 37 * 3 * 8);
  TraceFile g = read_trace(dir / "t.bin");
  CHECK(g.T == 37);
  CHECK(g.B == 2);
  CHECK(g.D == 3);
  CHECK(g.sampler == f.sampler);
  CHECK(g.seed == f.seed);
  CHECK(g.config == f.config);
  CHECK(header_json(g) == header_json(f));
  for (std::size_t b = 0; b < 2; ++b)
    CHECK(std::memcmp(g.chains[b].data().data(), f.chains[b].data().data(), 37 * 3 * 8) == 0);
  write_trace(dir / "u.bin", g);
  CHECK(slurp(dir / "u.bin") == slurp(dir / "t.bin"));

  auto side = nlohmann::json::parse(slurp(sidecar_path(dir / "t.bin")));
  CHECK(side["schema_version"] == kTraceSchemaVersion);
  CHECK(side["dtype"] == "f64");
  CHECK(side["byte_order"] == "little");

  {
    std::ofstream trunc(dir / "t.bin", std::ios::binary | std::ios::trunc);
    trunc << "short";
  }
  CHECK_THROWS_AS(read_trace(dir / "t.bin"), ConfigError);
  CHECK_THROWS_AS(read_trace(dir / "missing.bin"), ConfigError);
}

TEST_CASE("diff: identical passes, perturbation fails at the right step") {
  TempDir dir;
  TraceFile a = iid_trace(100, 2, 1);
  write_trace(dir / "a.bin", a);
  auto same = invoke({"diff", dir / "a.bin", dir / "a.bin"});
  CHECK(same.code == kExitOk);
  CHECK(nlohmann::json::parse(same.out)["pass"] == true);

  TraceFile b = a;
  const double atol = 1e-4;
  b.chains[0](42, 1) += 10 * atol + 1e-3 * std::abs(a.chains[0](42, 1)) * 10;
  write_trace(dir / "b.bin", b);
  auto diff = invoke({"diff", dir / "a.bin", dir / "b.bin", "--atol", "1e-4", "--rtol", "1e-3", "--out", dir / "steps.csv"});
  CHECK(diff.code == kExitDiffFailure);
  auto j = nlohmann::json::parse(diff.out);
  CHECK(j["pass"] == false);
  CHECK(j["first_divergence"]["step"] == 42);
  CHECK(j["first_divergence"]["dim"] == 1);
  CHECK(fs::exists(dir / "steps.csv"));

  TraceFile c = iid_trace(50, 2, 1);
  write_trace(dir / "c.bin", c);
  CHECK_THROWS_AS(diff_traces(a, c, 1e-4, 1e-3), StructuralError);
  CHECK(invoke({"diff", dir / "a.bin", dir / "c.bin"}).code != kExitOk);
}

TEST_CASE("metrics: halves of iid trace, ess, acceptance") {
  TempDir dir;
  TraceFile f = iid_trace(4000, 2, 11);
  write_trace(dir / "iid.bin", f);
  auto r = invoke({"metrics", dir / "iid.bin"});
  REQUIRE(r.code == kExitOk);
  auto j = nlohmann::json::parse(r.out);
  const auto& c = j["chains"][0];
  CHECK(std::abs(c["mmd2"].get<double>()) < 0.01);
  CHECK(c["ess"]["min"].get<double>() > 0.8 * 4000);
  CHECK(c["ess"]["min"].get<double>() < 1.2 * 4000);
  // continuous iid draws move every step
  CHECK(c["acceptance"].get<double>() == 1.0);
  CHECK(c.contains("bandwidth"));

  auto exact = invoke({"metrics", dir / "iid.bin", "--reference-target", "exact", "--which", "mmd", "--bootstrap", "20"});
  REQUIRE(exact.code == kExitOk);
  auto je = nlohmann::json::parse(exact.out);
  CHECK(std::abs(je["chains"][0]["mmd2"].get<double>()) < 0.01);
  CHECK(je["chains"][0]["mmd2_se"].get<double>() > 0);
}

TEST_CASE("bench: single cell grid gives header and one row") {
  std::ostringstream csv;
  RunConfig c;
  c.T = 32;
  BenchGrid g{{32}, {1}, {Method::quasi_deer}};
  CHECK(cmd_bench(c, g, csv) == kExitOk);
  std::istringstream in(csv.str());
  std::string header, row, extra;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == kBenchHeader);
  CHECK(row.rfind("mala,quasi-deer,1,32,", 0) == 0);
  CHECK_FALSE(std::getline(in, extra));

  auto r = invoke({"bench", "--T", "16", "--grid-T", "16", "--grid-B", "1", "--grid-methods", "sequential"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.rfind(kBenchHeader, 0) == 0);
}

TEST_CASE("run: T=1 converges in at most 2 iterations") {
  RunConfig c;
  c.T = 1;
  WorkerPool pool(1);
  auto run = execute_run(c, pool);
  REQUIRE(run.chains.size() == 1);
  CHECK(run.chains[0].converged);
  CHECK(run.chains[0].iterations <= 2);
}

TEST_CASE("run: sequential and quasi-deer traces agree through diff") {
  TempDir dir;
  for (std::string sampler : {"mala", "hmc"}) {
    auto s = invoke({"run", "--sampler", sampler, "--T", "300", "--B", "2", "--seed", "7", "--method", "sequential", "--out",
                  dir / "s.bin"});
    REQUIRE(s.code == kExitOk);
    auto q = invoke({"run", "--sampler", sampler, "--T", "300", "--B", "2", "--seed", "7", "--method", "quasi-deer", "--out",
                  dir / "q.bin"});
    REQUIRE(q.code == kExitOk);
    auto rep = nlohmann::json::parse(q.out);
    CHECK(rep["converged"] == true);
    CHECK(rep["chains"].size() == 2);
    CHECK(fs::exists(dir / "q.bin.report.json"));
    CHECK(invoke({"diff", dir / "s.bin", dir / "q.bin"}).code == kExitOk);
  }
  auto g = invoke({"run", "--sampler", "gibbs", "--T", "200", "--method", "sequential", "--out", dir / "g.bin"});
  CHECK(g.code == kExitOk);
  CHECK(read_trace(dir / "g.bin").D == 18);
}

TEST_CASE("run: config echo in sidecar reproduces the run") {
  TempDir dir;
  auto a = invoke({"run", "--T", "50", "--eps", "0.3", "--seed", "3", "--out", dir / "a.bin"});
  REQUIRE(a.code == kExitOk);
  RunConfig c = config_from_echo(read_trace(dir / "a.bin").config);
  CHECK(c.T == 50);
  CHECK(c.eps == 0.3);
  CHECK(c.seed == 3);
}

TEST_CASE("exit codes") {
  CHECK(invoke({}).code == kExitUsage);
  CHECK(invoke({"frobnicate"}).code == kExitUsage);
  CHECK(invoke({"run", "--T", "0"}).code == kExitUsage);
  auto bad = invoke({"run", "--damping", "2"});
  CHECK(bad.code == kExitUsage);
  CHECK(bad.err.find("damping") != std::string::npos);
  CHECK(invoke({"run", "--target", "/nonexistent.csv"}).code == kExitUsage);
  // undamped quasi-deer on the mixture overflows
  CHECK(invoke({"run", "--target", "mog", "--T", "2000"}).code == kExitDivergence);
  CHECK(invoke({"run", "--T", "10"}).code == kExitOk);
}
