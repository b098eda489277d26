#include "deermc/cli/app.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "deermc/cli/experiment.hpp"

namespace deermc::cli {
namespace {

const std::vector<std::string> kBoolSettings{"orthogonal", "full-trace", "csv"};

bool is_bool_setting(const std::string& k) {
  return std::find(kBoolSettings.begin(), kBoolSettings.end(), k) != kBoolSettings.end();
}

// Adds every RunConfig setting as --name; values land in `values`, flags in `flags`.
void add_setting_options(CLI::App* cmd, std::map<std::string, std::string>& values,
                         std::map<std::string, bool>& flags, std::string& config_file) {
  cmd->add_option("--config", config_file, "key=value config file; flags override it");
  for (const auto& name : setting_names()) {
    if (is_bool_setting(name))
      cmd->add_flag("--" + name, flags[name]);
    else
      cmd->add_option("--" + name, values[name]);
  }
}

RunConfig build_config(CLI::App* cmd, const std::map<std::string, std::string>& values,
                       const std::map<std::string, bool>& flags, const std::string& config_file) {
  RunConfig cfg;
  if (!config_file.empty()) load_config_file(cfg, config_file);
  for (const auto& [k, v] : values)
    if (cmd->count("--" + k)) apply_setting(cfg, k, v);
  for (const auto& [k, v] : flags)
    if (cmd->count("--" + k)) apply_setting(cfg, k, v ? "true" : "false");
  cfg.validate();
  return cfg;
}

std::size_t parse_size(const std::string& field, const std::string& s) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || v == 0)
    throw UsageError(field, "expected a positive integer, got '" + s + "'");
  return v;
}

template <class T, class F>
std::vector<T> split_list(const std::string& field, const std::string& text, F parse) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw UsageError(field, "empty list entry");
    out.push_back(parse(item));
  }
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parallel-in-time MCMC chain evaluation", "deermc"};
  app.require_subcommand(1);

  std::map<std::string, std::string> run_values, bench_values;
  std::map<std::string, bool> run_flags, bench_flags;
  std::string run_config, bench_config;

  auto* run = app.add_subcommand("run", "Run B chains and write the trace plus a JSON report");
  add_setting_options(run, run_values, run_flags, run_config);

  auto* bench = app.add_subcommand("bench", "Time a grid of (method, B, T) cells; CSV to stdout or --out");
  add_setting_options(bench, bench_values, bench_flags, bench_config);
  std::string grid_T, grid_B, grid_methods;
  bench->add_option("--grid-T", grid_T, "comma-separated chain lengths");
  bench->add_option("--grid-B", grid_B, "comma-separated chain counts");
  bench->add_option("--grid-methods", grid_methods, "comma-separated methods");

  auto* metrics = app.add_subcommand("metrics", "MMD, ESS and acceptance of a trace file");
  MetricsRequest mreq;
  std::string which = "mmd,ess,acceptance", metrics_out;
  metrics->add_option("trace", mreq.trace, "trace payload path")->required();
  metrics->add_option("--reference", mreq.reference, "reference trace file");
  metrics->add_option("--reference-target", mreq.reference_target, "'exact': exact draws from the trace's target");
  metrics->add_option("--reference-n", mreq.reference_n);
  metrics->add_option("--which", which, "comma-separated subset of mmd,ess,acceptance");
  metrics->add_option("--max-subsample", mreq.max_subsample);
  metrics->add_option("--median-reps", mreq.mh_reps);
  metrics->add_option("--thin", mreq.thin);
  metrics->add_option("--burn-in", mreq.burn_in);
  metrics->add_option("--bootstrap", mreq.bootstrap, "bootstrap resamples for the MMD standard error");
  metrics->add_option("--seed", mreq.seed);
  metrics->add_option("--out", metrics_out);

  auto* diff = app.add_subcommand("diff", "Elementwise tolerance test between two traces");
  std::string diff_a, diff_b, diff_out;
  double atol = 1e-4, rtol = 1e-3;
  diff->add_option("a", diff_a)->required();
  diff->add_option("b", diff_b)->required();
  diff->add_option("--atol", atol);
  diff->add_option("--rtol", rtol);
  diff->add_option("--out", diff_out, "per-step error CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  try {
    if (*run) return cmd_run(build_config(run, run_values, run_flags, run_config), out);
    if (*bench) {
      RunConfig cfg = build_config(bench, bench_values, bench_flags, bench_config);
      BenchGrid grid;
      if (!grid_T.empty())
        grid.T = split_list<std::size_t>("grid-T", grid_T, [](const std::string& s) { return parse_size("grid-T", s); });
      if (!grid_B.empty())
        grid.B = split_list<std::size_t>("grid-B", grid_B, [](const std::string& s) { return parse_size("grid-B", s); });
      if (!grid_methods.empty())
        grid.methods = split_list<Method>("grid-methods", grid_methods, [](const std::string& s) {
          RunConfig tmp;
          apply_setting(tmp, "method", s);
          return tmp.method;
        });
      if (cfg.out.empty()) return cmd_bench(cfg, grid, out);
      std::ofstream f(cfg.out, std::ios::trunc);
      if (!f) throw UsageError("out", "cannot write '" + cfg.out + "'");
      return cmd_bench(cfg, grid, f);
    }
    if (*metrics) {
      mreq.which = split_list<std::string>("which", which, [](const std::string& s) { return s; });
      return cmd_metrics(mreq, out, metrics_out);
    }
    if (*diff) return cmd_diff(diff_a, diff_b, atol, rtol, out, diff_out);
  } catch (const DivergedError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace deermc::cli
