#include "deermc/cli/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "deermc/deer/deer.hpp"
#include "deermc/metrics/metrics.hpp"
#include "deermc/samplers/gibbs.hpp"
#include "deermc/samplers/hmc.hpp"
#include "deermc/samplers/mala.hpp"
#include "deermc/targets/dataset.hpp"

namespace deermc::cli {
namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

WorkerPool& pool_for(const RunConfig& cfg, std::unique_ptr<WorkerPool>& owned) {
  if (cfg.threads == 0) return default_pool();
  owned = std::make_unique<WorkerPool>(cfg.threads);
  return *owned;
}

SampleSet stack_chains(const std::vector<StateSequence>& chains, std::size_t stride, std::size_t burn_in) {
  std::vector<double> all;
  std::size_t rows = 0, dim = chains.empty() ? 0 : chains.front().dim();
  for (const auto& c : chains) {
    const auto th = thin(c, stride, burn_in);
    all.insert(all.end(), th.data().begin(), th.data().end());
    rows += th.steps();
  }
  return SampleSet(rows, dim, std::move(all));
}

}  // namespace

std::string resolved_target(const RunConfig& cfg) {
  if (!cfg.target.empty()) return cfg.target;
  return cfg.sampler == SamplerKind::gibbs ? "eight-schools" : "std-normal";
}

ModelSpec resolve_model(const RunConfig& cfg) {
  const std::string t = resolved_target(cfg);
  if (t == "eight-schools") throw UsageError("target", "eight-schools is only available to the gibbs sampler");
  if (t == "std-normal") return std_normal_spec(cfg.dim);
  if (t == "gaussian") {
    const std::size_t d = cfg.dim;
    std::vector<double> mean(d), cov(d * d);
    for (std::size_t i = 0; i < d; ++i) {
      mean[i] = i % 2 ? -1.0 : 1.0;
      for (std::size_t j = 0; j < d; ++j)
        cov[i * d + j] = std::pow(0.5, std::abs(static_cast<double>(i) - static_cast<double>(j)));
    }
    return gaussian_spec_from_covariance(mean, cov);
  }
  if (t == "rosenbrock") {
    const auto& r = cfg.rosenbrock;
    return rosenbrock_spec(r[0], r[1], r[2], r[3]);
  }
  if (t == "mog") return default_mog_spec();
  if (t == "blr-synthetic") return blr_spec(synthetic_logistic().data, cfg.prior_precision);
  if (!std::filesystem::is_regular_file(t)) throw UsageError("target", "unknown target or missing file '" + t + "'");
  return blr_spec(load_design_matrix(t, true), cfg.prior_precision);
}

ChainSetup::ChainSetup(const RunConfig& cfg, const ModelSpec* spec, std::size_t chain, WorkerPool* pool) {
  const std::uint64_t seed = chain_seed(cfg.seed, chain);
  if (cfg.sampler == SamplerKind::gibbs) {
    if (resolved_target(cfg) != "eight-schools") throw UsageError("target", "gibbs runs on eight-schools only");
    const auto data = EightSchoolsData::synthetic();
    auto g = std::make_unique<GibbsSystem>(data, GibbsHyper{}, seed, cfg.T);
    g->materialize(pool);
    init_ = gibbs_initial_state(data);
    base_ = std::move(g);
  } else {
    if (!spec) throw UsageError("target", "missing model");
    const auto model = make_model(*spec);
    if (!cfg.mass.empty() && cfg.mass.size() != model->dim())
      throw UsageError("mass", "needs " + std::to_string(model->dim()) + " entries");
    switch (cfg.sampler) {
      case SamplerKind::mala:
        base_ = std::make_unique<MalaSystem>(MalaKernel{model, cfg.eps}, seed, cfg.T);
        break;
      case SamplerKind::hmc:
        base_ = std::make_unique<HmcSystem>(HmcKernel{model, cfg.eps, cfg.leapfrog_steps, cfg.mass}, seed, cfg.T);
        break;
      default: {
        HmcStepOptions opts;
        if (cfg.method == Method::sequential) {
          opts.mode = LeapfrogMode::sequential;
        } else {
          opts.mode = LeapfrogMode::parallel;
          opts.deer = cfg.deer_config();
        }
        base_ = std::make_unique<HmcSystem>(HmcKernel{model, cfg.eps, cfg.leapfrog_steps, cfg.mass}, seed,
                                            cfg.T, opts);
      }
    }
    init_.assign(model->dim(), 0.0);
  }
  if (!cfg.init.empty()) {
    if (cfg.init.size() != base_->dim())
      throw UsageError("init", "needs " + std::to_string(base_->dim()) + " entries");
    init_ = cfg.init;
  }
  s0_ = init_;
  if (cfg.orthogonal) {
    if (!spec || spec->kind != ModelKind::blr) throw UsageError("orthogonal", "needs a logistic-regression target");
    const auto& d = spec->data;
    rotated_ = transform_system(*base_, orthogonal_basis(feature_covariance(d.x, d.rows, d.cols), d.cols));
    s0_ = rotated_->rotate(init_);
  }
}

const TransitionSystem& ChainSetup::system() const {
  return rotated_ ? static_cast<const TransitionSystem&>(*rotated_) : *base_;
}

StateSequence ChainSetup::to_output(StateSequence trace) const {
  return rotated_ ? rotated_->unrotate(trace) : trace;
}

std::array<std::size_t, 3> ChainSetup::leapfrog_counters() const {
  if (const auto* h = dynamic_cast<const HmcSystem*>(base_.get()))
    return {h->leapfrog_solves(), h->leapfrog_iterations(), h->fallbacks()};
  return {0, 0, 0};
}

RunOutcome execute_run(const RunConfig& cfg, WorkerPool& pool) {
  cfg.validate();
  std::optional<ModelSpec> spec;
  if (cfg.sampler != SamplerKind::gibbs) spec = resolve_model(cfg);
  std::vector<std::unique_ptr<ChainSetup>> setups;
  for (std::size_t b = 0; b < cfg.B; ++b)
    setups.push_back(std::make_unique<ChainSetup>(cfg, spec ? &*spec : nullptr, b, &pool));

  DeerConfig deer = cfg.deer_config();
  deer.scan.pool = &pool;
  if (cfg.sampler == SamplerKind::gibbs && cfg.method == Method::quasi_deer && deer.preconditioner.empty())
    deer.preconditioner = gibbs_default_preconditioner(EightSchoolsData::synthetic().schools);
  const bool chain_parallel = cfg.method != Method::sequential && cfg.sampler != SamplerKind::hmc_parallel_leapfrog;

  RunOutcome run;
  run.init = setups.front()->init();
  std::vector<ChainOutcome> outcomes(cfg.B);
  std::vector<StateSequence> solver_traces(cfg.B);
  std::vector<std::array<std::size_t, 3>> before(cfg.B);
  auto one_chain = [&](std::size_t b) {
    const auto& setup = *setups[b];
    ChainOutcome o;
    before[b] = setup.leapfrog_counters();
    if (chain_parallel) {
      auto res = run_deer(setup.system(), setup.s0(), deer, cfg.T);
      o.converged = res.converged;
      o.iterations = res.iterations;
      o.passes = res.passes;
      o.delta_history = std::move(res.delta_history);
      o.full_trace = std::move(res.full_trace);
      solver_traces[b] = std::move(res.trace);
    } else {
      solver_traces[b] = sequential_evaluate(setup.system(), setup.s0(), cfg.T);
    }
    outcomes[b] = std::move(o);
  };
  for (std::size_t rep = 0; rep < cfg.warmups + cfg.reps; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.B > 1)
      pool.run_tasks(cfg.B, one_chain);
    else
      one_chain(0);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (rep >= cfg.warmups) run.rep_seconds.push_back(secs);
  }
  run.median_seconds = median(run.rep_seconds);

  for (std::size_t b = 0; b < cfg.B; ++b) {
    auto& o = outcomes[b];
    const auto& setup = *setups[b];
    const auto after = setup.leapfrog_counters();
    o.leapfrog_solves = after[0] - before[b][0];
    o.leapfrog_iterations = after[1] - before[b][1];
    o.leapfrog_fallbacks = after[2] - before[b][2];
    switch (cfg.sampler) {
      case SamplerKind::mala:
      case SamplerKind::hmc:
        o.acceptance = acceptance_rate(accept_decisions(setup.system(), solver_traces[b], setup.s0()));
        break;
      case SamplerKind::hmc_parallel_leapfrog:
        o.trace = setup.to_output(std::move(solver_traces[b]));
        o.acceptance = acceptance_rate(moved_steps(o.trace, setup.init()));
        continue;
      case SamplerKind::gibbs:
        break;
    }
    o.trace = setup.to_output(std::move(solver_traces[b]));
  }
  run.chains = std::move(outcomes);
  return run;
}

nlohmann::json config_echo(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : settings(cfg)) j[k] = v;
  return j;
}

RunConfig config_from_echo(const nlohmann::json& echo) {
  RunConfig cfg;
  for (const auto& [k, v] : echo.items()) apply_setting(cfg, k, v.is_string() ? v.get<std::string>() : v.dump());
  return cfg;
}

nlohmann::json run_report(const RunConfig& cfg, const RunOutcome& run) {
  nlohmann::json chains = nlohmann::json::array();
  bool all = true;
  for (std::size_t b = 0; b < run.chains.size(); ++b) {
    const auto& o = run.chains[b];
    all = all && o.converged;
    nlohmann::json c{{"chain", b},
                     {"seed", chain_seed(cfg.seed, b)},
                     {"converged", o.converged},
                     {"iterations", o.iterations},
                     {"passes", o.passes},
                     {"delta_history", o.delta_history}};
    c["acceptance"] = o.acceptance ? nlohmann::json(*o.acceptance) : nlohmann::json(nullptr);
    if (cfg.sampler == SamplerKind::hmc_parallel_leapfrog)
      c["leapfrog"] = {{"solves", o.leapfrog_solves},
                       {"iterations", o.leapfrog_iterations},
                       {"fallbacks", o.leapfrog_fallbacks},
                       {"mean_iterations",
                        o.leapfrog_solves ? static_cast<double>(o.leapfrog_iterations) / o.leapfrog_solves : 0.0}};
    if (cfg.full_trace) c["full_trace_iterates"] = o.full_trace.size();
    chains.push_back(std::move(c));
  }
  return {{"schema_version", kTraceSchemaVersion},
          {"sampler", to_string(cfg.sampler)},
          {"method", to_string(cfg.method)},
          {"target", resolved_target(cfg)},
          {"T", cfg.T},
          {"B", cfg.B},
          {"warmups", cfg.warmups},
          {"reps", cfg.reps},
          {"rep_seconds", run.rep_seconds},
          {"median_seconds", run.median_seconds},
          {"converged", all},
          {"chains", chains},
          {"config", config_echo(cfg)}};
}

TraceFile to_trace_file(const RunConfig& cfg, const RunOutcome& run) {
  TraceFile f;
  f.T = cfg.T;
  f.B = cfg.B;
  f.D = run.chains.empty() ? 0 : run.chains.front().trace.dim();
  f.sampler = to_string(cfg.sampler);
  f.seed = cfg.seed;
  f.init = run.init;
  f.config = config_echo(cfg);
  for (const auto& c : run.chains) f.chains.push_back(c.trace);
  return f;
}

int cmd_run(const RunConfig& cfg, std::ostream& out) {
  std::unique_ptr<WorkerPool> owned;
  auto& pool = pool_for(cfg, owned);
  const auto run = execute_run(cfg, pool);
  const auto report = run_report(cfg, run);
  if (!cfg.out.empty()) {
    const auto tf = to_trace_file(cfg, run);
    write_trace(cfg.out, tf);
    if (cfg.csv) write_trace_csv(cfg.out + ".csv", tf);
    std::ofstream r(cfg.out + ".report.json", std::ios::trunc);
    if (!r) throw ConfigError("cannot write '" + cfg.out + ".report.json'");
    r << report.dump(2) << '\n';
  }
  out << report.dump(2) << '\n';
  return 0;
}

int cmd_bench(const RunConfig& base, const BenchGrid& grid, std::ostream& csv) {
  base.validate();
  std::unique_ptr<WorkerPool> owned;
  auto& pool = pool_for(base, owned);
  const auto Ts = grid.T.empty() ? std::vector<std::size_t>{base.T} : grid.T;
  const auto Bs = grid.B.empty() ? std::vector<std::size_t>{base.B} : grid.B;
  const auto methods = grid.methods.empty() ? std::vector<Method>{base.method} : grid.methods;
  csv << kBenchHeader << '\n';
  for (const auto m : methods)
    for (const auto b : Bs)
      for (const auto t : Ts) {
        RunConfig cfg = base;
        cfg.method = m;
        cfg.B = b;
        cfg.T = t;
        csv << to_string(cfg.sampler) << ',' << to_string(m) << ',' << b << ',' << t << ',';
        try {
          const auto run = execute_run(cfg, pool);
          std::vector<double> iters;
          std::size_t conv = 0;
          for (const auto& c : run.chains) {
            iters.push_back(static_cast<double>(c.iterations));
            conv += c.converged;
          }
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.6g", run.median_seconds);
          csv << buf << ',' << median(iters) << ',' << static_cast<double>(conv) / static_cast<double>(b) << ",ok\n";
        } catch (const std::exception& e) {
          csv << ",,," << csv_field(std::string("error: ") + e.what()) << '\n';
        }
        csv.flush();
      }
  return 0;
}

nlohmann::json compute_metrics(const MetricsRequest& req, WorkerPool* pool) {
  const auto tf = read_trace(req.trace);
  nlohmann::json res{{"trace", req.trace},
                     {"parameters",
                      {{"thin", req.thin},
                       {"burn_in", req.burn_in},
                       {"max_subsample", req.max_subsample},
                       {"median_reps", req.mh_reps},
                       {"bootstrap", req.bootstrap},
                       {"seed", req.seed}}}};
  const auto wants = [&](const char* w) { return std::find(req.which.begin(), req.which.end(), w) != req.which.end(); };
  for (const auto& w : req.which)
    if (w != "mmd" && w != "ess" && w != "acceptance") throw UsageError("which", "unknown metric '" + w + "'");

  std::optional<SampleSet> ref;
  if (wants("mmd")) {
    if (!req.reference.empty()) {
      const auto rf = read_trace(req.reference);
      if (rf.D != tf.D) throw ContractError("trace and reference dimensions differ");
      ref = stack_chains(rf.chains, req.thin, std::min(req.burn_in, rf.T - 1));
      res["parameters"]["reference"] = req.reference;
    } else if (req.reference_target == "exact") {
      const RunConfig cfg = config_from_echo(tf.config);
      ref = exact_samples(resolve_model(cfg), req.reference_n, req.seed);
      if (ref->dim() != tf.D) throw ContractError("trace and reference dimensions differ");
      res["parameters"]["reference"] = "exact:" + resolved_target(cfg);
      res["parameters"]["reference_n"] = req.reference_n;
    } else if (!req.reference_target.empty()) {
      throw UsageError("reference-target", "only 'exact' is supported");
    } else {
      res["parameters"]["reference"] = "second half of each chain";
    }
  }
  std::optional<double> sigma;
  if (ref) {
    sigma = median_heuristic(*ref, req.max_subsample, req.mh_reps, req.seed);
    res["parameters"]["bandwidth"] = *sigma;
  }

  nlohmann::json chains = nlohmann::json::array();
  for (std::size_t b = 0; b < tf.B; ++b) {
    const auto& chain = tf.chains[b];
    nlohmann::json c{{"chain", b}};
    if (wants("mmd")) {
      const auto x = thin(chain, req.thin, req.burn_in);
      if (ref) {
        c["mmd2"] = mmd_unbiased(x, *ref, *sigma, pool);
        if (req.bootstrap) c["mmd2_se"] = mmd_bootstrap_se(x, *ref, *sigma, req.bootstrap, req.seed + b, pool);
      } else {
        const std::size_t h = x.steps() / 2;
        const SampleSet a(h, x.dim(), std::vector<double>(x.data().begin(), x.data().begin() + h * x.dim()));
        const SampleSet bb(x.steps() - h, x.dim(), std::vector<double>(x.data().begin() + h * x.dim(), x.data().end()));
        const double s = median_heuristic(bb, req.max_subsample, req.mh_reps, req.seed);
        c["bandwidth"] = s;
        c["mmd2"] = mmd_unbiased(a, bb, s, pool);
        if (req.bootstrap) c["mmd2_se"] = mmd_bootstrap_se(a, bb, s, req.bootstrap, req.seed + b, pool);
      }
    }
    if (wants("ess")) {
      const auto e = ess(thin(chain, 1, req.burn_in), pool);
      c["ess"] = {{"per_dim", e.per_dim}, {"min", e.min}, {"mean", e.mean}};
    }
    if (wants("acceptance")) c["acceptance"] = acceptance_rate(moved_steps(chain, tf.init));
    chains.push_back(std::move(c));
  }
  res["chains"] = chains;
  return res;
}

int cmd_metrics(const MetricsRequest& req, std::ostream& out, const std::string& out_path) {
  const auto res = compute_metrics(req);
  if (!out_path.empty()) {
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw ConfigError("cannot write '" + out_path + "'");
    f << res.dump(2) << '\n';
  }
  out << res.dump(2) << '\n';
  return 0;
}

nlohmann::json DiffReport::to_json() const {
  nlohmann::json j{{"pass", pass}, {"max_abs_error", max_abs}};
  if (has_failure)
    j["first_divergence"] = {{"chain", first_chain}, {"step", first_step}, {"dim", first_dim}, {"a", first_a}, {"b", first_b}};
  else
    j["first_divergence"] = nullptr;
  return j;
}

DiffReport diff_traces(const TraceFile& a, const TraceFile& b, double atol, double rtol) {
  if (a.T != b.T || a.B != b.B || a.D != b.D)
    throw StructuralError("diff: shapes differ (" + std::to_string(a.B) + "x" + std::to_string(a.T) + "x" +
                          std::to_string(a.D) + " vs " + std::to_string(b.B) + "x" + std::to_string(b.T) + "x" +
                          std::to_string(b.D) + ")");
  DiffReport r;
  r.per_step.assign(a.B * a.T, 0.0);
  for (std::size_t c = 0; c < a.B; ++c)
    for (std::size_t t = 0; t < a.T; ++t)
      for (std::size_t d = 0; d < a.D; ++d) {
        const double x = a.chains[c](t, d), y = b.chains[c](t, d);
        const double err = std::abs(y - x);
        auto& ps = r.per_step[c * a.T + t];
        ps = std::max(ps, err);
        r.max_abs = std::max(r.max_abs, err);
        const ConvergenceCheck chk = converged(std::span<const double>(&x, 1), std::span<const double>(&y, 1), atol, rtol);
        if (!chk.converged) {
          r.pass = false;
          if (!r.has_failure) {
            r.has_failure = true;
            r.first_chain = c;
            r.first_step = t;
            r.first_dim = d;
            r.first_a = x;
            r.first_b = y;
          }
        }
      }
  return r;
}

int cmd_diff(const std::string& a, const std::string& b, double atol, double rtol, std::ostream& out,
             const std::string& per_step_csv) {
  const auto ta = read_trace(a), tb = read_trace(b);
  const auto r = diff_traces(ta, tb, atol, rtol);
  if (!per_step_csv.empty()) {
    std::ofstream f(per_step_csv, std::ios::trunc);
    if (!f) throw ConfigError("cannot write '" + per_step_csv + "'");
    const std::size_t T = std::max<std::size_t>(1, ta.T);
    f << "chain,t,max_abs_error\n";
    f.precision(17);
    for (std::size_t i = 0; i < r.per_step.size(); ++i) f << i / T << ',' << i % T << ',' << r.per_step[i] << '\n';
  }
  auto j = r.to_json();
  j["atol"] = atol;
  j["rtol"] = rtol;
  out << j.dump(2) << '\n';
  return r.pass ? 0 : 3;
}

}  // namespace deermc::cli
