#include "deermc/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace deermc::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "inf" || t == "infinity") return std::numeric_limits<double>::infinity();
  double x = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty()) throw UsageError(key, "expected a number, got '" + v + "'");
  return x;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  std::uint64_t x = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty())
    throw UsageError(key, "expected a non-negative integer, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw UsageError(key, "expected true/false, got '" + v + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_real(key, item));
  return out;
}

std::string fmt(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);  // shortest round-trip
  return std::string(buf, p);
}

std::string fmt(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

}  // namespace

std::string to_string(SamplerKind s) {
  switch (s) {
    case SamplerKind::mala: return "mala";
    case SamplerKind::hmc: return "hmc";
    case SamplerKind::hmc_parallel_leapfrog: return "hmc-parallel-leapfrog";
    case SamplerKind::gibbs: return "gibbs";
  }
  return "?";
}

std::string to_string(Method m) {
  switch (m) {
    case Method::sequential: return "sequential";
    case Method::deer_dense: return "deer-dense";
    case Method::quasi_deer: return "quasi-deer";
    case Method::block_quasi_deer: return "block-quasi-deer";
  }
  return "?";
}

const std::vector<std::string>& setting_names() {
  static const std::vector<std::string> names{
      "sampler", "target", "method", "T", "B", "seed", "eps", "leapfrog-steps", "mass", "orthogonal",
      "dim", "prior-precision", "rosenbrock", "init", "atol", "rtol", "max-iters", "hutchinson-samples", "damping",
      "clip", "window", "full-trace", "preconditioner", "warmups", "reps", "threads", "out", "csv"};
  return names;
}

void apply_setting(RunConfig& c, std::string key, const std::string& value) {
  std::replace(key.begin(), key.end(), '_', '-');
  const std::string v = trim(value);
  if (key == "sampler") {
    if (v == "mala") c.sampler = SamplerKind::mala;
    else if (v == "hmc") c.sampler = SamplerKind::hmc;
    else if (v == "hmc-parallel-leapfrog") c.sampler = SamplerKind::hmc_parallel_leapfrog;
    else if (v == "gibbs") c.sampler = SamplerKind::gibbs;
    else throw UsageError(key, "unknown sampler '" + v + "'");
  } else if (key == "method") {
    if (v == "sequential") c.method = Method::sequential;
    else if (v == "deer-dense") c.method = Method::deer_dense;
    else if (v == "quasi-deer") c.method = Method::quasi_deer;
    else if (v == "block-quasi-deer") c.method = Method::block_quasi_deer;
    else throw UsageError(key, "unknown method '" + v + "'");
  } else if (key == "target") c.target = v;
  else if (key == "T") c.T = parse_uint(key, v);
  else if (key == "B") c.B = parse_uint(key, v);
  else if (key == "seed") c.seed = parse_uint(key, v);
  else if (key == "eps") c.eps = parse_real(key, v);
  else if (key == "leapfrog-steps") c.leapfrog_steps = parse_uint(key, v);
  else if (key == "mass") c.mass = parse_list(key, v);
  else if (key == "orthogonal") c.orthogonal = parse_bool(key, v);
  else if (key == "dim") c.dim = parse_uint(key, v);
  else if (key == "prior-precision") c.prior_precision = parse_real(key, v);
  else if (key == "rosenbrock") c.rosenbrock = parse_list(key, v);
  else if (key == "init") c.init = parse_list(key, v);
  else if (key == "atol") c.atol = parse_real(key, v);
  else if (key == "rtol") c.rtol = parse_real(key, v);
  else if (key == "max-iters") c.max_iters = parse_uint(key, v);
  else if (key == "hutchinson-samples") c.hutchinson_samples = parse_uint(key, v);
  else if (key == "damping") c.damping = parse_real(key, v);
  else if (key == "clip") c.clip = parse_real(key, v);
  else if (key == "window") c.window = parse_uint(key, v);
  else if (key == "full-trace") c.full_trace = parse_bool(key, v);
  else if (key == "preconditioner") c.preconditioner = parse_list(key, v);
  else if (key == "warmups") c.warmups = parse_uint(key, v);
  else if (key == "reps") c.reps = parse_uint(key, v);
  else if (key == "threads") c.threads = parse_uint(key, v);
  else if (key == "out") c.out = v;
  else if (key == "csv") c.csv = parse_bool(key, v);
  else throw UsageError(key, "unknown setting");
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config", "cannot open '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config", path + ":" + std::to_string(lineno) + ": expected key=value");
    apply_setting(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

std::vector<std::pair<std::string, std::string>> settings(const RunConfig& c) {
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  return {{"sampler", to_string(c.sampler)},
          {"target", c.target},
          {"method", to_string(c.method)},
          {"T", std::to_string(c.T)},
          {"B", std::to_string(c.B)},
          {"seed", std::to_string(c.seed)},
          {"eps", fmt(c.eps)},
          {"leapfrog-steps", std::to_string(c.leapfrog_steps)},
          {"mass", fmt(c.mass)},
          {"orthogonal", b(c.orthogonal)},
          {"dim", std::to_string(c.dim)},
          {"prior-precision", fmt(c.prior_precision)},
          {"rosenbrock", fmt(c.rosenbrock)},
          {"init", fmt(c.init)},
          {"atol", fmt(c.atol)},
          {"rtol", fmt(c.rtol)},
          {"max-iters", std::to_string(c.max_iters)},
          {"hutchinson-samples", std::to_string(c.hutchinson_samples)},
          {"damping", fmt(c.damping)},
          {"clip", fmt(c.clip)},
          {"window", std::to_string(c.window)},
          {"full-trace", b(c.full_trace)},
          {"preconditioner", fmt(c.preconditioner)},
          {"warmups", std::to_string(c.warmups)},
          {"reps", std::to_string(c.reps)},
          {"threads", std::to_string(c.threads)},
          {"out", c.out},
          {"csv", b(c.csv)}};
}

void RunConfig::validate() const {
  if (T == 0) throw UsageError("T", "must be at least 1");
  if (B == 0) throw UsageError("B", "must be at least 1");
  if (reps == 0) throw UsageError("reps", "must be at least 1");
  if (!(eps > 0)) throw UsageError("eps", "must be positive");
  if (leapfrog_steps == 0) throw UsageError("leapfrog-steps", "must be at least 1");
  for (double m : mass)
    if (!(m > 0)) throw UsageError("mass", "entries must be positive");
  if (!(prior_precision > 0)) throw UsageError("prior-precision", "must be positive");
  if (dim == 0) throw UsageError("dim", "must be at least 1");
  if (rosenbrock.size() != 4 || !(rosenbrock[2] > 0 && rosenbrock[3] > 0))
    throw UsageError("rosenbrock", "expects a,b,var1,var2 with positive variances");
  if (!(atol > 0)) throw UsageError("atol", "must be positive");
  if (!(rtol >= 0)) throw UsageError("rtol", "must be non-negative");
  if (hutchinson_samples == 0) throw UsageError("hutchinson-samples", "must be at least 1");
  if (!(damping > 0 && damping <= 1)) throw UsageError("damping", "must lie in (0, 1]");
  if (!(clip > 0)) throw UsageError("clip", "must be positive");
  for (double p : preconditioner)
    if (!(p > 0)) throw UsageError("preconditioner", "entries must be positive");
  if (method == Method::block_quasi_deer && sampler != SamplerKind::hmc_parallel_leapfrog)
    throw UsageError("method", "block-quasi-deer applies to hmc-parallel-leapfrog only");
  if (sampler == SamplerKind::hmc_parallel_leapfrog && orthogonal)
    throw UsageError("orthogonal", "not supported with hmc-parallel-leapfrog");
  if (sampler == SamplerKind::gibbs && orthogonal) throw UsageError("orthogonal", "not supported with gibbs");
}

DeerConfig RunConfig::deer_config() const {
  DeerConfig d;
  switch (method) {
    case Method::deer_dense: d.mode = JacobianMode::dense; break;
    case Method::block_quasi_deer: d.mode = JacobianMode::block2x2_stochastic; break;
    default: d.mode = JacobianMode::diag_stochastic; break;
  }
  d.atol = atol;
  d.rtol = rtol;
  d.max_iters = max_iters;
  d.hutchinson_samples = hutchinson_samples;
  d.damping = damping;
  d.clip = clip;
  d.window = window;
  d.full_trace = full_trace;
  d.preconditioner = preconditioner;
  return d;
}

}  // namespace deermc::cli
