#include "deermc/cli/trace_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <boost/endian/conversion.hpp>

#include "deermc/core/errors.hpp"

namespace deermc::cli {
namespace {

void to_little(std::vector<double>& buf) {
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : buf)
      v = std::bit_cast<double>(boost::endian::native_to_little(std::bit_cast<std::uint64_t>(v)));
  }
}

}  // namespace

std::string sidecar_path(const std::string& payload_path) { return payload_path + ".json"; }

nlohmann::json header_json(const TraceFile& f) {
  return {{"schema_version", kTraceSchemaVersion},
          {"T", f.T},
          {"B", f.B},
          {"D", f.D},
          {"dtype", "f64"},
          {"byte_order", "little"},
          {"layout", "chain-major then time-major"},
          {"sampler", f.sampler},
          {"seed", f.seed},
          {"init", f.init},
          {"config", f.config}};
}

void write_trace(const std::string& path, const TraceFile& f) {
  if (f.chains.size() != f.B) throw StructuralError("write_trace: chain count differs from B");
  for (const auto& c : f.chains)
    if (c.steps() != f.T || c.dim() != f.D) throw StructuralError("write_trace: chain shape differs from T x D");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    for (const auto& c : f.chains) {
      std::vector<double> buf(c.data().begin(), c.data().end());
      to_little(buf);
      out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(double)));
    }
    if (!out) throw ConfigError("write failed for '" + path + "'");
  }
  std::ofstream side(sidecar_path(path), std::ios::trunc);
  if (!side) throw ConfigError("cannot write '" + sidecar_path(path) + "'");
  side << header_json(f).dump(2) << '\n';
}

TraceFile read_trace(const std::string& path) {
  std::ifstream side(sidecar_path(path));
  if (!side) throw ConfigError("missing trace header '" + sidecar_path(path) + "'");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(side);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("trace header: ") + e.what());
  }
  TraceFile f;
  try {
    if (h.at("schema_version").get<int>() != kTraceSchemaVersion) throw ConfigError("unsupported trace schema_version");
    if (h.at("dtype").get<std::string>() != "f64" || h.at("byte_order").get<std::string>() != "little")
      throw ConfigError("trace payload must be little-endian f64");
    f.T = h.at("T").get<std::size_t>();
    f.B = h.at("B").get<std::size_t>();
    f.D = h.at("D").get<std::size_t>();
    f.sampler = h.value("sampler", "");
    f.seed = h.value("seed", std::uint64_t{0});
    f.init = h.value("init", std::vector<double>{});
    f.config = h.value("config", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("trace header: ") + e.what());
  }
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw ConfigError("missing trace payload '" + path + "'");
  const auto bytes = static_cast<std::size_t>(in.tellg());
  const std::size_t per_chain = f.T * f.D;
  if (bytes != f.B * per_chain * sizeof(double))
    throw ConfigError("trace payload has " + std::to_string(bytes) + " bytes, header implies " +
                      std::to_string(f.B * per_chain * sizeof(double)));
  in.seekg(0);
  for (std::size_t b = 0; b < f.B; ++b) {
    std::vector<double> buf(per_chain);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(per_chain * sizeof(double)));
    to_little(buf);
    f.chains.emplace_back(f.T, f.D, std::move(buf));
  }
  return f;
}

void write_trace_csv(const std::string& path, const TraceFile& f) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "chain,t";
  for (std::size_t d = 0; d < f.D; ++d) out << ",x" << d;
  out << '\n';
  out.precision(17);
  for (std::size_t b = 0; b < f.chains.size(); ++b)
    for (std::size_t t = 0; t < f.T; ++t) {
      out << b << ',' << t;
      for (std::size_t d = 0; d < f.D; ++d) out << ',' << f.chains[b](t, d);
      out << '\n';
    }
}

}  // namespace deermc::cli
