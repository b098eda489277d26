#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "deermc/core/state_sequence.hpp"

namespace deermc::cli {

inline constexpr int kTraceSchemaVersion = 1;

/// B chains of T x D doubles. Payload: raw little-endian f64, chain-major then
/// time-major. Sidecar: `<path>.json`.
struct TraceFile {
  std::size_t T = 0, B = 0, D = 0;
  std::string sampler;
  std::uint64_t seed = 0;
  std::vector<double> init;  // shared initial state
  nlohmann::json config = nlohmann::json::object();
  std::vector<StateSequence> chains;
};

std::string sidecar_path(const std::string& payload_path);

nlohmann::json header_json(const TraceFile& f);

/// Throws StructuralError when chains disagree in shape with T/B/D.
void write_trace(const std::string& path, const TraceFile& f);

/// Throws ConfigError for a missing/invalid sidecar or a payload of the wrong length.
TraceFile read_trace(const std::string& path);

/// Small-trace export: header `chain,t,x0,...`.
void write_trace_csv(const std::string& path, const TraceFile& f);

}  // namespace deermc::cli
