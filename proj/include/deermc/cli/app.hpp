#pragma once

#include <ostream>

namespace deermc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDivergence = 2;
inline constexpr int kExitDiffFailure = 3;

/// Entry point for the `deermc` tool: subcommands run, bench, metrics, diff.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace deermc::cli
