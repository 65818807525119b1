#pragma once

#include <iosfwd>

namespace prerankcal {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Entry point for the `prerankcal` tool: subcommands train, evaluate,
/// nulltest and tune. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace prerankcal
