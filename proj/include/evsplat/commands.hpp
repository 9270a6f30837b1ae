#pragma once

#include <ostream>

namespace evsplat {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

/// Entry point of the `evsplat` tool (subcommands simulate, train, render, eval).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace evsplat
