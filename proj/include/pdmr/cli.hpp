#pragma once

#include <iosfwd>

namespace pdmr {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

/// Entry point of the `pdmr` tool. Reports go to `out`, diagnostics to `err`.
int run_cli(int argc, char const *const *argv, std::ostream &out, std::ostream &err);

} // namespace pdmr
