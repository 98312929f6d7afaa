#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mkdm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;    // bad flags, configs or input files
inline constexpr int kExitRuntime = 3;  // a run failed after its inputs checked out

/// Runs one command line (without the program name) and returns its exit code.
/// Progress and results go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mkdm::cli
