#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace yoto::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitContract = 1;
inline constexpr int kExitIo = 2;

/// Runs one subcommand. `args` excludes the program name. Results go to `out`,
/// diagnostics and the machine-readable error line go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace yoto::cli
