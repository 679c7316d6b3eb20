#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace moef::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitOracleFailure = 1;
inline constexpr int kExitBadFile = 2;
inline constexpr int kExitUsage = 64;

// Runs one `moef` invocation. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Applies MOEF_LOG={error|info|debug} to the CLI logger.
void configure_logging();

}  // namespace moef::cli
