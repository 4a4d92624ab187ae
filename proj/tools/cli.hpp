#pragma once

#include <string>
#include <vector>

namespace dbke::cli {

/// Exit codes of the dbke command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitTransport = 2;

/// Runs `dbke <subcommand> [options]`; args excludes the program name.
/// Logs go to stderr, artifacts under the config's output_root.
int run(const std::vector<std::string>& args);

}  // namespace dbke::cli
