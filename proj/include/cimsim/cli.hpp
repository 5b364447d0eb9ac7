#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cimsim {

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitValidation = 2, kExitRuntime = 3 };

/// Entry point of the `cimsim` tool; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(const std::string& bytes);

}  // namespace cimsim
