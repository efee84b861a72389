#pragma once

#include <iosfwd>
#include <string>
#include <string_view>

namespace stiv::cli {

// Exit codes of the `stiv` tool.
enum ExitCode : int {
  exit_ok = 0,
  exit_internal = 1,
  exit_usage = 2,      // unknown subcommand or flag, malformed flag value
  exit_validation = 3, // input file or configuration rejected
  exit_solver = 4,     // a conic solve did not reach optimality
  exit_numerical = 5   // any other numerical failure
};

// Parses argv, runs the subcommand and writes its JSON document (result plus
// run manifest) to `out` or to the --out file. Diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

std::string sha256_hex(std::string_view bytes);

} // namespace stiv::cli
