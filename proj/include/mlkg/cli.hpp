#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mlkg {

inline constexpr const char* kVersion = "0.1.0";

// Runs one subcommand. argv[0] is the program name. Data goes to `out`,
// usage and error text to `err`; logs always go to standard error.
int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);
int run_command(const std::vector<std::string>& argv);

}  // namespace mlkg
