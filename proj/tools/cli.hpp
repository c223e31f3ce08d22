#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace mcb::cli {

/// Runs one command line (without the program name). Returns the exit code.
/// Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "1..5" or "1,3,7".
std::vector<std::uint64_t> parse_seeds(const std::string& text);

}  // namespace mcb::cli
