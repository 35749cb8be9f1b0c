#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sps::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Runs one command line (without the program name). Returns 0 on success,
/// 1 on a usage error and 2 on a runtime or training error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sps::cli
