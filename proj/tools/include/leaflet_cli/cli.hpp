#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace leaflet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitFatal = 2;

/// Runs one `leaflet` subcommand. Returns the process exit status.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Same, with argv[0] supplied.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace leaflet::cli
