#pragma once

#include <iosfwd>

namespace rwre::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBudget = 3;
inline constexpr int kExitConvergence = 4;

/// Parses the command line, runs one subcommand and writes its artifacts plus
/// manifest.json into the output directory. Errors go to `err` as one JSON line.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rwre::cli
