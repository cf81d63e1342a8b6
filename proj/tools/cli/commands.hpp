#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace clci::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // runtime or numeric failure
inline constexpr int kExitUsage = 2;

// Entry point of the `clci` tool. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace clci::cli
