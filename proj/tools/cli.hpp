#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dfs::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// args excludes the program name. Diagnostics go to err as one line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dfs::cli
