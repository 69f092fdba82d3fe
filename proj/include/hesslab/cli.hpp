#pragma once

#include <string>
#include <vector>

namespace hesslab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitDiverged = 2;

// Entry point shared by the executable and the tests; args excludes argv[0].
int run(const std::vector<std::string>& args);

}  // namespace hesslab::cli
