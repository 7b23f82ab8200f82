#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vargan::cli {

// Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
inline constexpr int kOk = 0;
inline constexpr int kInvalid = 1;
inline constexpr int kFailure = 2;

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vargan::cli
