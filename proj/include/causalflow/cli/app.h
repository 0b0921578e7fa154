#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace causalflow::cli {

/// Exit codes.
inline constexpr int kExitSuccess = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitTrainingFailure = 3;
inline constexpr int kExitBenchmarkFailure = 4;

/// Entry point of the command-line tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace causalflow::cli
