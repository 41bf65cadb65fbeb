#pragma once

namespace magcath::cli {

// Parses argv and runs one subcommand. Exit codes: 0 success, 2 bad input,
// 3 tracking failure, 4 non-convergence, 1 unexpected error.
int run(int argc, const char* const* argv);

}  // namespace magcath::cli
