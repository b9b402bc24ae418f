#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace emkrylov::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// Runs one command line (args[0] is the program name). Diagnostics go to
/// `err`, human-readable summaries to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Worker count: `requested` (0 picks the hardware concurrency), capped by
/// `env_cap` when it parses as a positive integer. Never below 1.
std::size_t resolve_threads(std::size_t requested, const char* env_cap);

}  // namespace emkrylov::cli
