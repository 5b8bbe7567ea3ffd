#pragma once

#include <atomic>
#include <iosfwd>
#include <string>
#include <vector>

namespace ren::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;  // e.g. a violated --assert-order
inline constexpr int kInputError = 2;
inline constexpr int kNumericError = 3;

/// Set from a SIGINT handler; training snapshots and stops when it flips.
extern std::atomic<bool> stop_requested;

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ren::cli
