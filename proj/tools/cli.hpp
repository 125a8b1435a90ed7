#pragma once

namespace pseudoseg::cli {

// Exit statuses.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kDataError = 2;
inline constexpr int kRuntimeError = 3;

// Parses argv, runs one subcommand and returns its exit status.
int dispatch(int argc, const char* const* argv);

}  // namespace pseudoseg::cli
