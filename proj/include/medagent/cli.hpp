#pragma once

namespace medagent {

// Exit codes (documented in the README):
//   0 success, 1 internal error, 2 usage error, 3 config error,
//   4 data error, 5 backend auth failure, 6 backend failure
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitData = 4;
inline constexpr int kExitAuth = 5;
inline constexpr int kExitBackend = 6;

int dispatch(int argc, const char* const* argv);

}  // namespace medagent
