#pragma once

#include <iosfwd>

namespace dtbsm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNotConverged = 3;

/// Command-line entry point. Errors go to `err` as one JSON object per line;
/// results without --out go to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dtbsm
