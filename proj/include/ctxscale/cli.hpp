#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ctxscale {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

/// Runs one `ctxscale` invocation. `args` excludes the program name. Machine
/// output goes to `out` (or to --out files), diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ctxscale
