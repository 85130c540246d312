#pragma once

namespace taskres {

/// Entry point behind the `taskres` binary; exposed for in-process testing.
/// Exit codes: 0 success, 1 usage error, 2 data/validation error,
/// 3 numerical failure.
int run_cli(int argc, const char* const* argv);

}  // namespace taskres
