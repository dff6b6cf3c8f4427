#pragma once

namespace overlap {

/// Entry point of the `overlap` tool. Returns the process exit code:
/// 0 success, 2 configuration or usage error, 3 I/O error, 4 classifier
/// protocol error, 1 anything else.
int run_cli(int argc, char** argv);

}  // namespace overlap
