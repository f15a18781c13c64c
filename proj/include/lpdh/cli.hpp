#pragma once

namespace lpdh {

// Entry point of the `lpdh` tool. Returns 0 on success, 1 when a command
// fails with a diagnostic, 2 on a usage error.
int run_cli(int argc, char** argv);

} // namespace lpdh
