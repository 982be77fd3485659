#pragma once

#include <iosfwd>

namespace erpgan::cli {

/// Runs the `erpgan` command line. Returns 0 on success, 1 on runtime or data
/// errors, 2 on usage errors. Results go to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace erpgan::cli
