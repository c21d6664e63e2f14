#pragma once

#include <iosfwd>

namespace causalrec::cli {

/// Runs one command line. Returns 0 on success, 2 on a usage error and 1 on
/// any data, configuration or numeric error; diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace causalrec::cli
