#pragma once

#include <cstdint>
#include <iosfwd>

namespace glioma {

/// Runs one pipeline subcommand. Returns the process exit code: 0 on success,
/// 1 on a pipeline error (reported as "error: <Class>: <message>"), 2 on a
/// usage error.
int dispatch(int argc, char** argv);

// Randomized finite-difference checks over small op chains; returns the
// number of failing cases.
int run_gradcheck_suite(int cases, std::uint64_t seed, std::ostream& log);

// Quick invariant checks used by `selftest`; returns the number of failures.
int run_selftest(std::ostream& log);

}  // namespace glioma
