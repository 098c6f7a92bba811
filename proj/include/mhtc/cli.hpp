// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mhtc {

// Stable exit-code contract.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // verification or validation failure
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;       // I/O or file-format error

/// Seed of the random probe batch used by the verify subcommand's
/// forward-pass delta check (L = 8 positions).
inline constexpr std::uint64_t kProbeSeed = 1337;
inline constexpr std::size_t kProbeLength = 8;

/// Runs one CLI invocation. `args` excludes the program name. Reports go to
/// `out`, diagnostics to `err`; the return value is the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mhtc
