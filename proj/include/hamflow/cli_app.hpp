#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hamflow {

// Batch front door.  Subcommands: simulate | rearrange | compile-perm |
// synth | steer | verify-orbit.  Exit codes: 0 pass, 2 input error,
// 3 precondition/verdict failure, 4 numeric failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace hamflow
