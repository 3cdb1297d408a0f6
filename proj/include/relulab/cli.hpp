#pragma once

#include <string>
#include <vector>

namespace relulab {

/// Runs one subcommand of the command-line tool. args excludes the program
/// name (e.g. {"gradcheck", "--seed", "3"}). Returns 0 on success, 1 on a
/// domain error (bad data, divergence, failed verification), 2 on a usage
/// error. All randomness flows from the --seed flags; identical arguments
/// and input files give byte-identical outputs.
int dispatch(const std::vector<std::string>& args);

}  // namespace relulab
