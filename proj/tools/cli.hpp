#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sgma::cli {

/// Runs one subcommand; args excludes the program name. Returns the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sgma::cli
