// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace uc::cli {

// Runs one subcommand; returns the process exit status.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace uc::cli
