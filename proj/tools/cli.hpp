#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace authid::cli {

// Runs one command line (args[0] is the program name). Results go to `out`,
// diagnostics to `err`; `in` feeds `predict` when no file is given. Returns
// the process exit code.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace authid::cli
