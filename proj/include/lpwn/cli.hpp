#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lpwn {

// Entry point of the lpwn tool. args excludes the program name. Failures are
// reported as one line "error:<code>:<message>" on err with a non-zero return.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lpwn
