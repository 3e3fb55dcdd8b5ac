#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mirc::cli {

/// Runs one `mirc-lab` invocation. Returns 0 on success, 1 on data or
/// integrity errors, 2 on usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace mirc::cli
