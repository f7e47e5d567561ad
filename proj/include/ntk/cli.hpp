#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ntk {

// Runs one `neurotok` invocation. `args` excludes the program name. Every
// command writes its resolved parameters to <out-dir>/<command>.config.json;
// a --config JSON file supplies defaults and explicit flags win over it.
// Returns the process exit code: 0 iff all outputs were written and
// validated.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err);

}  // namespace ntk
