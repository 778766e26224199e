#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kolflow {

/// Command-line entry point.
///
/// Exit codes: 0 success, 1 operational error (API code on stderr),
/// 2 usage error. `--output json` emits exactly one JSON document on stdout.
int cli_main(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);
int cli_main(int argc, char **argv);

} // namespace kolflow
