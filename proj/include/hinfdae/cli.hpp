#pragma once

#include <string>
#include <vector>

namespace hinfdae::cli {

// Command-line front end: gen, margin, synth, simulate, sweep. Each command
// reads/writes one pipeline directory (benchmark matrices, margin.json,
// rom/, controller/, certificate.json) so the steps are resumable.
//
// Exit codes: 0 success (simulate: stabilized), 2 bad input, 3 no feasible
// margin below gamma-max, 4 not stabilized, 5 diverged, 1 internal failure.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace hinfdae::cli
